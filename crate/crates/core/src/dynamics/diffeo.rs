//! Diffeomorphic scaling of vector fields: `y' = T(y)` carries
//! `ẏ = f(y)` to `τ ẏ' = J(y) f(y) |_{y = T⁻¹(y')}`, rotating, scaling, and
//! translating the attractor landscape.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

use super::VectorField;

/// A smooth invertible map with an explicit Jacobian.
pub trait Diffeomorphism: Send + Sync {
    fn dim(&self) -> usize;
    fn forward(&self, y: &DVector<f64>) -> DVector<f64>;
    fn inverse(&self, y_prime: &DVector<f64>) -> Result<DVector<f64>, CoreError>;
    /// `J = ∂T/∂y` evaluated at `y`.
    fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64>;
}

/// Affine map `T(y) = A y + b` with invertible `A`. With `A = s R` this is
/// the rotation/scaling/translation special case.
pub struct AffineMap {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, CoreError> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(CoreError::DimensionMismatch(
                "affine map needs a square matrix matching the offset".into(),
            ));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| CoreError::Singular("affine map matrix is not invertible".into()))?;
        Ok(Self { a, a_inv, b })
    }

    /// `T(y) = s R y + b` for a planar rotation by `angle`.
    pub fn scaled_rotation_2d(scale: f64, angle: f64, b: DVector<f64>) -> Result<Self, CoreError> {
        if !(scale > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "scale must be positive, got {scale}"
            )));
        }
        let (s, c) = angle.sin_cos();
        let a = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * scale;
        Self::new(a, b)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            a_inv: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn matrix_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }
}

impl Diffeomorphism for AffineMap {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn forward(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.a * y + &self.b
    }

    fn inverse(&self, y_prime: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        Ok(&self.a_inv * (y_prime - &self.b))
    }

    fn jacobian(&self, _y: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// The transformed field `ẏ' = J(y) f(y) |_{y = T⁻¹(y')} / τ`.
pub struct TransformedField<'a> {
    field: &'a dyn VectorField,
    map: &'a dyn Diffeomorphism,
    tau: f64,
}

/// Applies a diffeomorphism and a constant time scale to a field. The time
/// scale must be uniformly positive.
pub fn apply_diffeomorphism<'a>(
    field: &'a dyn VectorField,
    map: &'a dyn Diffeomorphism,
    tau: f64,
) -> Result<TransformedField<'a>, CoreError> {
    if map.dim() != field.dim() {
        return Err(CoreError::DimensionMismatch(format!(
            "map dimension {} does not match field dimension {}",
            map.dim(),
            field.dim()
        )));
    }
    if !(tau > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "time scale must be uniformly positive, got {tau}"
        )));
    }
    Ok(TransformedField { field, map, tau })
}

impl VectorField for TransformedField<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, y_prime: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        let y = self.map.inverse(y_prime)?;
        let f = self.field.eval(&y)?;
        Ok(self.map.jacobian(&y) * f / self.tau)
    }

    fn jacobian_analytic(&self, y_prime: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        // Exact for affine maps, where J is constant: A' = J A J⁻¹ / τ.
        let y = match self.map.inverse(y_prime) {
            Ok(y) => y,
            Err(e) => return Some(Err(e)),
        };
        let inner = match self.field.jacobian(&y) {
            Ok(j) => j,
            Err(e) => return Some(Err(e)),
        };
        let j = self.map.jacobian(&y);
        let j_inv = match j.clone().try_inverse() {
            Some(inv) => inv,
            None => return Some(Err(CoreError::Singular("map Jacobian is singular".into()))),
        };
        Some(Ok(j * inner * j_inv / self.tau))
    }
}
