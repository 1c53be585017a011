//! Vector fields for movement primitives: DMP subsystems, canonical
//! oscillators, basis-function forcing, hierarchy composition, and
//! diffeomorphic rescaling.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

mod diffeo;
mod forcing;
mod hierarchy;
mod oscillators;
mod subsystems;

pub use diffeo::{apply_diffeomorphism, AffineMap, Diffeomorphism, TransformedField};
pub use forcing::{Forcing, GaussianForcing, VonMisesForcing};
pub use hierarchy::{compose_hierarchy, HierarchyField};
pub use oscillators::{HopfParams, VanDerPolParams};
pub use subsystems::{
    eval_discrete_dmp, CanonicalKind, CanonicalSystem, DmpNode, GoalHarmonics, ReferenceSystem,
    TransformKind, TransformationSystem,
};

/// An autonomous ODE right-hand side `x ↦ f(x)` on `R^n`.
///
/// Evaluation is pure: implementations hold no mutable state and are safe to
/// call concurrently. The Jacobian falls back to central finite differences
/// when no analytic form is supplied.
pub trait VectorField: Send + Sync {
    /// State dimension `n`.
    fn dim(&self) -> usize;

    /// Evaluates the field at `x`.
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError>;

    /// Analytic Jacobian `∂f/∂x` at `x`, if the implementation has one.
    fn jacobian_analytic(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        None
    }

    /// Jacobian at `x`: analytic when available, otherwise central finite
    /// differences with step `1e-6 * (1 + |x|)`.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
        match self.jacobian_analytic(x) {
            Some(j) => j,
            None => fd_jacobian(self, x),
        }
    }
}

/// Central-difference Jacobian with step `1e-6 * (1 + |x|)` per coordinate.
pub fn fd_jacobian(field: &(impl VectorField + ?Sized), x: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
    let n = field.dim();
    if x.len() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "state has length {}, field dimension is {}",
            x.len(),
            n
        )));
    }
    let h = 1e-6 * (1.0 + x.norm());
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let fp = field.eval(&xp)?;
        let fm = field.eval(&xm)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

/// A vector field defined by a closure, mostly for tests and ad-hoc systems.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        Ok((self.f)(x))
    }
}

/// An affine field `x ↦ A x + b` with its exact Jacobian.
pub struct AffineField {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineField {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self, CoreError> {
        if !matrix.is_square() || matrix.nrows() != offset.len() {
            return Err(CoreError::DimensionMismatch(
                "affine field needs a square matrix matching the offset".into(),
            ));
        }
        Ok(Self { matrix, offset })
    }

    /// The inhibition-style field `g(x) = gain (goal - x)`.
    pub fn toward(goal: DVector<f64>, gain: f64) -> Self {
        let n = goal.len();
        Self {
            matrix: DMatrix::identity(n, n) * -gain,
            offset: goal * gain,
        }
    }
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        Ok(&self.matrix * x + &self.offset)
    }

    fn jacobian_analytic(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(self.matrix.clone()))
    }
}

/// A linear field `x ↦ A x` with its exact Jacobian.
pub struct LinearField {
    matrix: DMatrix<f64>,
}

impl LinearField {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, CoreError> {
        if !matrix.is_square() {
            return Err(CoreError::DimensionMismatch(
                "linear field matrix must be square".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        Ok(&self.matrix * x)
    }

    fn jacobian_analytic(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(self.matrix.clone()))
    }
}
