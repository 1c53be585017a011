//! Contraction metrics: symmetric, uniformly positive definite matrix
//! functions `M(x)`, optionally with a factor `Θ(x)` such that `M = ΘᵀΘ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Diffeomorphism;
use crate::error::CoreError;

/// A state-dependent metric. Implementations must return symmetric positive
/// definite matrices over the region they are used on.
pub trait Metric: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, CoreError>;

    /// Factor `Θ(x)` with `M = ΘᵀΘ`, if the metric carries one.
    fn factor(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        None
    }

    /// Analytic directional derivative `Ṁ = (∂M/∂x)·f`, if available.
    fn derivative_along(
        &self,
        _x: &DVector<f64>,
        _f: &DVector<f64>,
    ) -> Option<Result<DMatrix<f64>, CoreError>> {
        None
    }

    /// Short identifier used in certificate reports.
    fn id(&self) -> String;
}

/// The identity metric.
pub struct IdentityMetric {
    dim: usize,
}

impl IdentityMetric {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Metric for IdentityMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
        Ok(DMatrix::identity(self.dim, self.dim))
    }

    fn factor(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(DMatrix::identity(self.dim, self.dim)))
    }

    fn derivative_along(
        &self,
        _x: &DVector<f64>,
        _f: &DVector<f64>,
    ) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(DMatrix::zeros(self.dim, self.dim)))
    }

    fn id(&self) -> String {
        "identity".into()
    }
}

/// A constant metric. Validated symmetric positive definite at construction;
/// the factor is the Cholesky transpose.
pub struct ConstantMetric {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    label: String,
}

impl ConstantMetric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, CoreError> {
        if !matrix.is_square() {
            return Err(CoreError::DimensionMismatch("metric must be square".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * (1.0 + matrix.amax()) {
            return Err(CoreError::InvalidParameter(format!(
                "metric is not symmetric (asymmetry {asym:e})"
            )));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| CoreError::Singular("metric is not positive definite".into()))?;
        let factor = chol.l().transpose();
        Ok(Self {
            matrix,
            factor,
            label: "constant".into(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Metric for ConstantMetric {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
        Ok(self.matrix.clone())
    }

    fn factor(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(self.factor.clone()))
    }

    fn derivative_along(
        &self,
        _x: &DVector<f64>,
        _f: &DVector<f64>,
    ) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(DMatrix::zeros(self.dim(), self.dim())))
    }

    fn id(&self) -> String {
        self.label.clone()
    }
}

/// The pushforward of a metric through a diffeomorphism `y' = T(y)`:
///
/// ```text
/// M'(y') = J⁻ᵀ M(T⁻¹(y')) J⁻¹,   J = ∂T/∂y at T⁻¹(y')
/// ```
pub struct PushforwardMetric {
    inner: Arc<dyn Metric>,
    map: Arc<dyn Diffeomorphism>,
}

/// Builds the pushforward metric `M' = J⁻ᵀ M J⁻¹`.
pub fn pushforward_metric(
    metric: Arc<dyn Metric>,
    map: Arc<dyn Diffeomorphism>,
) -> Result<PushforwardMetric, CoreError> {
    if metric.dim() != map.dim() {
        return Err(CoreError::DimensionMismatch(
            "metric and map dimensions differ".into(),
        ));
    }
    Ok(PushforwardMetric { inner: metric, map })
}

impl PushforwardMetric {
    fn j_inverse(&self, y: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
        self.map
            .jacobian(y)
            .try_inverse()
            .ok_or_else(|| CoreError::Singular("map Jacobian is singular".into()))
    }
}

impl Metric for PushforwardMetric {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, y_prime: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
        let y = self.map.inverse(y_prime)?;
        let j_inv = self.j_inverse(&y)?;
        let m = self.inner.eval(&y)?;
        Ok(j_inv.transpose() * m * j_inv)
    }

    fn factor(&self, y_prime: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        let y = match self.map.inverse(y_prime) {
            Ok(y) => y,
            Err(e) => return Some(Err(e)),
        };
        let j_inv = match self.j_inverse(&y) {
            Ok(j) => j,
            Err(e) => return Some(Err(e)),
        };
        let theta = match self.inner.factor(&y)? {
            Ok(t) => t,
            Err(e) => return Some(Err(e)),
        };
        Some(Ok(theta * j_inv))
    }

    fn id(&self) -> String {
        format!("pushforward({})", self.inner.id())
    }
}
