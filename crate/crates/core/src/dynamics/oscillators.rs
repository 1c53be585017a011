//! Planar limit-cycle oscillators used as rhythmic canonical systems.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::CoreError;

/// Andronov-Hopf oscillator with a stable circular limit cycle of radius `r`:
///
/// ```text
/// τ ẋ₁ =  ω x₂ + ρ (r² - x₁² - x₂²) x₁
/// τ ẋ₂ = -ω x₁ + ρ (r² - x₁² - x₂²) x₂
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfParams {
    pub omega: f64,
    pub rho: f64,
    pub radius: f64,
}

impl HopfParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.rho > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "hopf rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.radius > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "hopf radius must be positive, got {}",
                self.radius
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector2<f64>, tau: f64) -> Vector2<f64> {
        let radial = self.rho * (self.radius * self.radius - x.norm_squared());
        Vector2::new(
            (self.omega * x.y + radial * x.x) / tau,
            (-self.omega * x.x + radial * x.y) / tau,
        )
    }

    pub fn jacobian(&self, x: &Vector2<f64>, tau: f64) -> Matrix2<f64> {
        let radial = self.rho * (self.radius * self.radius - x.norm_squared());
        Matrix2::new(
            (radial - 2.0 * self.rho * x.x * x.x) / tau,
            (self.omega - 2.0 * self.rho * x.x * x.y) / tau,
            (-self.omega - 2.0 * self.rho * x.x * x.y) / tau,
            (radial - 2.0 * self.rho * x.y * x.y) / tau,
        )
    }
}

/// Van der Pol oscillator.
///
/// The default nonlinearity is `μ (1 - x₁) x₂`; setting `classical` selects
/// the textbook `μ (1 - x₁²) x₂` damping instead.
///
/// ```text
/// τ ẋ₁ = x₂
/// τ ẋ₂ = -ω² x₁ + μ (1 - x₁) x₂
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPolParams {
    pub omega: f64,
    pub mu: f64,
    pub classical: bool,
}

impl VanDerPolParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.omega > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "van der pol omega must be positive, got {}",
                self.omega
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector2<f64>, tau: f64) -> Vector2<f64> {
        let damping = if self.classical {
            self.mu * (1.0 - x.x * x.x)
        } else {
            self.mu * (1.0 - x.x)
        };
        Vector2::new(
            x.y / tau,
            (-self.omega * self.omega * x.x + damping * x.y) / tau,
        )
    }

    pub fn jacobian(&self, x: &Vector2<f64>, tau: f64) -> Matrix2<f64> {
        let (ddamp_dx1, damping) = if self.classical {
            (-2.0 * self.mu * x.x, self.mu * (1.0 - x.x * x.x))
        } else {
            (-self.mu, self.mu * (1.0 - x.x))
        };
        Matrix2::new(
            0.0,
            1.0 / tau,
            (-self.omega * self.omega + ddamp_dx1 * x.y) / tau,
            damping / tau,
        )
    }
}

pub(crate) fn vec2(x: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(x[0], x[1])
}

pub(crate) fn from_vec2(v: Vector2<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[v.x, v.y])
}

pub(crate) fn from_mat2(m: Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}
