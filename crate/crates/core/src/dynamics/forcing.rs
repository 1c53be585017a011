//! Normalized basis-function forcing terms.
//!
//! Discrete primitives use Gaussian bases in the scalar phase `x`,
//!
//! ```text
//! f(x) = (Σ_i Φ_i(x) w_i / Σ_i Φ_i(x)) · x,   Φ_i(x) = exp(-(x - c_i)² / (2σ₁²))
//! ```
//!
//! and rhythmic primitives use von Mises bases in the oscillator angle
//! `θ(x) = atan2(x₂, x₁)`,
//!
//! ```text
//! f(x) = (Σ_i Φ_i(θ) w_iᵀ / Σ_i Φ_i(θ)) · x,  Φ_i(θ) = exp((cos(θ - θ_i) - 1) / (2σ₁²))
//! ```
//!
//! Both are partition-normalized mixtures scaled by the phase argument, so
//! the forcing vanishes at the origin of the canonical state.

use nalgebra::Vector2;

use crate::error::CoreError;

/// The normalized denominator must stay above this floor; below it the basis
/// mixture is numerically meaningless.
const ACTIVATION_FLOOR: f64 = 1e-300;

/// Gaussian basis forcing in a scalar phase.
#[derive(Debug, Clone)]
pub struct GaussianForcing {
    centers: Vec<f64>,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianForcing {
    pub fn new(centers: Vec<f64>, sigma: f64, weights: Vec<f64>) -> Result<Self, CoreError> {
        if centers.is_empty() {
            return Err(CoreError::InvalidParameter(
                "forcing needs at least one basis".into(),
            ));
        }
        if !(sigma > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "basis width must be positive, got {sigma}"
            )));
        }
        if weights.len() != centers.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} weights for {} centers",
                weights.len(),
                centers.len()
            )));
        }
        Ok(Self {
            centers,
            sigma,
            weights,
        })
    }

    /// Evenly spaced centers over `[lo, hi]`, zero weights.
    pub fn evenly_spaced(n: usize, lo: f64, hi: f64, sigma: f64) -> Result<Self, CoreError> {
        if n == 0 {
            return Err(CoreError::InvalidParameter(
                "forcing needs at least one basis".into(),
            ));
        }
        let centers = (0..n)
            .map(|i| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        Self::new(centers, sigma, vec![0.0; n])
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<(), CoreError> {
        if weights.len() != self.centers.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} weights for {} centers",
                weights.len(),
                self.centers.len()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    /// Basis activations `Φ_i(x)`.
    pub fn activations(&self, phase: f64) -> Vec<f64> {
        let s2 = 2.0 * self.sigma * self.sigma;
        self.centers
            .iter()
            .map(|c| (-(phase - c).powi(2) / s2).exp())
            .collect()
    }

    /// Normalized mixture times the phase: `(ΣΦ_i w_i / ΣΦ_i) x`.
    pub fn eval(&self, phase: f64) -> Result<f64, CoreError> {
        let phi = self.activations(phase);
        let denom: f64 = phi.iter().sum();
        if !(denom > ACTIVATION_FLOOR) {
            return Err(CoreError::DegenerateBasis(denom));
        }
        let num: f64 = phi
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum();
        Ok(num / denom * phase)
    }
}

/// Von Mises basis forcing in the angle of a planar phase state. Each basis
/// carries a 2-vector weight applied as `w_iᵀ x`.
#[derive(Debug, Clone)]
pub struct VonMisesForcing {
    centers: Vec<f64>,
    sigma: f64,
    weights: Vec<Vector2<f64>>,
}

impl VonMisesForcing {
    pub fn new(
        centers: Vec<f64>,
        sigma: f64,
        weights: Vec<Vector2<f64>>,
    ) -> Result<Self, CoreError> {
        if centers.is_empty() {
            return Err(CoreError::InvalidParameter(
                "forcing needs at least one basis".into(),
            ));
        }
        if !(sigma > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "basis width must be positive, got {sigma}"
            )));
        }
        if weights.len() != centers.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} weights for {} centers",
                weights.len(),
                centers.len()
            )));
        }
        Ok(Self {
            centers,
            sigma,
            weights,
        })
    }

    /// Evenly spaced angular centers over `[0, 2π)`, zero weights.
    pub fn evenly_spaced(n: usize, sigma: f64) -> Result<Self, CoreError> {
        if n == 0 {
            return Err(CoreError::InvalidParameter(
                "forcing needs at least one basis".into(),
            ));
        }
        let centers = (0..n)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / n as f64)
            .collect();
        Self::new(centers, sigma, vec![Vector2::zeros(); n])
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[Vector2<f64>] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<Vector2<f64>>) -> Result<(), CoreError> {
        if weights.len() != self.centers.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} weights for {} centers",
                weights.len(),
                self.centers.len()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    /// Basis activations `Φ_i(θ)` at angle `θ`.
    pub fn activations(&self, theta: f64) -> Vec<f64> {
        let s2 = 2.0 * self.sigma * self.sigma;
        self.centers
            .iter()
            .map(|c| (((theta - c).cos() - 1.0) / s2).exp())
            .collect()
    }

    /// Normalized mixture applied to the planar phase:
    /// `(ΣΦ_i(θ) w_iᵀ / ΣΦ_i(θ)) x` with `θ = atan2(x₂, x₁)`.
    pub fn eval(&self, phase: &Vector2<f64>) -> Result<f64, CoreError> {
        let theta = phase.y.atan2(phase.x);
        let phi = self.activations(theta);
        let denom: f64 = phi.iter().sum();
        if !(denom > ACTIVATION_FLOOR) {
            return Err(CoreError::DegenerateBasis(denom));
        }
        let mut mixed = Vector2::zeros();
        for (p, w) in phi.iter().zip(&self.weights) {
            mixed += *w * *p;
        }
        Ok(mixed.dot(phase) / denom)
    }
}

/// Either forcing kind, dispatched by the canonical phase it consumes.
#[derive(Debug, Clone)]
pub enum Forcing {
    Gaussian(GaussianForcing),
    VonMises(VonMisesForcing),
}

impl Forcing {
    /// Evaluates against a canonical state slice: length 1 for Gaussian
    /// forcing, length 2 for von Mises.
    pub fn eval(&self, canonical_state: &[f64]) -> Result<f64, CoreError> {
        match self {
            Forcing::Gaussian(g) => {
                if canonical_state.len() != 1 {
                    return Err(CoreError::DimensionMismatch(format!(
                        "gaussian forcing takes a scalar phase, got dimension {}",
                        canonical_state.len()
                    )));
                }
                g.eval(canonical_state[0])
            }
            Forcing::VonMises(v) => {
                if canonical_state.len() != 2 {
                    return Err(CoreError::DimensionMismatch(format!(
                        "von Mises forcing takes a planar phase, got dimension {}",
                        canonical_state.len()
                    )));
                }
                v.eval(&Vector2::new(canonical_state[0], canonical_state[1]))
            }
        }
    }
}
