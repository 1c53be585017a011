//! The three DMP subsystems: reference filters, canonical (phase) systems,
//! and transformation systems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

use super::forcing::Forcing;
use super::oscillators::{from_mat2, from_vec2, vec2, HopfParams, VanDerPolParams};
use super::VectorField;

/// First-order low-pass filter on external commands:
/// `ṙ = α ∘ (r_ext - r)` with per-component gains `α > 0`.
#[derive(Debug, Clone)]
pub struct ReferenceSystem {
    gains: DVector<f64>,
    r_ext: DVector<f64>,
}

impl ReferenceSystem {
    pub fn new(gains: DVector<f64>, r_ext: DVector<f64>) -> Result<Self, CoreError> {
        if gains.len() != r_ext.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} filter gains for a {}-dimensional command",
                gains.len(),
                r_ext.len()
            )));
        }
        if gains.iter().any(|&a| !(a > 0.0)) {
            return Err(CoreError::InvalidParameter(
                "reference filter gains must be strictly positive".into(),
            ));
        }
        Ok(Self { gains, r_ext })
    }

    pub fn dim(&self) -> usize {
        self.gains.len()
    }

    pub fn command(&self) -> &DVector<f64> {
        &self.r_ext
    }

    pub fn set_command(&mut self, r_ext: DVector<f64>) -> Result<(), CoreError> {
        if r_ext.len() != self.gains.len() {
            return Err(CoreError::DimensionMismatch(
                "command dimension changed".into(),
            ));
        }
        self.r_ext = r_ext;
        Ok(())
    }

    pub fn eval(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut dr = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            dr[i] = self.gains[i] * (self.r_ext[i] - r[i]);
        }
        dr
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&(-self.gains.clone()))
    }
}

impl VectorField for ReferenceSystem {
    fn dim(&self) -> usize {
        self.gains.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        Ok(ReferenceSystem::eval(self, x))
    }

    fn jacobian_analytic(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        Some(Ok(self.jacobian()))
    }
}

/// Which phase dynamics a canonical system carries.
#[derive(Clone)]
pub enum CanonicalKind {
    /// `τ ẋ = -α_x x`: a scalar phase that decays smoothly to zero.
    ExponentialDecay { alpha_x: f64 },
    /// Stable Andronov-Hopf oscillator (planar).
    Hopf(HopfParams),
    /// Van der Pol oscillator (planar).
    VanDerPol(VanDerPolParams),
    /// User-supplied phase dynamics. Treated as not rotation-invariant; the
    /// shared `τ` still divides the field.
    Custom(Arc<dyn VectorField>),
}

impl std::fmt::Debug for CanonicalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CanonicalKind::ExponentialDecay { alpha_x } => f
                .debug_struct("ExponentialDecay")
                .field("alpha_x", alpha_x)
                .finish(),
            CanonicalKind::Hopf(p) => f.debug_tuple("Hopf").field(p).finish(),
            CanonicalKind::VanDerPol(p) => f.debug_tuple("VanDerPol").field(p).finish(),
            CanonicalKind::Custom(v) => {
                f.debug_struct("Custom").field("dim", &v.dim()).finish()
            }
        }
    }
}

/// A canonical system: phase dynamics plus the shared time scale `τ`.
#[derive(Debug, Clone)]
pub struct CanonicalSystem {
    pub kind: CanonicalKind,
    pub tau: f64,
}

impl CanonicalSystem {
    pub fn new(kind: CanonicalKind, tau: f64) -> Result<Self, CoreError> {
        if !(tau > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "time scale must be positive, got {tau}"
            )));
        }
        match &kind {
            CanonicalKind::ExponentialDecay { alpha_x } => {
                if !(*alpha_x > 0.0) {
                    return Err(CoreError::InvalidParameter(format!(
                        "decay rate must be positive, got {alpha_x}"
                    )));
                }
            }
            CanonicalKind::Hopf(p) => p.validate()?,
            CanonicalKind::VanDerPol(p) => p.validate()?,
            CanonicalKind::Custom(field) => {
                if field.dim() == 0 {
                    return Err(CoreError::InvalidParameter(
                        "custom phase dynamics need a positive dimension".into(),
                    ));
                }
            }
        }
        Ok(Self { kind, tau })
    }

    pub fn hopf(omega: f64, rho: f64, radius: f64, tau: f64) -> Result<Self, CoreError> {
        Self::new(
            CanonicalKind::Hopf(HopfParams { omega, rho, radius }),
            tau,
        )
    }

    pub fn van_der_pol(omega: f64, mu: f64, classical: bool, tau: f64) -> Result<Self, CoreError> {
        Self::new(
            CanonicalKind::VanDerPol(VanDerPolParams {
                omega,
                mu,
                classical,
            }),
            tau,
        )
    }

    pub fn exponential_decay(alpha_x: f64, tau: f64) -> Result<Self, CoreError> {
        Self::new(CanonicalKind::ExponentialDecay { alpha_x }, tau)
    }

    pub fn custom(field: Arc<dyn VectorField>, tau: f64) -> Result<Self, CoreError> {
        Self::new(CanonicalKind::Custom(field), tau)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            CanonicalKind::ExponentialDecay { .. } => 1,
            CanonicalKind::Hopf(_) | CanonicalKind::VanDerPol(_) => 2,
            CanonicalKind::Custom(field) => field.dim(),
        }
    }

    /// True when the phase dynamics commute with planar rotations, which is
    /// what phase-offset coupling requires.
    pub fn rotation_invariant(&self) -> bool {
        matches!(self.kind, CanonicalKind::Hopf(_))
    }
}

impl VectorField for CanonicalSystem {
    fn dim(&self) -> usize {
        CanonicalSystem::dim(self)
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        if x.len() != self.dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "canonical state has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match &self.kind {
            CanonicalKind::ExponentialDecay { alpha_x } => {
                DVector::from_element(1, -alpha_x * x[0] / self.tau)
            }
            CanonicalKind::Hopf(p) => from_vec2(p.eval(&vec2(x), self.tau)),
            CanonicalKind::VanDerPol(p) => from_vec2(p.eval(&vec2(x), self.tau)),
            CanonicalKind::Custom(field) => field.eval(x)? / self.tau,
        })
    }

    fn jacobian_analytic(&self, x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        if x.len() != self.dim() {
            return Some(Err(CoreError::DimensionMismatch(format!(
                "canonical state has length {}, expected {}",
                x.len(),
                self.dim()
            ))));
        }
        Some(match &self.kind {
            CanonicalKind::ExponentialDecay { alpha_x } => {
                Ok(DMatrix::from_element(1, 1, -alpha_x / self.tau))
            }
            CanonicalKind::Hopf(p) => Ok(from_mat2(p.jacobian(&vec2(x), self.tau))),
            CanonicalKind::VanDerPol(p) => Ok(from_mat2(p.jacobian(&vec2(x), self.tau))),
            CanonicalKind::Custom(field) => field.jacobian(x).map(|j| j / self.tau),
        })
    }
}

/// A phase- and reference-dependent goal: a constant offset plus a
/// speed-scaled harmonic series in the oscillator angle.
///
/// `g(x, r) = c + (a₀ + a₁ v) Σ_h (A_h cos(hθ) + B_h sin(hθ))` with
/// `θ = atan2(x₂, x₁)` and `v` the first reference component (zero when no
/// reference is attached).
#[derive(Debug, Clone)]
pub struct GoalHarmonics {
    pub center: f64,
    pub amp_const: f64,
    pub amp_per_speed: f64,
    /// `(cos coefficient, sin coefficient)` for harmonics `h = 1, 2, …`.
    pub harmonics: Vec<(f64, f64)>,
}

impl GoalHarmonics {
    fn amplitude(&self, r: Option<&DVector<f64>>) -> f64 {
        let v = r.map(|r| if r.is_empty() { 0.0 } else { r[0] }).unwrap_or(0.0);
        self.amp_const + self.amp_per_speed * v
    }

    /// Goal position at angle `θ`.
    pub fn position(&self, theta: f64, r: Option<&DVector<f64>>) -> f64 {
        let mut s = 0.0;
        for (h, (a, b)) in self.harmonics.iter().enumerate() {
            let n = (h + 1) as f64;
            s += a * (n * theta).cos() + b * (n * theta).sin();
        }
        self.center + self.amplitude(r) * s
    }

    /// Goal velocity: `ds/dθ · θ̇` with the supplied nominal phase rate.
    pub fn velocity(&self, theta: f64, theta_dot: f64, r: Option<&DVector<f64>>) -> f64 {
        let mut ds = 0.0;
        for (h, (a, b)) in self.harmonics.iter().enumerate() {
            let n = (h + 1) as f64;
            ds += n * (-a * (n * theta).sin() + b * (n * theta).cos());
        }
        self.amplitude(r) * ds * theta_dot
    }
}

/// How a transformation system shapes its output.
#[derive(Debug, Clone)]
pub enum TransformKind {
    /// `τ ÿ = k (g - y) - b ẏ + f(x)` with a fixed goal and optional forcing.
    SpringDamper {
        goal: f64,
        forcing: Option<Forcing>,
    },
    /// `τ ÿ = k (g_θ(x, r) - y) + b (g_θ̇(x, r) - ẏ)`: position and velocity
    /// goals driven by the oscillator angle and the reference.
    TrackingGoals {
        position: GoalHarmonics,
        velocity_phase_rate: f64,
    },
}

/// A second-order spring-damper output stage. State is `(y, ẏ)`.
#[derive(Debug, Clone)]
pub struct TransformationSystem {
    pub k: f64,
    pub b: f64,
    pub tau: f64,
    pub kind: TransformKind,
}

impl TransformationSystem {
    pub fn new(k: f64, b: f64, tau: f64, kind: TransformKind) -> Result<Self, CoreError> {
        if !(k > 0.0) || !(b > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "spring and damper must be positive, got k = {k}, b = {b}"
            )));
        }
        if !(tau > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "time scale must be positive, got {tau}"
            )));
        }
        Ok(Self { k, b, tau, kind })
    }

    /// Derivative of `(y, ẏ)` given the canonical state and optional
    /// reference state.
    pub fn eval(
        &self,
        y: f64,
        ydot: f64,
        canonical: &[f64],
        r: Option<&DVector<f64>>,
    ) -> Result<(f64, f64), CoreError> {
        let accel = match &self.kind {
            TransformKind::SpringDamper { goal, forcing } => {
                let f = match forcing {
                    Some(f) => f.eval(canonical)?,
                    None => 0.0,
                };
                (self.k * (goal - y) - self.b * ydot + f) / self.tau
            }
            TransformKind::TrackingGoals {
                position,
                velocity_phase_rate,
            } => {
                if canonical.len() != 2 {
                    return Err(CoreError::DimensionMismatch(
                        "tracking goals need a planar canonical state".into(),
                    ));
                }
                let theta = canonical[1].atan2(canonical[0]);
                let g = position.position(theta, r);
                let gdot = position.velocity(theta, *velocity_phase_rate, r);
                (self.k * (g - y) + self.b * (gdot - ydot)) / self.tau
            }
        };
        Ok((ydot, accel))
    }
}

/// One primitive: an optional reference filter, a canonical system, and any
/// number of transformation systems sharing that phase.
#[derive(Debug, Clone)]
pub struct DmpNode {
    pub reference: Option<ReferenceSystem>,
    pub canonical: CanonicalSystem,
    pub transforms: Vec<TransformationSystem>,
}

impl DmpNode {
    pub fn discrete(
        canonical: CanonicalSystem,
        transform: TransformationSystem,
    ) -> Result<Self, CoreError> {
        if !matches!(canonical.kind, CanonicalKind::ExponentialDecay { .. }) {
            return Err(CoreError::Precondition(
                "discrete primitives use an exponential-decay canonical system".into(),
            ));
        }
        Ok(Self {
            reference: None,
            canonical,
            transforms: vec![transform],
        })
    }
}

/// Derivative of a discrete DMP at state `(y, ẏ, x)`:
///
/// ```text
/// ÿ = (k (g - y) - b ẏ + f(x)) / τ,    ẋ = -α_x x / τ
/// ```
pub fn eval_discrete_dmp(node: &DmpNode, state: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
    let CanonicalKind::ExponentialDecay { alpha_x } = node.canonical.kind else {
        return Err(CoreError::Precondition(
            "discrete evaluation needs an exponential-decay canonical system".into(),
        ));
    };
    if node.transforms.len() != 1 {
        return Err(CoreError::Precondition(
            "discrete evaluation expects a single transformation system".into(),
        ));
    }
    if state.len() != 3 {
        return Err(CoreError::DimensionMismatch(format!(
            "discrete DMP state is (y, ẏ, x), got length {}",
            state.len()
        )));
    }
    let (y, ydot, x) = (state[0], state[1], state[2]);
    let (dy, ddy) = node.transforms[0].eval(y, ydot, &[x], None)?;
    let dx = -alpha_x * x / node.canonical.tau;
    Ok(DVector::from_column_slice(&[dy, ddy, dx]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GaussianForcing;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn sample_node(weights: Vec<f64>) -> DmpNode {
        let canonical = CanonicalSystem::exponential_decay(4.0, 1.0).unwrap();
        let forcing = GaussianForcing::new(vec![0.2, 0.5, 0.8], 0.25, weights).unwrap();
        let transform = TransformationSystem::new(
            25.0,
            10.0,
            1.0,
            TransformKind::SpringDamper {
                goal: 1.5,
                forcing: Some(Forcing::Gaussian(forcing)),
            },
        )
        .unwrap();
        DmpNode::discrete(canonical, transform).unwrap()
    }

    #[test]
    fn rest_at_goal_is_an_equilibrium() {
        let node = sample_node(vec![3.0, -1.0, 2.0]);
        let state = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
        let d = eval_discrete_dmp(&node, &state).unwrap();
        assert_abs_diff_eq!(d.norm(), 0.0);
    }

    #[test]
    fn phase_decays_at_the_analytic_rate() {
        // τ ẋ = -α_x x integrates to x(t) = x₀ exp(-α_x t / τ).
        let node = sample_node(vec![0.0; 3]);
        let canonical = node.canonical.clone();
        let field = super::super::FnField::new(1, move |x: &DVector<f64>| {
            VectorField::eval(&canonical, x).unwrap()
        });
        let cfg = crate::simulate::IntegratorConfig::new(1e-4, 1.0).unwrap();
        let traj =
            crate::simulate::integrate(&field, &DVector::from_element(1, 0.7), &cfg).unwrap();
        let x1 = traj.states.last().unwrap()[0];
        assert_relative_eq!(x1 / 0.7, (-4.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn zero_weights_leave_the_unforced_field() {
        let node = sample_node(vec![0.0; 3]);
        for &x in &[0.0, 0.3, 0.9] {
            let state = DVector::from_column_slice(&[0.2, -0.4, x]);
            let d = eval_discrete_dmp(&node, &state).unwrap();
            let expected = (25.0 * (1.5 - 0.2) - 10.0 * (-0.4)) / 1.0;
            assert_relative_eq!(d[1], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        assert!(TransformationSystem::new(
            0.0,
            1.0,
            1.0,
            TransformKind::SpringDamper {
                goal: 0.0,
                forcing: None
            }
        )
        .is_err());
        assert!(CanonicalSystem::exponential_decay(1.0, 0.0).is_err());
        assert!(CanonicalSystem::hopf(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(ReferenceSystem::new(
            DVector::from_column_slice(&[1.0, -2.0]),
            DVector::zeros(2)
        )
        .is_err());
    }

    #[test]
    fn custom_canonical_dynamics_carry_the_time_scale() {
        // Planar rotation with an appended decaying coordinate.
        let field = std::sync::Arc::new(super::super::FnField::new(3, |x: &DVector<f64>| {
            DVector::from_column_slice(&[x[1], -x[0], -x[2]])
        }));
        let canonical = CanonicalSystem::custom(field, 2.0).unwrap();
        assert_eq!(canonical.dim(), 3);
        assert!(!canonical.rotation_invariant());
        let x = DVector::from_column_slice(&[1.0, 0.5, -0.3]);
        let dx = VectorField::eval(&canonical, &x).unwrap();
        assert_relative_eq!(dx[0], 0.25);
        assert_relative_eq!(dx[1], -0.5);
        assert_relative_eq!(dx[2], 0.15);
        let jac = canonical.jacobian(&x).unwrap();
        assert_relative_eq!(jac[(0, 1)], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn goal_harmonics_derivative_is_consistent() {
        let g = GoalHarmonics {
            center: 0.2,
            amp_const: 1.0,
            amp_per_speed: 0.0,
            harmonics: vec![(0.5, -0.3), (0.0, 0.2)],
        };
        let theta = 0.7;
        let dtheta = 1e-6;
        let fd = (g.position(theta + dtheta, None) - g.position(theta - dtheta, None))
            / (2.0 * dtheta);
        assert_relative_eq!(g.velocity(theta, 1.0, None), fd, epsilon = 1e-8);
    }
}
