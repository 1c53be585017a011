//! Least-squares recovery of forcing-function weights from demonstrations.
//!
//! Rearranging the transformation dynamics gives the per-sample target
//! `f*(t) = τ ÿ - k (g - y) + b ẏ`; fitting the normalized basis mixture to
//! those targets along the matching phase rollout is a linear problem in the
//! weights, solved globally with an optional ridge term.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::CoreError;
use crate::simulate::Trajectory;

/// Transformation-system parameters a demonstration was recorded under.
#[derive(Debug, Clone, Copy)]
pub struct DmpParams {
    pub k: f64,
    pub b: f64,
    pub g: f64,
    pub tau: f64,
}

/// A recorded output trajectory `y(t), ẏ(t)[, ÿ(t)]`. The acceleration is
/// differentiated numerically when absent.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    pub yddot: Option<Vec<f64>>,
    pub params: DmpParams,
}

impl Demonstration {
    pub fn new(
        times: Vec<f64>,
        y: Vec<f64>,
        ydot: Vec<f64>,
        yddot: Option<Vec<f64>>,
        params: DmpParams,
    ) -> Result<Self, CoreError> {
        let n = times.len();
        if n < 2 || y.len() != n || ydot.len() != n {
            return Err(CoreError::DimensionMismatch(
                "demonstration series lengths must agree and hold at least two samples".into(),
            ));
        }
        if let Some(ydd) = &yddot {
            if ydd.len() != n {
                return Err(CoreError::DimensionMismatch(
                    "acceleration series length must match".into(),
                ));
            }
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CoreError::InvalidParameter(
                "time grid must be strictly increasing".into(),
            ));
        }
        let finite = times.iter().chain(&y).chain(&ydot).all(|v| v.is_finite())
            && yddot
                .as_ref()
                .map(|s| s.iter().all(|v| v.is_finite()))
                .unwrap_or(true);
        if !finite {
            return Err(CoreError::InvalidParameter(
                "demonstration contains non-finite values".into(),
            ));
        }
        if !(params.k > 0.0 && params.b > 0.0 && params.tau > 0.0) {
            return Err(CoreError::InvalidParameter(
                "demonstration parameters k, b, tau must be positive".into(),
            ));
        }
        Ok(Self {
            times,
            y,
            ydot,
            yddot,
            params,
        })
    }
}

/// Second-order three-point differentiation on a possibly non-uniform grid,
/// one-sided at the endpoints.
fn differentiate(times: &[f64], series: &[f64]) -> Result<Vec<f64>, CoreError> {
    let n = times.len();
    if n < 3 {
        return Err(CoreError::Precondition(
            "need at least three samples to differentiate".into(),
        ));
    }
    let mut out = vec![0.0; n];
    let stencil = |t: f64, t0: f64, t1: f64, t2: f64, y0: f64, y1: f64, y2: f64| -> f64 {
        y0 * (2.0 * t - t1 - t2) / ((t0 - t1) * (t0 - t2))
            + y1 * (2.0 * t - t0 - t2) / ((t1 - t0) * (t1 - t2))
            + y2 * (2.0 * t - t0 - t1) / ((t2 - t0) * (t2 - t1))
    };
    for i in 0..n {
        let j = i.clamp(1, n - 2);
        out[i] = stencil(
            times[i],
            times[j - 1],
            times[j],
            times[j + 1],
            series[j - 1],
            series[j],
            series[j + 1],
        );
    }
    Ok(out)
}

/// Per-sample forcing targets `f*(t) = τ ÿ - k (g - y) + b ẏ`.
pub fn compute_target_forcing(demo: &Demonstration) -> Result<Vec<f64>, CoreError> {
    let yddot = match &demo.yddot {
        Some(ydd) => ydd.clone(),
        None => differentiate(&demo.times, &demo.ydot)?,
    };
    let p = demo.params;
    Ok(demo
        .y
        .iter()
        .zip(&demo.ydot)
        .zip(&yddot)
        .map(|((y, yd), ydd)| p.tau * ydd - p.k * (p.g - y) + p.b * yd)
        .collect())
}

/// Basis layout for a fit, without weights.
#[derive(Debug, Clone)]
pub enum BasisSpec {
    Gaussian { centers: Vec<f64>, sigma: f64 },
    VonMises { centers: Vec<f64>, sigma: f64 },
}

impl BasisSpec {
    fn n_weights(&self) -> usize {
        match self {
            BasisSpec::Gaussian { centers, .. } => centers.len(),
            BasisSpec::VonMises { centers, .. } => 2 * centers.len(),
        }
    }
}

/// The canonical phase along the demonstration, aligned sample-for-sample.
#[derive(Debug, Clone)]
pub enum PhaseRollout {
    Scalar(Vec<f64>),
    Planar(Vec<Vector2<f64>>),
}

impl PhaseRollout {
    pub fn len(&self) -> usize {
        match self {
            PhaseRollout::Scalar(v) => v.len(),
            PhaseRollout::Planar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Analytic rollout of the exponential-decay canonical system:
/// `x(t) = x₀ exp(-α_x t / τ)`.
pub fn decay_rollout(alpha_x: f64, tau: f64, x0: f64, times: &[f64]) -> PhaseRollout {
    PhaseRollout::Scalar(
        times
            .iter()
            .map(|t| x0 * (-alpha_x * t / tau).exp())
            .collect(),
    )
}

/// Extracts a rollout from trajectory columns starting at `offset`
/// (`dim` of 1 for a scalar phase, 2 for a planar one).
pub fn rollout_from_trajectory(
    traj: &Trajectory,
    offset: usize,
    dim: usize,
) -> Result<PhaseRollout, CoreError> {
    if offset + dim > traj.dim() {
        return Err(CoreError::DimensionMismatch(
            "rollout slice exceeds the trajectory dimension".into(),
        ));
    }
    match dim {
        1 => Ok(PhaseRollout::Scalar(
            traj.states.iter().map(|s| s[offset]).collect(),
        )),
        2 => Ok(PhaseRollout::Planar(
            traj.states
                .iter()
                .map(|s| Vector2::new(s[offset], s[offset + 1]))
                .collect(),
        )),
        _ => Err(CoreError::InvalidParameter(
            "rollouts are scalar or planar".into(),
        )),
    }
}

/// Recovered weights, matching the basis kind.
#[derive(Debug, Clone)]
pub enum FittedWeights {
    Scalar(Vec<f64>),
    Planar(Vec<Vector2<f64>>),
}

impl FittedWeights {
    /// Euclidean norm of the stacked weight vector.
    pub fn norm(&self) -> f64 {
        match self {
            FittedWeights::Scalar(w) => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
            FittedWeights::Planar(w) => w.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt(),
        }
    }
}

/// A fit outcome: weights plus the root-mean-square residual.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub weights: FittedWeights,
    pub residual_rmse: f64,
}

fn design_row(basis: &BasisSpec, rollout: &PhaseRollout, t: usize) -> Result<Vec<f64>, CoreError> {
    match (basis, rollout) {
        (BasisSpec::Gaussian { centers, sigma }, PhaseRollout::Scalar(xs)) => {
            let x = xs[t];
            let s2 = 2.0 * sigma * sigma;
            let phi: Vec<f64> = centers.iter().map(|c| (-(x - c).powi(2) / s2).exp()).collect();
            let denom: f64 = phi.iter().sum();
            if !(denom > 1e-300) {
                return Err(CoreError::DegenerateBasis(denom));
            }
            Ok(phi.iter().map(|p| p / denom * x).collect())
        }
        (BasisSpec::VonMises { centers, sigma }, PhaseRollout::Planar(xs)) => {
            let x = xs[t];
            let theta = x.y.atan2(x.x);
            let s2 = 2.0 * sigma * sigma;
            let phi: Vec<f64> = centers
                .iter()
                .map(|c| (((theta - c).cos() - 1.0) / s2).exp())
                .collect();
            let denom: f64 = phi.iter().sum();
            if !(denom > 1e-300) {
                return Err(CoreError::DegenerateBasis(denom));
            }
            let mut row = Vec::with_capacity(2 * centers.len());
            for p in &phi {
                row.push(p / denom * x.x);
                row.push(p / denom * x.y);
            }
            Ok(row)
        }
        _ => Err(CoreError::DimensionMismatch(
            "basis kind and rollout kind do not match".into(),
        )),
    }
}

/// Fits weights by minimizing `Σ_t |f*(t) - f_w(x(t))|² + ε |w|²`.
///
/// `ridge` of `None` applies the default `ε = 1e-10 · trace(AᵀA)/n_w`;
/// an explicit zero solves the plain least-squares problem and fails with a
/// conditioning error when the design matrix is numerically rank-deficient.
pub fn fit_weights(
    targets: &[f64],
    rollout: &PhaseRollout,
    basis: &BasisSpec,
    ridge: Option<f64>,
) -> Result<FitResult, CoreError> {
    let n = targets.len();
    if rollout.len() != n {
        return Err(CoreError::DimensionMismatch(
            "targets and rollout lengths differ".into(),
        ));
    }
    let n_w = basis.n_weights();
    if n < n_w {
        return Err(CoreError::Precondition(format!(
            "{n} samples cannot determine {n_w} weights"
        )));
    }
    let mut a = DMatrix::zeros(n, n_w);
    for t in 0..n {
        let row = design_row(basis, rollout, t)?;
        for (j, v) in row.iter().enumerate() {
            a[(t, j)] = *v;
        }
    }
    let rhs = DVector::from_column_slice(targets);
    let ata = a.transpose() * &a;
    let eps = match ridge {
        Some(e) if e < 0.0 => {
            return Err(CoreError::InvalidParameter(
                "ridge must be nonnegative".into(),
            ))
        }
        Some(e) => e,
        None => 1e-10 * ata.trace() / n_w as f64,
    };
    let w = if eps == 0.0 {
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax) {
            return Err(CoreError::Conditioning(format!(
                "design matrix is rank-deficient (σ_min/σ_max = {:e}); supply a ridge",
                smin / smax
            )));
        }
        svd.solve(&rhs, 0.0)
            .map_err(|e| CoreError::Conditioning(e.to_string()))?
    } else {
        let reg = &ata + DMatrix::identity(n_w, n_w) * eps;
        reg.cholesky()
            .ok_or_else(|| CoreError::Conditioning("normal equations not positive definite".into()))?
            .solve(&(a.transpose() * &rhs))
    };
    let residual = (&a * &w - &rhs).norm() / (n as f64).sqrt();
    let weights = match basis {
        BasisSpec::Gaussian { .. } => FittedWeights::Scalar(w.as_slice().to_vec()),
        BasisSpec::VonMises { centers, .. } => FittedWeights::Planar(
            (0..centers.len())
                .map(|i| Vector2::new(w[2 * i], w[2 * i + 1]))
                .collect(),
        ),
    };
    Ok(FitResult {
        weights,
        residual_rmse: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        compose_hierarchy, CanonicalSystem, Forcing, GaussianForcing, TransformKind,
        TransformationSystem, VectorField, VonMisesForcing,
    };
    use crate::simulate::{integrate, IntegratorConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::dvector;

    fn gaussian_demo(weights: &[f64]) -> (Demonstration, PhaseRollout, BasisSpec) {
        let params = DmpParams {
            k: 25.0,
            b: 10.0,
            g: 1.0,
            tau: 1.0,
        };
        let alpha_x = 4.0;
        let centers: Vec<f64> = (0..weights.len())
            .map(|i| i as f64 / (weights.len() - 1) as f64)
            .collect();
        let sigma = 0.12;
        let forcing =
            GaussianForcing::new(centers.clone(), sigma, weights.to_vec()).unwrap();
        let canonical = CanonicalSystem::exponential_decay(alpha_x, params.tau).unwrap();
        let transform = TransformationSystem::new(
            params.k,
            params.b,
            params.tau,
            TransformKind::SpringDamper {
                goal: params.g,
                forcing: Some(Forcing::Gaussian(forcing)),
            },
        )
        .unwrap();
        let h = compose_hierarchy(None, canonical, vec![transform]).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 2.0).unwrap();
        // State layout: (x, y, ẏ) -> canonical first? compose order is
        // (x, y, ẏ) with no reference: canonical offset 0, output offset 1.
        let x0 = dvector![1.0, 0.0, 0.0];
        let traj = integrate(&h, &x0, &cfg).unwrap();
        let times = traj.times.clone();
        let y: Vec<f64> = traj.states.iter().map(|s| s[1]).collect();
        let ydot: Vec<f64> = traj.states.iter().map(|s| s[2]).collect();
        // Exact accelerations from the field itself.
        let yddot: Vec<f64> = traj
            .states
            .iter()
            .map(|s| h.eval(s).unwrap()[2])
            .collect();
        let rollout = rollout_from_trajectory(&traj, 0, 1).unwrap();
        let demo = Demonstration::new(times, y, ydot, Some(yddot), params).unwrap();
        (demo, rollout, BasisSpec::Gaussian { centers, sigma })
    }

    #[test]
    fn unforced_demo_has_zero_targets() {
        // Critically damped analytic solution of τÿ = k(g-y) - bẏ.
        let params = DmpParams {
            k: 4.0,
            b: 4.0,
            g: 2.0,
            tau: 1.0,
        };
        let y0 = 0.5;
        let c1 = y0 - params.g;
        let c2 = 2.0 * c1;
        let times: Vec<f64> = (0..500).map(|i| i as f64 * 0.004).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|t| params.g + (c1 + c2 * t) * (-2.0 * t).exp())
            .collect();
        let ydot: Vec<f64> = times
            .iter()
            .map(|t| (c2 - 2.0 * (c1 + c2 * t)) * (-2.0 * t).exp())
            .collect();
        let yddot: Vec<f64> = times
            .iter()
            .map(|t| (-4.0 * c2 + 4.0 * (c1 + c2 * t)) * (-2.0 * t).exp())
            .collect();
        let demo = Demonstration::new(times, y, ydot, Some(yddot), params).unwrap();
        let targets = compute_target_forcing(&demo).unwrap();
        assert!(targets.iter().all(|f| f.abs() < 1e-6));
    }

    #[test]
    fn rest_at_goal_has_zero_targets() {
        let params = DmpParams {
            k: 9.0,
            b: 5.0,
            g: 1.5,
            tau: 2.0,
        };
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let demo = Demonstration::new(
            times.clone(),
            vec![params.g; 10],
            vec![0.0; 10],
            Some(vec![0.0; 10]),
            params,
        )
        .unwrap();
        let targets = compute_target_forcing(&demo).unwrap();
        assert!(targets.iter().all(|f| f.abs() == 0.0));
    }

    #[test]
    fn forward_generated_targets_match_the_forcing() {
        let weights = [3.0, -1.5, 2.0, 0.5, -2.5, 1.0, 0.0, 4.0, -3.0, 1.5];
        let (demo, rollout, basis) = gaussian_demo(&weights);
        let targets = compute_target_forcing(&demo).unwrap();
        let (BasisSpec::Gaussian { centers, sigma }, PhaseRollout::Scalar(xs)) =
            (&basis, &rollout)
        else {
            unreachable!()
        };
        let forcing = GaussianForcing::new(centers.clone(), *sigma, weights.to_vec()).unwrap();
        for (t, x) in xs.iter().enumerate() {
            assert_abs_diff_eq!(targets[t], forcing.eval(*x).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn gaussian_round_trip_recovers_the_weights() {
        let weights = [3.0, -1.5, 2.0, 0.5, -2.5, 1.0, 0.0, 4.0, -3.0, 1.5];
        let (demo, rollout, basis) = gaussian_demo(&weights);
        let targets = compute_target_forcing(&demo).unwrap();
        let fit = fit_weights(&targets, &rollout, &basis, Some(0.0)).unwrap();
        let FittedWeights::Scalar(w) = fit.weights else {
            unreachable!()
        };
        for (got, want) in w.iter().zip(&weights) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(fit.residual_rmse < 1e-8);
    }

    #[test]
    fn zero_targets_with_ridge_give_zero_weights() {
        let (_, rollout, basis) = gaussian_demo(&[0.0; 10]);
        let targets = vec![0.0; rollout.len()];
        let fit = fit_weights(&targets, &rollout, &basis, Some(1e-6)).unwrap();
        assert_abs_diff_eq!(fit.weights.norm(), 0.0);
    }

    #[test]
    fn von_mises_round_trip_on_one_hopf_period() {
        let n_bases = 12;
        let centers: Vec<f64> = (0..n_bases)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / n_bases as f64)
            .collect();
        let sigma = 0.45;
        let true_w: Vec<Vector2<f64>> = (0..n_bases)
            .map(|i| Vector2::new((i as f64 * 0.7).sin() * 2.0, (i as f64 * 1.3).cos() * 1.5))
            .collect();
        let forcing = VonMisesForcing::new(centers.clone(), sigma, true_w.clone()).unwrap();
        let params = DmpParams {
            k: 80.0,
            b: 18.0,
            g: 0.0,
            tau: 1.0,
        };
        let canonical = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let transform = TransformationSystem::new(
            params.k,
            params.b,
            params.tau,
            TransformKind::SpringDamper {
                goal: params.g,
                forcing: Some(Forcing::VonMises(forcing)),
            },
        )
        .unwrap();
        let h = compose_hierarchy(None, canonical, vec![transform]).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 1.0).unwrap();
        let x0 = dvector![1.0, 0.0, 0.2, 0.0];
        let traj = integrate(&h, &x0, &cfg).unwrap();
        let times = traj.times.clone();
        let y: Vec<f64> = traj.states.iter().map(|s| s[2]).collect();
        let ydot: Vec<f64> = traj.states.iter().map(|s| s[3]).collect();
        let yddot: Vec<f64> = traj.states.iter().map(|s| h.eval(s).unwrap()[3]).collect();
        let demo = Demonstration::new(times, y, ydot, Some(yddot), params).unwrap();
        let rollout = rollout_from_trajectory(&traj, 0, 2).unwrap();
        let targets = compute_target_forcing(&demo).unwrap();
        let basis = BasisSpec::VonMises { centers, sigma };
        let fit = fit_weights(&targets, &rollout, &basis, Some(0.0)).unwrap();
        let FittedWeights::Planar(w) = fit.weights else {
            unreachable!()
        };
        let mut worst: f64 = 0.0;
        for (got, want) in w.iter().zip(&true_w) {
            worst = worst.max((got - want).norm());
        }
        assert!(worst < 1e-6, "worst weight error {worst}");
    }

    #[test]
    fn differentiated_acceleration_still_recovers_weights_approximately() {
        let weights = [1.0, -2.0, 0.5, 3.0, -1.0, 2.0, 0.0, -0.5, 1.5, -2.5];
        let (mut demo, rollout, basis) = gaussian_demo(&weights);
        demo.yddot = None;
        let targets = compute_target_forcing(&demo).unwrap();
        let fit = fit_weights(&targets, &rollout, &basis, None).unwrap();
        let FittedWeights::Scalar(w) = fit.weights else {
            unreachable!()
        };
        for (got, want) in w.iter().zip(&weights) {
            assert!((got - want).abs() < 1e-2, "{got} vs {want}");
        }
    }

    #[test]
    fn ridge_shrinks_the_weight_norm_monotonically() {
        let weights = [3.0, -1.5, 2.0, 0.5, -2.5, 1.0, 0.0, 4.0, -3.0, 1.5];
        let (demo, rollout, basis) = gaussian_demo(&weights);
        let targets = compute_target_forcing(&demo).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.0, 1e-6, 1e-3, 1e-1, 10.0] {
            let fit = fit_weights(&targets, &rollout, &basis, Some(eps)).unwrap();
            let norm = fit.weights.norm();
            assert!(norm <= prev + 1e-12, "norm rose: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn residual_never_exceeds_the_zero_weight_baseline() {
        let weights = [3.0, -1.5, 2.0, 0.5, -2.5, 1.0, 0.0, 4.0, -3.0, 1.5];
        let (demo, rollout, basis) = gaussian_demo(&weights);
        let targets = compute_target_forcing(&demo).unwrap();
        let baseline =
            (targets.iter().map(|v| v * v).sum::<f64>() / targets.len() as f64).sqrt();
        for eps in [0.0, 1e-4, 1.0] {
            let fit = fit_weights(&targets, &rollout, &basis, Some(eps)).unwrap();
            assert!(fit.residual_rmse <= baseline + 1e-12);
        }
    }

    #[test]
    fn temporal_scaling_recovers_the_same_weights() {
        // The same weights fitted from demonstrations at τ and 2τ agree.
        let weights = [3.0, -1.5, 2.0, 0.5, -2.5, 1.0, 0.0, 4.0, -3.0, 1.5];
        let fit_at_tau = |tau: f64| -> Vec<f64> {
            let params = DmpParams {
                k: 25.0,
                b: 10.0,
                g: 1.0,
                tau,
            };
            let centers: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
            let sigma = 0.12;
            let forcing = GaussianForcing::new(centers.clone(), sigma, weights.to_vec()).unwrap();
            let canonical = CanonicalSystem::exponential_decay(4.0, tau).unwrap();
            let transform = TransformationSystem::new(
                params.k,
                params.b,
                params.tau,
                TransformKind::SpringDamper {
                    goal: params.g,
                    forcing: Some(Forcing::Gaussian(forcing)),
                },
            )
            .unwrap();
            let h = compose_hierarchy(None, canonical, vec![transform]).unwrap();
            let cfg = IntegratorConfig::new(1e-3, 2.0 * tau).unwrap();
            let traj = integrate(&h, &dvector![1.0, 0.0, 0.0], &cfg).unwrap();
            let demo = Demonstration::new(
                traj.times.clone(),
                traj.states.iter().map(|s| s[1]).collect(),
                traj.states.iter().map(|s| s[2]).collect(),
                Some(traj.states.iter().map(|s| h.eval(s).unwrap()[2]).collect()),
                params,
            )
            .unwrap();
            let rollout = rollout_from_trajectory(&traj, 0, 1).unwrap();
            let targets = compute_target_forcing(&demo).unwrap();
            let fit = fit_weights(
                &targets,
                &rollout,
                &BasisSpec::Gaussian { centers, sigma },
                Some(0.0),
            )
            .unwrap();
            match fit.weights {
                FittedWeights::Scalar(w) => w,
                _ => unreachable!(),
            }
        };
        let w1 = fit_at_tau(1.0);
        let w2 = fit_at_tau(2.0);
        for (a, b) in w1.iter().zip(&w2) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn too_few_samples_for_differentiation_is_an_error() {
        let params = DmpParams {
            k: 1.0,
            b: 1.0,
            g: 0.0,
            tau: 1.0,
        };
        let demo = Demonstration::new(
            vec![0.0, 0.1],
            vec![0.0, 0.1],
            vec![1.0, 1.0],
            None,
            params,
        )
        .unwrap();
        assert!(matches!(
            compute_target_forcing(&demo),
            Err(CoreError::Precondition(_))
        ));
    }
}
