//! Trajectory-level measurements: periods from Poincaré-section returns and
//! distances to a reference orbit.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

use super::Trajectory;

/// A hyperplane section `nᵀ(x - p) = 0` with a crossing direction.
#[derive(Debug, Clone)]
pub struct Section {
    pub normal: DVector<f64>,
    pub point: DVector<f64>,
}

impl Section {
    pub fn new(normal: DVector<f64>, point: DVector<f64>) -> Result<Self, CoreError> {
        if normal.len() != point.len() {
            return Err(CoreError::DimensionMismatch(
                "section normal and point must share a dimension".into(),
            ));
        }
        if !(normal.norm() > 0.0) {
            return Err(CoreError::InvalidParameter(
                "section normal must be nonzero".into(),
            ));
        }
        Ok(Self { normal, point })
    }

    /// Section through `x[coord] = value` in a `dim`-dimensional state.
    pub fn on_coordinate(dim: usize, coord: usize, value: f64) -> Self {
        let mut normal = DVector::zeros(dim);
        normal[coord] = 1.0;
        let mut point = DVector::zeros(dim);
        point[coord] = value;
        Self { normal, point }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.normal.dot(&self.point)
    }
}

/// Period estimate from mean inter-crossing intervals.
#[derive(Debug, Clone, Copy)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Maximum absolute deviation of any interval from the mean.
    pub max_deviation: f64,
    pub crossings: usize,
}

/// Estimates the period from positive-going section crossings after
/// discarding `transient` seconds. Crossing times are linearly interpolated;
/// at least three crossings are required.
pub fn estimate_period(
    traj: &Trajectory,
    section: &Section,
    transient: f64,
) -> Result<PeriodEstimate, CoreError> {
    if traj.len() < 2 {
        return Err(CoreError::NotPeriodic("trajectory too short".into()));
    }
    if section.normal.len() != traj.dim() {
        return Err(CoreError::DimensionMismatch(
            "section dimension does not match the trajectory".into(),
        ));
    }
    let mut crossings = Vec::new();
    let mut prev = section.value(&traj.states[0]);
    for k in 1..traj.len() {
        let cur = section.value(&traj.states[k]);
        if prev < 0.0 && cur >= 0.0 {
            let t0 = traj.times[k - 1];
            let t1 = traj.times[k];
            let t_star = t0 + (t1 - t0) * (-prev) / (cur - prev);
            if t_star >= transient {
                crossings.push(t_star);
            }
        }
        prev = cur;
    }
    if crossings.len() < 3 {
        return Err(CoreError::NotPeriodic(format!(
            "found {} section crossings after the transient, need at least 3",
            crossings.len()
        )));
    }
    let intervals: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let max_deviation = intervals
        .iter()
        .map(|i| (i - mean).abs())
        .fold(0.0, f64::max);
    Ok(PeriodEstimate {
        period: mean,
        max_deviation,
        crossings: crossings.len(),
    })
}

/// For each disturbed sample, the minimum distance to any nominal sample,
/// optionally weighted by a constant metric `M` (distance
/// `sqrt((a-b)ᵀ M (a-b))`). The nominal trajectory should sample its orbit
/// densely.
pub fn min_distance_to_orbit(
    disturbed: &Trajectory,
    nominal: &Trajectory,
    weight: Option<&DMatrix<f64>>,
) -> Result<Vec<f64>, CoreError> {
    if disturbed.is_empty() || nominal.is_empty() {
        return Err(CoreError::Precondition(
            "both trajectories must be non-empty".into(),
        ));
    }
    if disturbed.dim() != nominal.dim() {
        return Err(CoreError::DimensionMismatch(
            "trajectories must share a state dimension".into(),
        ));
    }
    if let Some(m) = weight {
        if m.nrows() != disturbed.dim() || m.ncols() != disturbed.dim() {
            return Err(CoreError::DimensionMismatch(
                "weight matrix does not match the state dimension".into(),
            ));
        }
    }
    let dist2 = |a: &DVector<f64>, b: &DVector<f64>| -> f64 {
        let d = a - b;
        match weight {
            Some(m) => d.dot(&(m * &d)),
            None => d.norm_squared(),
        }
    };
    Ok(disturbed
        .states
        .iter()
        .map(|x| {
            nominal
                .states
                .iter()
                .map(|s| dist2(x, s))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CanonicalSystem;
    use crate::simulate::{integrate, IntegratorConfig};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn hopf_traj(tau: f64, duration: f64) -> Trajectory {
        let field = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, tau).unwrap();
        let cfg = IntegratorConfig::new(1e-3, duration).unwrap();
        integrate(&field, &dvector![1.0, 0.0], &cfg).unwrap()
    }

    #[test]
    fn hopf_period_matches_the_phase_rate() {
        // On the cycle θ̇ = -ω/τ, so ω = 2π and τ = 1 give period 1 s.
        let traj = hopf_traj(1.0, 10.0);
        let section = Section::on_coordinate(2, 1, 0.0);
        let est = estimate_period(&traj, &section, 1.0).unwrap();
        assert_relative_eq!(est.period, 1.0, epsilon = 1e-4);
        assert!(est.max_deviation < 1e-4);
    }

    #[test]
    fn doubling_tau_doubles_the_period() {
        let traj = hopf_traj(2.0, 20.0);
        let section = Section::on_coordinate(2, 1, 0.0);
        let est = estimate_period(&traj, &section, 2.0).unwrap();
        assert_relative_eq!(est.period, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn constant_trajectory_is_not_periodic() {
        let traj = Trajectory {
            times: (0..100).map(|k| k as f64 * 0.01).collect(),
            states: (0..100).map(|_| dvector![1.0, 2.0]).collect(),
            events: vec![],
        };
        let section = Section::on_coordinate(2, 0, 0.0);
        match estimate_period(&traj, &section, 0.0) {
            Err(CoreError::NotPeriodic(_)) => {}
            other => panic!("expected not-periodic, got {other:?}"),
        }
    }

    #[test]
    fn identical_trajectories_have_zero_distance() {
        let traj = hopf_traj(1.0, 2.0);
        let d = min_distance_to_orbit(&traj, &traj, None).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn offset_circle_distance_matches_the_closed_form() {
        // Disturbed = nominal + δ. Against a dense circle of radius r, the
        // distance from a point p is | |p| - r | up to the sampling gap.
        let nominal = hopf_traj(1.0, 1.0);
        let delta = dvector![0.05, -0.02];
        let disturbed = Trajectory {
            times: nominal.times.clone(),
            states: nominal.states.iter().map(|s| s + &delta).collect(),
            events: vec![],
        };
        let d = min_distance_to_orbit(&disturbed, &nominal, None).unwrap();
        for (x, di) in disturbed.states.iter().zip(&d) {
            let closed_form = (x.norm() - 1.0).abs();
            assert!(
                (di - closed_form).abs() < 5e-3,
                "sampled {di} vs closed form {closed_form}"
            );
            assert!(*di >= closed_form - 1e-12);
        }
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let empty = Trajectory {
            times: vec![],
            states: vec![],
            events: vec![],
        };
        let traj = hopf_traj(1.0, 1.0);
        assert!(min_distance_to_orbit(&empty, &traj, None).is_err());
    }
}
