//! Disturbance tube bound for transverse contracting systems: a bounded
//! disturbance `|w(t)| ≤ w̄` keeps trajectories within distance
//! `(R/λ) w̄` of the nominal orbit, where `R` bounds the condition number of
//! the metric factor `Θ` and `λ` is the certified transverse rate.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorField;
use crate::error::CoreError;
use crate::simulate::{integrate, min_distance_to_orbit, Disturbance, IntegratorConfig};

use super::metric::Metric;
use super::sampler::RegionSampler;
use super::EVIDENCE_NOTE;

/// Distance floor a zero-disturbance run is compared against.
const ZERO_DISTURBANCE_FLOOR: f64 = 1e-8;

/// Timing for the disturbed and nominal rollouts.
#[derive(Debug, Clone, Copy)]
pub struct TubeCheckConfig {
    pub step: f64,
    /// Length of each disturbed rollout.
    pub disturbed_duration: f64,
    /// Length of the nominal rollout; it must sample the orbit densely.
    pub nominal_duration: f64,
}

/// One disturbance realization's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeRun {
    pub sup_disturbance: f64,
    pub worst_distance: f64,
    /// `worst_distance / ((R/λ) w̄)`; at most one when the bound holds.
    pub worst_ratio: f64,
    /// False when the disturbed trajectory left the region, which voids the
    /// bound's precondition and makes the run inconclusive.
    pub stayed_in_region: bool,
}

/// Aggregate tube-bound report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeBoundReport {
    pub rate: f64,
    /// Condition-number bound `R = θ̄/θ̲` of the factor over the region.
    pub condition_bound: f64,
    pub runs: Vec<TubeRun>,
    pub worst_ratio: f64,
    pub inconclusive: usize,
    /// True when every conclusive run stayed within the bound.
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Simulates disturbed and nominal systems from the same start for each
/// disturbance realization and checks the min-distance-to-orbit series
/// against `(R/λ) w̄` at every sample.
///
/// The metric must supply a factor `Θ`; `R` is estimated as the ratio of the
/// largest to smallest singular value of `Θ` over the sampled region.
pub fn tube_bound_check(
    field: &dyn VectorField,
    metric: &dyn Metric,
    sampler: &RegionSampler,
    rate: f64,
    start: &DVector<f64>,
    disturbances: &[Disturbance],
    config: &TubeCheckConfig,
) -> Result<TubeBoundReport, CoreError> {
    if !(rate > 0.0) {
        return Err(CoreError::Precondition(
            "tube bound needs a positive certified transverse rate".into(),
        ));
    }
    if disturbances.is_empty() {
        return Err(CoreError::InvalidParameter(
            "no disturbance realizations".into(),
        ));
    }

    // Condition-number bound of the factor over the region.
    let mut theta_hi = 0.0f64;
    let mut theta_lo = f64::INFINITY;
    for x in sampler.samples() {
        let theta = metric
            .factor(&x)
            .ok_or_else(|| {
                CoreError::Precondition("tube bound needs a metric with a factor Θ".into())
            })??;
        let svd = theta.svd(false, false);
        theta_hi = theta_hi.max(svd.singular_values.max());
        theta_lo = theta_lo.min(svd.singular_values.min());
    }
    if !(theta_lo > 0.0) {
        return Err(CoreError::Singular(
            "metric factor is singular somewhere on the region".into(),
        ));
    }
    let condition_bound = theta_hi / theta_lo;

    let nominal_cfg = IntegratorConfig::new(config.step, config.nominal_duration)?;
    let nominal = integrate(field, start, &nominal_cfg)?;

    let runs: Result<Vec<TubeRun>, CoreError> = disturbances
        .par_iter()
        .map(|d| {
            let w_bar = d.sup_norm();
            let bound = condition_bound / rate * w_bar;
            let cfg = IntegratorConfig::new(config.step, config.disturbed_duration)?
                .with_disturbance(d.clone());
            let disturbed = integrate(field, start, &cfg)?;
            let stayed_in_region = disturbed
                .states
                .iter()
                .all(|x| sampler.region.contains(x));
            let distances = min_distance_to_orbit(&disturbed, &nominal, None)?;
            let worst_distance = distances.iter().copied().fold(0.0, f64::max);
            // A zero disturbance makes the bound zero; compare against an
            // integration/sampling floor instead so the consistency check
            // stays meaningful.
            let worst_ratio = if bound > 0.0 {
                worst_distance / bound
            } else {
                worst_distance / ZERO_DISTURBANCE_FLOOR
            };
            Ok(TubeRun {
                sup_disturbance: w_bar,
                worst_distance,
                worst_ratio,
                stayed_in_region,
            })
        })
        .collect();
    let runs = runs?;

    let inconclusive = runs.iter().filter(|r| !r.stayed_in_region).count();
    let conclusive: Vec<&TubeRun> = runs.iter().filter(|r| r.stayed_in_region).collect();
    let worst_ratio = conclusive
        .iter()
        .map(|r| r.worst_ratio)
        .fold(0.0, f64::max);
    let pass = !conclusive.is_empty() && worst_ratio <= 1.0;
    let mut notes = vec![EVIDENCE_NOTE.to_string()];
    if inconclusive > 0 {
        notes.push(format!(
            "{inconclusive} run(s) left the region; the bound's precondition was violated there"
        ));
    }
    Ok(TubeBoundReport {
        rate,
        condition_bound,
        runs,
        worst_ratio,
        inconclusive,
        pass,
        notes,
    })
}
