//! Sample-based contraction and transverse-contraction certification.
//!
//! A system `ẋ = f(x)` is contracting on a region under a uniformly positive
//! definite metric `M(x)` with rate `λ > 0` when
//!
//! ```text
//! Ṁ + Aᵀ M + M A ≤ -2λ M
//! ```
//!
//! holds throughout, with `A = ∂f/∂x`. Transverse contraction relaxes the
//! inequality to displacements `δ` with `f(x)ᵀ M(x) δ = 0`, giving
//! convergence to a unique limit cycle instead of a point.
//!
//! Everything here checks such inequalities at sampled states and reports the
//! worst margin with a witness. The results are numerical evidence over the
//! samples, not proofs over the region, and every certificate says so.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

mod checks;
mod measures;
mod metric;
mod sampler;
mod synthesis;
mod tube;

pub use checks::{
    check_contraction, check_funnel, check_hierarchy, check_sync_condition,
    check_transverse_contraction, estimate_transverse_rate, SyncConditionReport,
    MARGIN_TOLERANCE,
};
pub use measures::{matrix_measure, MeasureNorm};
pub use metric::{pushforward_metric, ConstantMetric, IdentityMetric, Metric, PushforwardMetric};
pub use sampler::{Region, RegionSampler};
pub use synthesis::{
    build_full_metric, build_singular_metric, FullMetricBuild, FullPointBuild, HorizonControls,
    PointBuild, SingularMetricBuild,
};
pub use tube::{tube_bound_check, TubeBoundReport, TubeCheckConfig, TubeRun};

/// The note carried by every certificate.
pub(crate) const EVIDENCE_NOTE: &str =
    "sample-based numerical evidence over the listed samples, not a formal proof";

/// What property a certificate claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Contraction,
    Transverse,
    Synchronization,
}

/// Outcome of a sampled check: claimed rate, worst margin over the samples,
/// and the witness state attaining it. `pass` holds exactly when the worst
/// margin is at or below the tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// Identifier of the metric the check ran under.
    pub metric: String,
    /// Claimed rate λ.
    pub rate: f64,
    /// Worst (largest) margin over all samples; non-positive means the
    /// inequality held everywhere it was sampled.
    pub worst_margin: f64,
    /// State attaining the worst margin.
    pub witness: Vec<f64>,
    pub samples: usize,
    pub tolerance: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl Certificate {
    pub(crate) fn new(
        kind: CertificateKind,
        metric: String,
        rate: f64,
        worst_margin: f64,
        witness: Vec<f64>,
        samples: usize,
        tolerance: f64,
    ) -> Self {
        Self {
            kind,
            metric,
            rate,
            worst_margin,
            witness,
            samples,
            tolerance,
            pass: worst_margin <= tolerance,
            notes: vec![EVIDENCE_NOTE.to_string()],
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Serializes the certificate as pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization cannot fail")
    }
}

/// Directional derivative of the metric along the field at `x`: analytic if
/// the metric provides one, otherwise a central difference displaced along
/// `f` with spatial step `1e-6 (1 + |x|)`.
pub(crate) fn metric_derivative_along(
    metric: &dyn Metric,
    x: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<DMatrix<f64>, CoreError> {
    if let Some(d) = metric.derivative_along(x, f) {
        return d;
    }
    let fnorm = f.norm();
    let n = metric.dim();
    if fnorm == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let eps = 1e-6 * (1.0 + x.norm());
    let dir = f / fnorm;
    let mp = metric.eval(&(x + &dir * eps))?;
    let mm = metric.eval(&(x - &dir * eps))?;
    Ok((mp - mm) * (fnorm / (2.0 * eps)))
}
