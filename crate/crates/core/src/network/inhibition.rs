//! Sparse inhibition: contracting terms injected at a few nodes to capture
//! the oscillations of the whole connected network.

use nalgebra::{DMatrix, DVector};

use crate::contraction::{Certificate, CertificateKind, Metric, RegionSampler};
use crate::dynamics::VectorField;
use crate::error::CoreError;
use crate::linalg::max_generalized_eig;
use crate::simulate::{RegionIndicator, SwitchedField};

use super::coupled::StandingInhibition;
use super::{assemble_block_laplacian, CouplingGraph, CouplingMode};

/// A sparse-inhibition rule: goal points, an arming radius, the inhibition
/// gain, nonnegative per-node weights, and an enable schedule.
///
/// The contracting influence at node `i` is `α_i k_inh (x_{i,d} - x_i)`.
/// During switched simulation the rule arms when the schedule is enabled and
/// the first listed node enters its goal ball `|x_{i,d} - x_i| ≤ r₀`; in
/// latch mode it stays armed while enabled, in strict mode only while inside.
#[derive(Debug, Clone)]
pub struct InhibitionRule {
    pub nodes: Vec<usize>,
    pub goals: Vec<DVector<f64>>,
    pub radius: f64,
    pub gain: f64,
    pub weights: Vec<f64>,
    /// Enable windows `[start, end)` in seconds.
    pub enable: Vec<(f64, f64)>,
    pub latch: bool,
}

impl InhibitionRule {
    pub fn new(
        nodes: Vec<usize>,
        goals: Vec<DVector<f64>>,
        radius: f64,
        gain: f64,
        weights: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if nodes.is_empty() || nodes.len() != goals.len() || nodes.len() != weights.len() {
            return Err(CoreError::DimensionMismatch(
                "nodes, goals, and weights must align and be non-empty".into(),
            ));
        }
        if !(radius > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "activation radius must be positive, got {radius}"
            )));
        }
        if !(gain > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "inhibition gain must be positive, got {gain}"
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(CoreError::InvalidParameter(
                "inhibition weights must be nonnegative".into(),
            ));
        }
        Ok(Self {
            nodes,
            goals,
            radius,
            gain,
            weights,
            enable: vec![(0.0, f64::INFINITY)],
            latch: true,
        })
    }

    /// Single-node rule with unit weight, always enabled, latched.
    pub fn single(
        node: usize,
        goal: DVector<f64>,
        radius: f64,
        gain: f64,
    ) -> Result<Self, CoreError> {
        Self::new(vec![node], vec![goal], radius, gain, vec![1.0])
    }

    pub fn with_schedule(mut self, enable: Vec<(f64, f64)>) -> Self {
        self.enable = enable;
        self
    }

    pub fn with_latch(mut self, latch: bool) -> Self {
        self.latch = latch;
        self
    }

    pub(crate) fn standing(
        &self,
        n_nodes: usize,
        node_dim: usize,
    ) -> Result<StandingInhibition, CoreError> {
        let mut entries = Vec::with_capacity(self.nodes.len());
        for ((&node, goal), &weight) in self.nodes.iter().zip(&self.goals).zip(&self.weights) {
            if node >= n_nodes {
                return Err(CoreError::InvalidParameter(format!(
                    "inhibition node {node} out of range for {n_nodes} nodes"
                )));
            }
            if goal.len() != node_dim {
                return Err(CoreError::DimensionMismatch(format!(
                    "goal for node {node} has length {}, expected {node_dim}",
                    goal.len()
                )));
            }
            entries.push((node, goal.clone(), weight));
        }
        Ok(StandingInhibition {
            entries,
            gain: self.gain,
        })
    }

    /// The arming region indicator on the stacked network state: negative
    /// when the first listed node is within `r₀` of its goal.
    /// `block_offset` shifts the canonical block when other subsystems (a
    /// reference filter) precede it in the state.
    pub fn region_indicator(
        &self,
        node_dim: usize,
        block_offset: usize,
    ) -> Result<RegionIndicator, CoreError> {
        RegionIndicator::ball(
            block_offset + self.nodes[0] * node_dim,
            self.goals[0].clone(),
            self.radius,
        )
    }

    /// Wraps nominal and inhibited fields into a switched system driven by
    /// this rule's schedule, region, and latch mode. The canonical block is
    /// assumed to start the state; use [`Self::switched_at`] otherwise.
    pub fn switched<'a>(
        &self,
        nominal: &'a dyn VectorField,
        inhibited: &'a dyn VectorField,
        node_dim: usize,
    ) -> Result<SwitchedField<'a>, CoreError> {
        self.switched_at(nominal, inhibited, node_dim, 0)
    }

    /// As [`Self::switched`], with the canonical block starting at
    /// `block_offset` in the stacked state.
    pub fn switched_at<'a>(
        &self,
        nominal: &'a dyn VectorField,
        inhibited: &'a dyn VectorField,
        node_dim: usize,
        block_offset: usize,
    ) -> Result<SwitchedField<'a>, CoreError> {
        Ok(SwitchedField {
            nominal,
            alternate: inhibited,
            enable: self.enable.clone(),
            region: self.region_indicator(node_dim, block_offset)?,
            latch: self.latch,
        })
    }
}

/// The standalone inhibition field for analysis:
///
/// ```text
/// f_inh(x) = -L x + [α_1 g_1(x_1)ᵀ, …, α_N g_N(x_N)ᵀ]ᵀ
/// ```
///
/// with `g_i(x) = k_inh (x_{i,d} - x)` at rule nodes and zero elsewhere.
pub struct WeightedInhibitionField {
    laplacian: DMatrix<f64>,
    node_dim: usize,
    n_nodes: usize,
    inhibition: StandingInhibition,
}

/// Builds `f_inh` for a graph and rule. Weights must be nonnegative (already
/// enforced by the rule constructor). The combined simulation field is the
/// coupled canonical field built with the same rule attached.
pub fn weighted_inhibition_field(
    graph: &CouplingGraph,
    rule: &InhibitionRule,
) -> Result<WeightedInhibitionField, CoreError> {
    let lap = assemble_block_laplacian(graph)?;
    let inhibition = rule.standing(graph.n_nodes(), graph.node_dim())?;
    Ok(WeightedInhibitionField {
        laplacian: lap.matrix().clone(),
        node_dim: graph.node_dim(),
        n_nodes: graph.n_nodes(),
        inhibition,
    })
}

impl VectorField for WeightedInhibitionField {
    fn dim(&self) -> usize {
        self.n_nodes * self.node_dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        if x.len() != self.dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "state has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let mut out = -(&self.laplacian * x);
        let n = self.node_dim;
        for (node, goal, weight) in &self.inhibition.entries {
            for p in 0..n {
                out[node * n + p] += weight * self.inhibition.gain * (goal[p] - x[node * n + p]);
            }
        }
        Ok(out)
    }

    fn jacobian_analytic(&self, _x: &DVector<f64>) -> Option<Result<DMatrix<f64>, CoreError>> {
        let mut jac = -self.laplacian.clone();
        let n = self.node_dim;
        for (node, _goal, weight) in &self.inhibition.entries {
            for p in 0..n {
                jac[(node * n + p, node * n + p)] -= weight * self.inhibition.gain;
            }
        }
        Some(Ok(jac))
    }
}

/// Gate for the sparse-inhibition argument: a symmetric graph must be
/// connected; a directed graph must reach every node from the inhibited one.
pub fn check_sparse_inhibition_support(
    graph: &CouplingGraph,
    rule: &InhibitionRule,
) -> Result<(), CoreError> {
    match graph.mode() {
        CouplingMode::Symmetric => {
            if !graph.connected() {
                return Err(CoreError::Precondition(
                    "sparse inhibition needs a connected graph".into(),
                ));
            }
        }
        CouplingMode::Directed => {
            for &node in &rule.nodes {
                if !graph.all_reachable_from(node) {
                    return Err(CoreError::Precondition(format!(
                        "node {node} does not reach every node in the directed graph"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Sampled estimate of the inhibition threshold from the dominance argument:
/// given `g` certified contracting on the region under `metric` with rate
/// `λ₂`, any `α > α₀ = β̂ / (2 λ₂)` renders `f₁ + α g` contracting there,
/// where
///
/// ```text
/// β̂ = max over samples of λ_max(Ṁ·f₁ + A₁ᵀM + MA₁  relative to M).
/// ```
///
/// The returned value is a sampled upper estimate, not a bound over the
/// whole region; it may be negative when `f₁` is itself contracting.
pub fn inhibition_threshold_estimate(
    field_nominal: &dyn VectorField,
    g_certificate: &Certificate,
    metric: &dyn Metric,
    sampler: &RegionSampler,
) -> Result<f64, CoreError> {
    if g_certificate.kind != CertificateKind::Contraction || !g_certificate.pass {
        return Err(CoreError::Precondition(
            "g must carry a passing contraction certificate under the supplied metric".into(),
        ));
    }
    let lambda2 = g_certificate.rate;
    if !(lambda2 > 0.0) {
        return Err(CoreError::Precondition(
            "g's certified rate must be positive".into(),
        ));
    }
    if metric.dim() != field_nominal.dim() {
        return Err(CoreError::DimensionMismatch(
            "metric and field dimensions differ".into(),
        ));
    }
    let mut beta = f64::NEG_INFINITY;
    for x in sampler.samples() {
        let f1 = field_nominal.eval(&x)?;
        let a1 = field_nominal.jacobian(&x)?;
        let m = metric.eval(&x)?;
        let mdot = crate::contraction::metric_derivative_along(metric, &x, &f1)?;
        let g = mdot + a1.transpose() * &m + &m * a1;
        beta = beta.max(max_generalized_eig(&g, &m)?);
    }
    Ok(beta / (2.0 * lambda2))
}
