//! Scenario configuration: one JSON document with sections
//! `{systems, graph, heterogeneity, inhibition, integrator, pipeline,
//! outputs}`, declarative and diffable.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use dmpnet::dynamics::{
    CanonicalKind, CanonicalSystem, Forcing, GaussianForcing, GoalHarmonics, HopfParams,
    ReferenceSystem, TransformKind, TransformationSystem, VanDerPolParams, VonMisesForcing,
};
use dmpnet::network::{CouplingGraph, Edge, HeterogeneousParams, InhibitionRule};
use dmpnet::simulate::{Disturbance, IntegratorConfig};

use crate::error::{CliError, Result};

fn one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub systems: SystemsConfig,
    #[serde(default)]
    pub graph: Option<GraphConfig>,
    #[serde(default)]
    pub heterogeneity: Option<HeterogeneityConfig>,
    #[serde(default)]
    pub inhibition: Option<InhibitionConfig>,
    pub integrator: IntegratorDoc,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub pipeline: Vec<PipelineStep>,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

/// Initial state selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Explicit full state vector.
    State { values: Vec<f64> },
    /// Planar canonical nodes placed on a circle, respecting the commanded
    /// node phases (node `i` at angle `angle - ψ_i`); other blocks zero.
    OnCycle { radius: f64, angle: f64 },
    /// Seeded uniform state in `[-amplitude, amplitude]^n`.
    Random { amplitude: f64 },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Random { amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemsConfig {
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    pub canonical: CanonicalConfig,
    /// Transform template instantiated per node (or once, without a graph).
    #[serde(default)]
    pub transformations: Vec<TransformConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub gains: Vec<f64>,
    pub command: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CanonicalConfig {
    ExponentialDecay {
        alpha_x: f64,
        #[serde(default = "one")]
        tau: f64,
    },
    Hopf {
        omega: f64,
        rho: f64,
        radius: f64,
        #[serde(default = "one")]
        tau: f64,
    },
    VanDerPol {
        omega: f64,
        mu: f64,
        #[serde(default)]
        classical: bool,
        #[serde(default = "one")]
        tau: f64,
    },
}

impl CanonicalConfig {
    pub fn build(&self) -> Result<CanonicalSystem> {
        Ok(match *self {
            CanonicalConfig::ExponentialDecay { alpha_x, tau } => {
                CanonicalSystem::exponential_decay(alpha_x, tau)?
            }
            CanonicalConfig::Hopf {
                omega,
                rho,
                radius,
                tau,
            } => CanonicalSystem::hopf(omega, rho, radius, tau)?,
            CanonicalConfig::VanDerPol {
                omega,
                mu,
                classical,
                tau,
            } => CanonicalSystem::van_der_pol(omega, mu, classical, tau)?,
        })
    }
}

// No deny_unknown_fields here: the flattened kind tag would be rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformConfig {
    pub k: f64,
    pub b: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(flatten)]
    pub kind: TransformKindConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransformKindConfig {
    SpringDamper {
        goal: f64,
        #[serde(default)]
        forcing: Option<ForcingConfig>,
    },
    TrackingGoals {
        position: GoalHarmonicsConfig,
        velocity_phase_rate: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Gaussian {
        centers: Vec<f64>,
        sigma: f64,
        weights: Vec<f64>,
    },
    VonMises {
        centers: Vec<f64>,
        sigma: f64,
        weights: Vec<[f64; 2]>,
    },
}

impl ForcingConfig {
    pub fn build(&self) -> Result<Forcing> {
        Ok(match self {
            ForcingConfig::Gaussian {
                centers,
                sigma,
                weights,
            } => Forcing::Gaussian(GaussianForcing::new(
                centers.clone(),
                *sigma,
                weights.clone(),
            )?),
            ForcingConfig::VonMises {
                centers,
                sigma,
                weights,
            } => Forcing::VonMises(VonMisesForcing::new(
                centers.clone(),
                *sigma,
                weights.iter().map(|w| Vector2::new(w[0], w[1])).collect(),
            )?),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalHarmonicsConfig {
    pub center: f64,
    pub amp_const: f64,
    #[serde(default)]
    pub amp_per_speed: f64,
    /// `(cos, sin)` coefficient pairs for harmonics 1, 2, …
    pub harmonics: Vec<[f64; 2]>,
}

impl TransformConfig {
    pub fn build(&self) -> Result<TransformationSystem> {
        let kind = match &self.kind {
            TransformKindConfig::SpringDamper { goal, forcing } => TransformKind::SpringDamper {
                goal: *goal,
                forcing: forcing.as_ref().map(|f| f.build()).transpose()?,
            },
            TransformKindConfig::TrackingGoals {
                position,
                velocity_phase_rate,
            } => TransformKind::TrackingGoals {
                position: GoalHarmonics {
                    center: position.center,
                    amp_const: position.amp_const,
                    amp_per_speed: position.amp_per_speed,
                    harmonics: position.harmonics.iter().map(|h| (h[0], h[1])).collect(),
                },
                velocity_phase_rate: *velocity_phase_rate,
            },
        };
        Ok(TransformationSystem::new(self.k, self.b, self.tau, kind)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainConfig {
    /// `k · I` on the node dimension.
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl GainConfig {
    fn build(&self, node_dim: usize) -> Result<DMatrix<f64>> {
        match self {
            GainConfig::Scalar(k) => Ok(DMatrix::identity(node_dim, node_dim) * *k),
            GainConfig::Matrix(rows) => {
                if rows.len() != node_dim || rows.iter().any(|r| r.len() != node_dim) {
                    return Err(CliError::Scenario(format!(
                        "gain matrix must be {node_dim}x{node_dim}"
                    )));
                }
                Ok(DMatrix::from_fn(node_dim, node_dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub nodes: usize,
    pub topology: TopologyConfig,
    /// Absolute per-node phases; edge offsets are their differences.
    #[serde(default)]
    pub node_phases: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    AllToAll {
        gain: GainConfig,
    },
    Edges {
        edges: Vec<EdgeConfig>,
    },
    Directed {
        gain: GainConfig,
        listens: Vec<[usize; 2]>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub i: usize,
    pub j: usize,
    pub gain: GainConfig,
    #[serde(default)]
    pub phase_offset: f64,
}

impl GraphConfig {
    pub fn build(&self, node_dim: usize) -> Result<CouplingGraph> {
        let graph = match &self.topology {
            TopologyConfig::AllToAll { gain } => {
                let g = gain.build(node_dim)?;
                match &self.node_phases {
                    Some(phases) => {
                        CouplingGraph::all_to_all_with_phases(self.nodes, g, phases)?
                    }
                    None => CouplingGraph::all_to_all(self.nodes, g)?,
                }
            }
            TopologyConfig::Edges { edges } => {
                if self.node_phases.is_some() {
                    return Err(CliError::Scenario(
                        "node_phases is only supported with all_to_all topology; \
                         set per-edge phase_offset instead"
                            .into(),
                    ));
                }
                let built: Result<Vec<Edge>> = edges
                    .iter()
                    .map(|e| {
                        Ok(Edge {
                            i: e.i,
                            j: e.j,
                            gain: e.gain.build(node_dim)?,
                            phase_offset: e.phase_offset,
                        })
                    })
                    .collect();
                CouplingGraph::symmetric(self.nodes, node_dim, built?)?
            }
            TopologyConfig::Directed { gain, listens } => CouplingGraph::directed(
                self.nodes,
                node_dim,
                gain.build(node_dim)?,
                listens.iter().map(|l| (l[0], l[1])).collect(),
            )?,
        };
        Ok(graph)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneityConfig {
    /// Absolute per-node values; omitted entries fall back to the nominal.
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha_x: Option<Vec<f64>>,
}

impl HeterogeneityConfig {
    fn series(&self, name: &str, values: &Option<Vec<f64>>, n: usize) -> Result<()> {
        if let Some(v) = values {
            if v.len() != n {
                return Err(CliError::Scenario(format!(
                    "heterogeneity.{name} must list {n} values"
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self, nominal: CanonicalSystem, n_nodes: usize) -> Result<HeterogeneousParams> {
        self.series("omega", &self.omega, n_nodes)?;
        self.series("mu", &self.mu, n_nodes)?;
        self.series("rho", &self.rho, n_nodes)?;
        self.series("radius", &self.radius, n_nodes)?;
        self.series("alpha_x", &self.alpha_x, n_nodes)?;
        let mut per_node = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let pick = |v: &Option<Vec<f64>>, fallback: f64| {
                v.as_ref().map(|s| s[i]).unwrap_or(fallback)
            };
            let node = match nominal.kind {
                CanonicalKind::ExponentialDecay { alpha_x } => CanonicalSystem::exponential_decay(
                    pick(&self.alpha_x, alpha_x),
                    nominal.tau,
                )?,
                CanonicalKind::Custom(_) => {
                    return Err(CliError::Scenario(
                        "heterogeneity applies to the named oscillator kinds".into(),
                    ))
                }
                CanonicalKind::Hopf(HopfParams { omega, rho, radius }) => CanonicalSystem::hopf(
                    pick(&self.omega, omega),
                    pick(&self.rho, rho),
                    pick(&self.radius, radius),
                    nominal.tau,
                )?,
                CanonicalKind::VanDerPol(VanDerPolParams {
                    omega,
                    mu,
                    classical,
                }) => CanonicalSystem::van_der_pol(
                    pick(&self.omega, omega),
                    pick(&self.mu, mu),
                    classical,
                    nominal.tau,
                )?,
            };
            per_node.push(node);
        }
        Ok(HeterogeneousParams::new(nominal, per_node)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhibitionConfig {
    pub nodes: Vec<usize>,
    pub goals: Vec<Vec<f64>>,
    pub radius: f64,
    pub gain: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Enable windows `[start, end)` in seconds.
    pub enable: Vec<[f64; 2]>,
    #[serde(default = "default_true")]
    pub latch: bool,
}

impl InhibitionConfig {
    pub fn build(&self) -> Result<InhibitionRule> {
        let weights = self
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.nodes.len()]);
        let rule = InhibitionRule::new(
            self.nodes.clone(),
            self.goals
                .iter()
                .map(|g| DVector::from_column_slice(g))
                .collect(),
            self.radius,
            self.gain,
            weights,
        )?
        .with_schedule(self.enable.iter().map(|w| (w[0], w[1])).collect())
        .with_latch(self.latch);
        Ok(rule)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorDoc {
    pub step: f64,
    pub duration: f64,
    #[serde(default)]
    pub disturbance: Option<DisturbanceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    Constant {
        vector: Vec<f64>,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        freq_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    PiecewiseConstant {
        magnitude: f64,
        dwell: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl DisturbanceConfig {
    pub fn build(&self, dim: usize, scenario_seed: u64) -> Disturbance {
        match self {
            DisturbanceConfig::Constant { vector } => {
                Disturbance::Constant(DVector::from_column_slice(vector))
            }
            DisturbanceConfig::Sinusoid {
                amplitude,
                freq_hz,
                phase,
            } => Disturbance::Sinusoid {
                amplitude: DVector::from_column_slice(amplitude),
                freq_hz: *freq_hz,
                phase: *phase,
            },
            DisturbanceConfig::PiecewiseConstant {
                magnitude,
                dwell,
                seed,
            } => Disturbance::PiecewiseConstant {
                magnitude: *magnitude,
                dwell: *dwell,
                seed: seed.wrapping_add(scenario_seed),
                dim,
            },
        }
    }
}

impl IntegratorDoc {
    pub fn build(&self, dim: usize, seed: u64) -> Result<IntegratorConfig> {
        let mut cfg = IntegratorConfig::new(self.step, self.duration)?;
        if let Some(d) = &self.disturbance {
            cfg = cfg.with_disturbance(d.build(dim, seed));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

impl RegionConfig {
    pub fn build(&self) -> dmpnet::contraction::Region {
        match self {
            RegionConfig::Box { lo, hi } => dmpnet::contraction::Region::Box {
                lo: DVector::from_column_slice(lo),
                hi: DVector::from_column_slice(hi),
            },
            RegionConfig::Ball { center, radius } => dmpnet::contraction::Region::Ball {
                center: DVector::from_column_slice(center),
                radius: *radius,
            },
            RegionConfig::Annulus {
                center,
                inner,
                outer,
            } => dmpnet::contraction::Region::Annulus {
                center: DVector::from_column_slice(center),
                inner: *inner,
                outer: *outer,
            },
        }
    }
}

fn default_samples() -> usize {
    4096
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineStep {
    /// Roll the configured system out and write trajectory artifacts.
    Simulate {},
    /// Per-node period estimates; optionally rerun with zeroed gains for an
    /// uncoupled comparison.
    Periods {
        transient: f64,
        #[serde(default)]
        compare_uncoupled: bool,
    },
    /// Max pairwise canonical-state distance over the trailing window.
    SyncError { window: f64 },
    /// Unwrapped oscillator phase differences against the commanded offsets,
    /// measured on `[transient, until]` (or to the end when omitted).
    PhaseOffsets {
        transient: f64,
        #[serde(default)]
        until: Option<f64>,
    },
    /// Amplitude decay after arming and radius recovery after release.
    InhibitionReport { settle: f64, recover: f64 },
    /// Synchronization condition for the configured network.
    CertifySync {
        region: RegionConfig,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Transverse contraction of one canonical node.
    CertifyTransverse {
        region: RegionConfig,
        rate: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Contraction of one canonical node, optionally with the standing
    /// inhibition term added.
    CertifyContraction {
        region: RegionConfig,
        rate: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        with_inhibition: bool,
    },
    /// Singular/full metric construction on the canonical limit cycle.
    MetricSynthesis {
        cycle_points: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    /// Disturbance tube bound on one canonical node.
    TubeCheck {
        region: RegionConfig,
        runs: usize,
        magnitude: f64,
        dwell: f64,
        duration: f64,
    },
}

impl PipelineStep {
    pub fn is_certificate(&self) -> bool {
        matches!(
            self,
            PipelineStep::CertifySync { .. }
                | PipelineStep::CertifyTransverse { .. }
                | PipelineStep::CertifyContraction { .. }
                | PipelineStep::MetricSynthesis { .. }
                | PipelineStep::TubeCheck { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            PipelineStep::Simulate {} => "simulate",
            PipelineStep::Periods { .. } => "periods",
            PipelineStep::SyncError { .. } => "sync_error",
            PipelineStep::PhaseOffsets { .. } => "phase_offsets",
            PipelineStep::InhibitionReport { .. } => "inhibition_report",
            PipelineStep::CertifySync { .. } => "certify_sync",
            PipelineStep::CertifyTransverse { .. } => "certify_transverse",
            PipelineStep::CertifyContraction { .. } => "certify_contraction",
            PipelineStep::MetricSynthesis { .. } => "metric_synthesis",
            PipelineStep::TubeCheck { .. } => "tube_check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_true")]
    pub trajectory_csv: bool,
    #[serde(default = "default_true")]
    pub events_csv: bool,
    #[serde(default = "default_true")]
    pub svg: bool,
    #[serde(default = "default_true")]
    pub report_json: bool,
    #[serde(default)]
    pub spectrum_csv: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            trajectory_csv: true,
            events_csv: true,
            svg: true,
            report_json: true,
            spectrum_csv: false,
        }
    }
}

/// Learning-run configuration for the `learn` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub name: String,
    /// Demonstration CSV with header `t,y,ydot[,yddot]`.
    pub demo_csv: String,
    pub params: LearnParams,
    pub canonical: CanonicalConfig,
    pub basis: BasisConfig,
    /// Ridge strength; omitted applies the scaled default.
    #[serde(default)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnParams {
    pub k: f64,
    pub b: f64,
    pub g: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    Gaussian { centers: Vec<f64>, sigma: f64 },
    VonMises { centers: Vec<f64>, sigma: f64 },
}

/// Loads and validates a scenario document, with serde's line/field
/// diagnostics surfaced in the error.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_learn_config(path: &Path) -> Result<LearnConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Builds the reference system from its config.
pub fn build_reference(cfg: &ReferenceConfig) -> Result<ReferenceSystem> {
    Ok(ReferenceSystem::new(
        DVector::from_column_slice(&cfg.gains),
        DVector::from_column_slice(&cfg.command),
    )?)
}
