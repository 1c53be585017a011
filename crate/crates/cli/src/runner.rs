//! Scenario execution: builds the configured systems, runs the pipeline,
//! and writes CSV/SVG/JSON artifacts.

use std::path::PathBuf;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use dmpnet::contraction::{
    build_full_metric, build_singular_metric, check_contraction, check_sync_condition,
    check_transverse_contraction, estimate_transverse_rate, tube_bound_check, HorizonControls,
    IdentityMetric, Region, RegionSampler, TubeCheckConfig, MARGIN_TOLERANCE,
};
use dmpnet::dynamics::{CanonicalKind, CanonicalSystem, FnField, VectorField};
use dmpnet::network::{
    assemble_block_laplacian, coupled_canonical_field, sync_error, CouplingGraph,
    CpgNetworkField, HeterogeneousParams, InhibitionRule,
};
use dmpnet::simulate::{
    estimate_period, integrate, integrate_switched, Disturbance, Section, Trajectory,
};

use crate::config::{InitialConfig, PipelineStep, Scenario};
use crate::error::{CliError, Result};
use crate::output::{
    eigen_report_csv, events_csv, spectrum_csv, trajectory_csv, write_atomic, OutputLayout,
};
use crate::svg::LinePlot;

/// Command-line overrides and output destination.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: None,
            samples: None,
            verbose: false,
        }
    }
}

/// Which pipeline steps a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFilter {
    All,
    CertificatesOnly,
}

/// Aggregate outcome of a scenario run.
pub struct RunSummary {
    /// Structured report, also written to `report.json`.
    pub report: Value,
    /// `(step label, pass)` for every certificate step executed.
    pub table: Vec<(String, bool)>,
    /// Files written.
    pub wrote: Vec<PathBuf>,
}

struct BuiltScenario {
    scenario: Scenario,
    seed: u64,
    nominal: CanonicalSystem,
    params: HeterogeneousParams,
    graph: Option<CouplingGraph>,
    rule: Option<InhibitionRule>,
    node_phases: Vec<f64>,
}

impl BuiltScenario {
    fn n_nodes(&self) -> usize {
        self.graph.as_ref().map(|g| g.n_nodes()).unwrap_or(1)
    }

    fn node_dim(&self) -> usize {
        self.nominal.dim()
    }

    /// The full simulation field (reference + coupled canonical +
    /// transforms), with or without the standing inhibition term.
    fn network(&self, inhibited: bool) -> Result<CpgNetworkField> {
        let reference = match &self.scenario.systems.reference {
            Some(r) => Some(crate::config::build_reference(r)?),
            None => None,
        };
        let graph = match &self.graph {
            Some(g) => g.clone(),
            None => CouplingGraph::symmetric(1, self.node_dim(), vec![])?,
        };
        let rule = if inhibited { self.rule.as_ref() } else { None };
        let coupled = coupled_canonical_field(graph, &self.params, rule)?;
        let transforms = if self.scenario.systems.transformations.is_empty() {
            vec![]
        } else {
            let group: Result<Vec<_>> = self
                .scenario
                .systems
                .transformations
                .iter()
                .map(|t| t.build())
                .collect();
            let group = group?;
            vec![group; self.n_nodes()]
        };
        Ok(CpgNetworkField::new(reference, coupled, transforms)?)
    }

    fn initial_state(&self, field: &CpgNetworkField) -> DVector<f64> {
        let dim = field.dim();
        match &self.scenario.initial {
            InitialConfig::State { values } => DVector::from_column_slice(values),
            InitialConfig::Random { amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                DVector::from_fn(dim, |_, _| rng.random_range(-amplitude..*amplitude))
            }
            InitialConfig::OnCycle { radius, angle } => {
                let mut x0 = DVector::zeros(dim);
                let nd = self.node_dim();
                for i in 0..self.n_nodes() {
                    let off = field.canonical_offset(i);
                    if nd == 2 {
                        let psi = self.node_phases.get(i).copied().unwrap_or(0.0);
                        x0[off] = radius * (angle - psi).cos();
                        x0[off + 1] = radius * (angle - psi).sin();
                    } else {
                        x0[off] = *radius;
                    }
                }
                x0
            }
        }
    }
}

fn build(scenario: Scenario, opts: &RunOptions) -> Result<BuiltScenario> {
    let seed = opts.seed.unwrap_or(scenario.seed);
    let nominal = scenario.systems.canonical.build()?;
    let graph = match &scenario.graph {
        Some(g) => Some(g.build(nominal.dim())?),
        None => None,
    };
    let n_nodes = graph.as_ref().map(|g| g.n_nodes()).unwrap_or(1);
    let params = match &scenario.heterogeneity {
        Some(h) => h.build(nominal.clone(), n_nodes)?,
        None => HeterogeneousParams::homogeneous(nominal.clone(), n_nodes),
    };
    let rule = match &scenario.inhibition {
        Some(i) => Some(i.build()?),
        None => None,
    };
    let node_phases = scenario
        .graph
        .as_ref()
        .and_then(|g| g.node_phases.clone())
        .unwrap_or_else(|| vec![0.0; n_nodes]);
    Ok(BuiltScenario {
        scenario,
        seed,
        nominal,
        params,
        graph,
        rule,
        node_phases,
    })
}

fn wrap_angle(a: f64) -> f64 {
    let mut v = a % (2.0 * std::f64::consts::PI);
    if v > std::f64::consts::PI {
        v -= 2.0 * std::f64::consts::PI;
    }
    if v < -std::f64::consts::PI {
        v += 2.0 * std::f64::consts::PI;
    }
    v
}

fn simulate_scenario(built: &BuiltScenario) -> Result<Trajectory> {
    let nominal_net = built.network(false)?;
    let cfg = built
        .scenario
        .integrator
        .build(nominal_net.dim(), built.seed)?;
    let x0 = built.initial_state(&nominal_net);
    match &built.rule {
        Some(rule) => {
            let inhibited_net = built.network(true)?;
            let switched = rule.switched_at(
                &nominal_net,
                &inhibited_net,
                built.node_dim(),
                nominal_net.reference_dim(),
            )?;
            Ok(integrate_switched(&switched, &x0, &cfg)?)
        }
        None => Ok(integrate(&nominal_net, &x0, &cfg)?),
    }
}

fn write_plots(
    built: &BuiltScenario,
    field: &CpgNetworkField,
    traj: &Trajectory,
    layout: &OutputLayout,
    wrote: &mut Vec<PathBuf>,
) -> Result<()> {
    let nd = built.node_dim();
    let mut ts = LinePlot::time_series(&format!("{}: canonical states", built.scenario.name), "x");
    for i in 0..built.n_nodes() {
        let off = field.canonical_offset(i);
        ts.add(
            format!("node{i} x1"),
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(t, s)| (*t, s[off]))
                .collect(),
        );
    }
    let path = layout.plot("timeseries");
    write_atomic(&path, &ts.render())?;
    wrote.push(path);

    if nd == 2 {
        let mut pp = LinePlot::phase_portrait(&format!("{}: phase portrait", built.scenario.name));
        for i in 0..built.n_nodes() {
            let off = field.canonical_offset(i);
            pp.add(
                format!("node{i}"),
                traj.states.iter().map(|s| (s[off], s[off + 1])).collect(),
            );
        }
        let path = layout.plot("phase");
        write_atomic(&path, &pp.render())?;
        wrote.push(path);
    }

    if field.output_dim() > 0 {
        let mut joints =
            LinePlot::time_series(&format!("{}: transformation outputs", built.scenario.name), "y");
        let per_node = built.scenario.systems.transformations.len();
        'outer: for i in 0..built.n_nodes() {
            for k in 0..per_node {
                if joints.series.len() >= 8 {
                    break 'outer;
                }
                let off = field.output_offset(i, k);
                joints.add(
                    format!("node{i} y{k}"),
                    traj.times
                        .iter()
                        .zip(&traj.states)
                        .map(|(t, s)| (*t, s[off]))
                        .collect(),
                );
            }
        }
        let path = layout.plot("outputs");
        write_atomic(&path, &joints.render())?;
        wrote.push(path);
    }
    Ok(())
}

fn node_period(
    traj: &Trajectory,
    offset: usize,
    dim: usize,
    transient: f64,
) -> Result<f64> {
    let idx = traj.index_at(transient);
    if idx >= traj.states.len() {
        return Err(CliError::Scenario(
            "period transient exceeds the trajectory".into(),
        ));
    }
    let n = traj.states.len() - idx;
    let mean: f64 = traj.states.iter().skip(idx).map(|s| s[offset]).sum::<f64>() / n as f64;
    let mut normal = DVector::zeros(dim);
    normal[offset] = 1.0;
    let mut point = DVector::zeros(dim);
    point[offset] = mean;
    let section = Section::new(normal, point).map_err(CliError::Core)?;
    Ok(estimate_period(traj, &section, transient)?.period)
}

/// Builds a standing-inhibition single-node field for contraction checks.
fn inhibited_node_field(
    canonical: CanonicalSystem,
    goal: DVector<f64>,
    gain: f64,
) -> impl VectorField {
    FnField::new(canonical.dim(), move |x: &DVector<f64>| {
        VectorField::eval(&canonical, x).unwrap() + (&goal - x) * gain
    })
}

/// Executes a scenario's pipeline and writes the requested artifacts.
///
/// With an empty pipeline this warns and writes nothing. The summary carries
/// the structured report and a PASS/FAIL table for certificate steps.
pub fn run_scenario(scenario: Scenario, opts: &RunOptions, filter: StepFilter) -> Result<RunSummary> {
    let built = build(scenario, opts)?;
    let layout = OutputLayout::new(&opts.out_dir, &built.scenario.name);
    let mut wrote: Vec<PathBuf> = Vec::new();
    let mut table: Vec<(String, bool)> = Vec::new();
    let mut report = serde_json::Map::new();
    report.insert("name".into(), json!(built.scenario.name));
    report.insert("seed".into(), json!(built.seed));

    if built.scenario.pipeline.is_empty() {
        eprintln!(
            "warning: scenario '{}' declares an empty pipeline; nothing to do",
            built.scenario.name
        );
        return Ok(RunSummary {
            report: Value::Object(report),
            table,
            wrote,
        });
    }

    let mut trajectory: Option<Trajectory> = None;
    let mut steps_report: Vec<Value> = Vec::new();

    for (index, step) in built.scenario.pipeline.iter().enumerate() {
        if filter == StepFilter::CertificatesOnly && !step.is_certificate() {
            continue;
        }
        if opts.verbose {
            eprintln!("running step {index}: {}", step.label());
        }
        let entry = execute_step(&built, step, index, opts, &layout, &mut trajectory, &mut wrote, &mut table)?;
        steps_report.push(entry);
    }

    report.insert("steps".into(), Value::Array(steps_report));
    if built.scenario.outputs.report_json {
        let path = layout.report();
        write_atomic(
            &path,
            &serde_json::to_string_pretty(&Value::Object(report.clone())).unwrap(),
        )?;
        wrote.push(path);
    }
    Ok(RunSummary {
        report: Value::Object(report),
        table,
        wrote,
    })
}

#[allow(clippy::too_many_arguments)]
fn execute_step(
    built: &BuiltScenario,
    step: &PipelineStep,
    index: usize,
    opts: &RunOptions,
    layout: &OutputLayout,
    trajectory: &mut Option<Trajectory>,
    wrote: &mut Vec<PathBuf>,
    table: &mut Vec<(String, bool)>,
) -> Result<Value> {
    let nd = built.node_dim();
    let samples_override = |n: usize| opts.samples.unwrap_or(n);
    match step {
        PipelineStep::Simulate {} => {
            let field = built.network(false)?;
            let traj = simulate_scenario(built)?;
            if built.scenario.outputs.trajectory_csv {
                let path = layout.trajectory();
                write_atomic(&path, &trajectory_csv(&traj))?;
                wrote.push(path);
            }
            if built.scenario.outputs.events_csv {
                let path = layout.events();
                write_atomic(&path, &events_csv(&traj))?;
                wrote.push(path);
            }
            if built.scenario.outputs.svg {
                write_plots(built, &field, &traj, layout, wrote)?;
            }
            let entry = json!({
                "op": "simulate",
                "samples": traj.len(),
                "duration": traj.times.last().copied().unwrap_or(0.0),
                "events": traj.events.iter().map(|e| json!({"t": e.time, "event": e.label})).collect::<Vec<_>>(),
            });
            *trajectory = Some(traj);
            Ok(entry)
        }
        PipelineStep::Periods {
            transient,
            compare_uncoupled,
        } => {
            let traj = trajectory
                .as_ref()
                .ok_or_else(|| CliError::Scenario("periods step needs a prior simulate".into()))?;
            let field = built.network(false)?;
            let mut coupled = Vec::new();
            for i in 0..built.n_nodes() {
                coupled.push(node_period(traj, field.canonical_offset(i), field.dim(), *transient)?);
            }
            let spread = |p: &[f64]| {
                let hi = p.iter().cloned().fold(f64::MIN, f64::max);
                let lo = p.iter().cloned().fold(f64::MAX, f64::min);
                (hi - lo) / lo
            };
            let mut entry = serde_json::Map::new();
            entry.insert("op".into(), json!("periods"));
            entry.insert("periods".into(), json!(coupled));
            entry.insert("spread".into(), json!(spread(&coupled)));
            if *compare_uncoupled {
                let no_edges = CouplingGraph::symmetric(built.n_nodes(), nd, vec![])?;
                let free = coupled_canonical_field(no_edges, &built.params, None)?;
                let free_net = CpgNetworkField::new(None, free, vec![])?;
                let cfg = built.scenario.integrator.build(free_net.dim(), built.seed)?;
                let mut x0 = DVector::zeros(free_net.dim());
                let full_x0 = built.initial_state(&built.network(false)?);
                let field_full = built.network(false)?;
                for i in 0..built.n_nodes() {
                    for p in 0..nd {
                        x0[i * nd + p] = full_x0[field_full.canonical_offset(i) + p];
                    }
                }
                let free_traj = integrate(&free_net, &x0, &cfg)?;
                let mut periods = Vec::new();
                for i in 0..built.n_nodes() {
                    periods.push(node_period(&free_traj, i * nd, free_net.dim(), *transient)?);
                }
                entry.insert("uncoupled_periods".into(), json!(periods));
                entry.insert("uncoupled_spread".into(), json!(spread(&periods)));
            }
            Ok(Value::Object(entry))
        }
        PipelineStep::SyncError { window } => {
            let traj = trajectory.as_ref().ok_or_else(|| {
                CliError::Scenario("sync_error step needs a prior simulate".into())
            })?;
            let field = built.network(false)?;
            // Slice out the canonical block when other subsystems surround it.
            let off = field.canonical_offset(0);
            let canonical_traj = Trajectory {
                times: traj.times.clone(),
                states: traj
                    .states
                    .iter()
                    .map(|s| {
                        DVector::from_column_slice(
                            &s.as_slice()[off..off + built.n_nodes() * nd],
                        )
                    })
                    .collect(),
                events: vec![],
            };
            let err = sync_error(&canonical_traj, nd, *window)?;
            Ok(json!({"op": "sync_error", "window": window, "max_pairwise": err}))
        }
        PipelineStep::PhaseOffsets { transient, until } => {
            let traj = trajectory.as_ref().ok_or_else(|| {
                CliError::Scenario("phase_offsets step needs a prior simulate".into())
            })?;
            if nd != 2 {
                return Err(CliError::Scenario(
                    "phase offsets need planar canonical nodes".into(),
                ));
            }
            let field = built.network(false)?;
            let idx = traj.index_at(*transient);
            let end = until.unwrap_or(f64::INFINITY);
            let stop = traj.index_at(end);
            let mut worst: f64 = 0.0;
            for s in traj.states.iter().take(stop.max(idx)).skip(idx) {
                for i in 0..built.n_nodes() {
                    for j in (i + 1)..built.n_nodes() {
                        let oi = field.canonical_offset(i);
                        let oj = field.canonical_offset(j);
                        let ti = s[oi + 1].atan2(s[oi]);
                        let tj = s[oj + 1].atan2(s[oj]);
                        let commanded = built.node_phases[j] - built.node_phases[i];
                        worst = worst.max(wrap_angle(ti - tj - commanded).abs());
                    }
                }
            }
            Ok(json!({
                "op": "phase_offsets",
                "transient": transient,
                "max_offset_error_rad": worst,
            }))
        }
        PipelineStep::InhibitionReport { settle, recover } => {
            let traj = trajectory.as_ref().ok_or_else(|| {
                CliError::Scenario("inhibition_report step needs a prior simulate".into())
            })?;
            let armed = traj
                .events
                .iter()
                .find(|e| e.label == "armed")
                .map(|e| e.time)
                .ok_or_else(|| CliError::Scenario("inhibition never armed".into()))?;
            let released = traj
                .events
                .iter()
                .find(|e| e.label == "released")
                .map(|e| e.time)
                .unwrap_or(f64::INFINITY);
            let field = built.network(false)?;
            let settle_end = released.min(*traj.times.last().unwrap());
            let star_idx = traj.index_at(settle_end).saturating_sub(1);
            let x_star = &traj.states[star_idx];
            let mut amplitude: f64 = 0.0;
            let mut recovery: f64 = 0.0;
            let radius = match built.nominal.kind {
                CanonicalKind::Hopf(p) => p.radius,
                _ => 1.0,
            };
            for (t, s) in traj.times.iter().zip(&traj.states) {
                if *t >= armed + settle && *t <= settle_end {
                    for i in 0..built.n_nodes() {
                        let off = field.canonical_offset(i);
                        let mut d2 = 0.0;
                        for p in 0..nd {
                            d2 += (s[off + p] - x_star[off + p]).powi(2);
                        }
                        amplitude = amplitude.max(d2.sqrt());
                    }
                }
                if *t >= released + recover {
                    for i in 0..built.n_nodes() {
                        let off = field.canonical_offset(i);
                        let mut r2 = 0.0;
                        for p in 0..nd {
                            r2 += s[off + p].powi(2);
                        }
                        recovery = recovery.max((r2.sqrt() - radius).abs());
                    }
                }
            }
            Ok(json!({
                "op": "inhibition_report",
                "armed_at": armed,
                "released_at": if released.is_finite() { json!(released) } else { Value::Null },
                "amplitude_after_settle": amplitude,
                "radius_error_after_recover": recovery,
            }))
        }
        PipelineStep::CertifySync { region, samples } => {
            let graph = built
                .graph
                .as_ref()
                .ok_or_else(|| CliError::Scenario("certify_sync needs a graph".into()))?;
            let lap = assemble_block_laplacian(graph)?;
            let sampler = RegionSampler::new(region.build(), samples_override(*samples), built.seed)?;
            let fields: Vec<&dyn VectorField> = built
                .params
                .per_node
                .iter()
                .map(|n| n as &dyn VectorField)
                .collect();
            let report = check_sync_condition(&lap, &fields, &sampler)?;
            if built.scenario.outputs.spectrum_csv {
                let path = layout.spectrum();
                write_atomic(&path, &spectrum_csv(lap.eigenvalues_desc()))?;
                wrote.push(path);
            }
            let path = layout.certificate("sync", index);
            write_atomic(&path, &serde_json::to_string_pretty(&report).unwrap())?;
            wrote.push(path);
            table.push(("sync".into(), report.certificate.pass));
            Ok(json!({
                "op": "certify_sync",
                "pass": report.certificate.pass,
                "lambda_n_plus_1": report.lambda_n_plus_1,
                "sup_lambda_max": report.sup_lambda_max,
                "projected_min_eig": report.projected_min_eig,
                "mu_conditions": report.mu_conditions,
            }))
        }
        PipelineStep::CertifyTransverse {
            region,
            rate,
            samples,
        } => {
            let sampler = RegionSampler::new(region.build(), samples_override(*samples), built.seed)?;
            let metric = IdentityMetric::new(nd);
            let cert = check_transverse_contraction(
                &built.nominal,
                &metric,
                &sampler,
                *rate,
                MARGIN_TOLERANCE,
            )?;
            let path = layout.certificate("transverse", index);
            write_atomic(&path, &cert.to_json())?;
            wrote.push(path);
            table.push(("transverse".into(), cert.pass));
            Ok(json!({
                "op": "certify_transverse",
                "pass": cert.pass,
                "rate": rate,
                "worst_margin": cert.worst_margin,
            }))
        }
        PipelineStep::CertifyContraction {
            region,
            rate,
            samples,
            with_inhibition,
        } => {
            let sampler = RegionSampler::new(region.build(), samples_override(*samples), built.seed)?;
            let metric = IdentityMetric::new(nd);
            let cert = if *with_inhibition {
                let inh = built.scenario.inhibition.as_ref().ok_or_else(|| {
                    CliError::Scenario(
                        "certify_contraction with_inhibition needs an inhibition section".into(),
                    )
                })?;
                let goal = DVector::from_column_slice(&inh.goals[0]);
                let field = inhibited_node_field(built.nominal.clone(), goal, inh.gain);
                check_contraction(&field, &metric, &sampler, *rate, MARGIN_TOLERANCE)?
            } else {
                check_contraction(&built.nominal, &metric, &sampler, *rate, MARGIN_TOLERANCE)?
            };
            let path = layout.certificate("contraction", index);
            write_atomic(&path, &cert.to_json())?;
            wrote.push(path);
            table.push(("contraction".into(), cert.pass));
            Ok(json!({
                "op": "certify_contraction",
                "pass": cert.pass,
                "rate": rate,
                "worst_margin": cert.worst_margin,
            }))
        }
        PipelineStep::MetricSynthesis {
            cycle_points,
            radius,
        } => {
            let CanonicalKind::Hopf(p) = built.nominal.kind else {
                return Err(CliError::Scenario(
                    "metric_synthesis needs a Hopf canonical system".into(),
                ));
            };
            let r_cycle = p.radius * radius;
            let points: Vec<DVector<f64>> = (0..*cycle_points)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / *cycle_points as f64;
                    DVector::from_column_slice(&[r_cycle * th.cos(), r_cycle * th.sin()])
                })
                .collect();
            let sampler = RegionSampler::new(Region::Points(points.clone()), 0, 0)?;
            let metric = IdentityMetric::new(2);
            let rate =
                0.999 * estimate_transverse_rate(&built.nominal, &metric, &sampler)?;
            let controls = HorizonControls {
                step: built.scenario.integrator.step,
                ..HorizonControls::default()
            };
            let build = build_singular_metric(&built.nominal, &points, rate, &controls, None)?;
            let full = build_full_metric(&build, rate / 2.0)?;
            let rows: Vec<(usize, f64, f64, f64, f64)> = build
                .points
                .iter()
                .zip(&full.points)
                .enumerate()
                .map(|(i, (s, f))| {
                    (
                        i,
                        f.f_s_eigenvalues[0],
                        f.f_s_eigenvalues[1],
                        s.ms_f_residual,
                        f.structure_residual,
                    )
                })
                .collect();
            let path = layout.eigen_report(index);
            write_atomic(&path, &eigen_report_csv(&rows))?;
            wrote.push(path);
            let worst_residual = build
                .points
                .iter()
                .map(|q| q.ms_f_residual)
                .fold(0.0, f64::max);
            let rank_ok = build.points.iter().all(|q| q.near_zero_eigenvalues == 1);
            let eig_ok = full
                .points
                .iter()
                .all(|q| {
                    q.f_s_eigenvalues[1] < 0.0
                        && q.f_s_eigenvalues[0].abs() <= 1e-3 * q.f_s_eigenvalues[1].abs()
                });
            let pass = worst_residual < 1e-6 && rank_ok && eig_ok;
            let summary = json!({
                "op": "metric_synthesis",
                "pass": pass,
                "rate": rate,
                "r": rate / 2.0,
                "worst_ms_residual": worst_residual,
                "rank_n_minus_1": rank_ok,
                "eigenstructure": eig_ok,
                "condition_number_bound": full.condition_number_bound(),
            });
            let path = layout.certificate("metric_synthesis", index);
            write_atomic(&path, &serde_json::to_string_pretty(&summary).unwrap())?;
            wrote.push(path);
            table.push(("metric_synthesis".into(), pass));
            Ok(summary)
        }
        PipelineStep::TubeCheck {
            region,
            runs,
            magnitude,
            dwell,
            duration,
        } => {
            let CanonicalKind::Hopf(p) = built.nominal.kind else {
                return Err(CliError::Scenario(
                    "tube_check needs a Hopf canonical system".into(),
                ));
            };
            let sampler = RegionSampler::new(region.build(), samples_override(4096), built.seed)?;
            let metric = IdentityMetric::new(2);
            let rate = 0.999 * estimate_transverse_rate(&built.nominal, &metric, &sampler)?;
            let disturbances: Vec<Disturbance> = (0..*runs as u64)
                .map(|k| Disturbance::PiecewiseConstant {
                    magnitude: *magnitude,
                    dwell: *dwell,
                    seed: built.seed.wrapping_add(k),
                    dim: 2,
                })
                .collect();
            let config = TubeCheckConfig {
                step: built.scenario.integrator.step,
                disturbed_duration: *duration,
                nominal_duration: built.nominal.tau * 2.0 * std::f64::consts::PI / p.omega.abs(),
            };
            let start = DVector::from_column_slice(&[p.radius, 0.0]);
            let report = tube_bound_check(
                &built.nominal,
                &metric,
                &sampler,
                rate,
                &start,
                &disturbances,
                &config,
            )?;
            let path = layout.certificate("tube", index);
            write_atomic(&path, &serde_json::to_string_pretty(&report).unwrap())?;
            wrote.push(path);
            table.push(("tube".into(), report.pass));
            Ok(json!({
                "op": "tube_check",
                "pass": report.pass,
                "rate": rate,
                "worst_ratio": report.worst_ratio,
                "inconclusive": report.inconclusive,
            }))
        }
    }
}

/// Runs a learning configuration: ingest the demonstration, fit weights, and
/// emit them in the scenario forcing format.
pub fn run_learn(config: crate::config::LearnConfig, opts: &RunOptions) -> Result<RunSummary> {
    use dmpnet::learning::{compute_target_forcing, fit_weights, BasisSpec, FittedWeights, PhaseRollout};

    let layout = OutputLayout::new(&opts.out_dir, &config.name);
    let params = dmpnet::learning::DmpParams {
        k: config.params.k,
        b: config.params.b,
        g: config.params.g,
        tau: config.params.tau,
    };
    let demo =
        crate::output::read_demonstration_csv(std::path::Path::new(&config.demo_csv), params)?;
    let targets = compute_target_forcing(&demo)?;

    let canonical = config.canonical.build()?;
    let rollout = match canonical.kind {
        CanonicalKind::Custom(_) => {
            return Err(CliError::Scenario(
                "learning rollouts support exponential-decay and Hopf canonical systems".into(),
            ))
        }
        CanonicalKind::ExponentialDecay { alpha_x } => {
            dmpnet::learning::decay_rollout(alpha_x, canonical.tau, 1.0, &demo.times)
        }
        CanonicalKind::Hopf(p) => {
            // Analytic on-cycle rollout from (r, 0): θ(t) = -ω t / τ.
            PhaseRollout::Planar(
                demo.times
                    .iter()
                    .map(|t| {
                        let th = -p.omega * t / canonical.tau;
                        nalgebra::Vector2::new(p.radius * th.cos(), p.radius * th.sin())
                    })
                    .collect(),
            )
        }
        CanonicalKind::VanDerPol(_) => {
            return Err(CliError::Scenario(
                "learning rollouts support exponential-decay and Hopf canonical systems".into(),
            ))
        }
    };
    let basis = match &config.basis {
        crate::config::BasisConfig::Gaussian { centers, sigma } => BasisSpec::Gaussian {
            centers: centers.clone(),
            sigma: *sigma,
        },
        crate::config::BasisConfig::VonMises { centers, sigma } => BasisSpec::VonMises {
            centers: centers.clone(),
            sigma: *sigma,
        },
    };
    let fit = fit_weights(&targets, &rollout, &basis, config.ridge)?;
    let forcing_fragment = match (&config.basis, &fit.weights) {
        (crate::config::BasisConfig::Gaussian { centers, sigma }, FittedWeights::Scalar(w)) => {
            json!({"kind": "gaussian", "centers": centers, "sigma": sigma, "weights": w})
        }
        (crate::config::BasisConfig::VonMises { centers, sigma }, FittedWeights::Planar(w)) => {
            json!({
                "kind": "von_mises",
                "centers": centers,
                "sigma": sigma,
                "weights": w.iter().map(|v| [v.x, v.y]).collect::<Vec<_>>(),
            })
        }
        _ => unreachable!("basis and weight kinds always align"),
    };
    let report = json!({
        "name": config.name,
        "samples": demo.times.len(),
        "residual_rmse": fit.residual_rmse,
        "forcing": forcing_fragment,
    });
    let mut wrote = Vec::new();
    let path = layout.weights();
    write_atomic(&path, &serde_json::to_string_pretty(&report).unwrap())?;
    wrote.push(path);
    Ok(RunSummary {
        report,
        table: vec![],
        wrote,
    })
}
