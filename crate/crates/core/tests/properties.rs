//! Cross-module behavioral properties: heterogeneous-network period
//! agreement, robustness of synchronization to parameter spread under
//! growing gains, and synchronization-condition oracles.

use nalgebra::{dvector, DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dmpnet::contraction::{check_sync_condition, Region, RegionSampler};
use dmpnet::dynamics::CanonicalSystem;
use dmpnet::network::{
    assemble_block_laplacian, coupled_canonical_field, sync_error, CouplingGraph,
    HeterogeneousParams,
};
use dmpnet::simulate::{estimate_period, integrate, IntegratorConfig, Section};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn hetero_hopf(n: usize, spread: f64) -> HeterogeneousParams {
    let nominal = CanonicalSystem::hopf(TWO_PI, 1.0, 1.0, 1.0).unwrap();
    let per_node: Vec<CanonicalSystem> = (0..n)
        .map(|i| {
            let factor = 1.0 + spread * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
            CanonicalSystem::hopf(TWO_PI * factor, 1.0, 1.0, 1.0).unwrap()
        })
        .collect();
    HeterogeneousParams::new(nominal, per_node).unwrap()
}

fn random_start(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
}

fn node_period(traj: &dmpnet::simulate::Trajectory, node: usize, transient: f64) -> f64 {
    let dim = traj.dim();
    let mut normal = DVector::zeros(dim);
    normal[2 * node] = 1.0;
    let section = Section::new(normal, DVector::zeros(dim)).unwrap();
    estimate_period(traj, &section, transient).unwrap().period
}

#[test]
fn heterogeneous_hopf_network_shares_one_period() {
    // ±10% natural frequencies with gains above the threshold: every node
    // orbits the one limit cycle, so period estimates agree within 0.5%.
    let params = hetero_hopf(4, 0.10);
    let graph = CouplingGraph::all_to_all(4, DMatrix::identity(2, 2) * 1.0).unwrap();
    let field = coupled_canonical_field(graph, &params, None).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 30.0).unwrap();
    let traj = integrate(&field, &random_start(8, 9), &cfg).unwrap();
    let periods: Vec<f64> = (0..4).map(|i| node_period(&traj, i, 20.0)).collect();
    let hi = periods.iter().cloned().fold(f64::MIN, f64::max);
    let lo = periods.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        (hi - lo) / lo < 0.005,
        "periods spread by {:.4}%: {periods:?}",
        100.0 * (hi - lo) / lo
    );
}

#[test]
fn sync_error_shrinks_as_gains_grow() {
    // The disturbance bound scales like 1/λ in the coupling: scaling every
    // gain up must shrink the steady-state sync error, monotonically over a
    // four-point gain ladder.
    let params = hetero_hopf(4, 0.10);
    let mut previous = f64::INFINITY;
    for gain in [0.5, 1.0, 2.0, 4.0] {
        let graph = CouplingGraph::all_to_all(4, DMatrix::identity(2, 2) * gain).unwrap();
        let field = coupled_canonical_field(graph, &params, None).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 25.0).unwrap();
        let traj = integrate(&field, &random_start(8, 3), &cfg).unwrap();
        let err = sync_error(&traj, 2, 3.0).unwrap();
        assert!(
            err < previous,
            "sync error rose from {previous:.3e} to {err:.3e} at gain {gain}"
        );
        previous = err;
    }
}

#[test]
fn mismatch_bound_is_instantiable_along_the_trajectory() {
    // d̄ = sup |d(x(t))| is finite and the observed steady error sits below
    // the shape of the bound (r/λ)·d̄ with λ the Laplacian margin.
    let params = hetero_hopf(4, 0.10);
    let gain = 2.0;
    let graph = CouplingGraph::all_to_all(4, DMatrix::identity(2, 2) * gain).unwrap();
    let lap = assemble_block_laplacian(&graph).unwrap();
    let lambda = lap.eigenvalue_desc(5).unwrap() - 1.0; // margin over sup λ_max(A_s)
    let field = coupled_canonical_field(graph, &params, None).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 25.0).unwrap();
    let traj = integrate(&field, &random_start(8, 4), &cfg).unwrap();
    let d_bar = params.max_mismatch_along(&traj).unwrap();
    assert!(d_bar.is_finite() && d_bar > 0.0);
    let err = sync_error(&traj, 2, 3.0).unwrap();
    // The bound carries a metric-dependent constant r = O(1); observed
    // steady errors must sit within a small multiple of d̄/λ.
    let shape = d_bar / lambda;
    assert!(
        err <= 2.0 * shape,
        "steady error {err:.3e} far above the bound shape {shape:.3e}"
    );
}

#[test]
fn heterogeneous_vdp_pair_syncs_tighter_at_higher_gain() {
    let nominal = CanonicalSystem::van_der_pol(TWO_PI, 2.0, true, 1.0).unwrap();
    let nodes = vec![
        CanonicalSystem::van_der_pol(0.95 * TWO_PI, 1.8, true, 1.0).unwrap(),
        CanonicalSystem::van_der_pol(1.05 * TWO_PI, 2.2, true, 1.0).unwrap(),
    ];
    let params = HeterogeneousParams::new(nominal, nodes).unwrap();
    let run = |k: f64| {
        let graph = CouplingGraph::all_to_all(2, DMatrix::identity(2, 2) * k).unwrap();
        let field = coupled_canonical_field(graph, &params, None).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 40.0).unwrap();
        let x0 = DVector::from_column_slice(&[0.5, 0.0, -0.4, 0.3]);
        let traj = integrate(&field, &x0, &cfg).unwrap();
        sync_error(&traj, 2, 5.0).unwrap()
    };
    let err4 = run(4.0);
    let err8 = run(8.0);
    assert!(
        err8 < err4,
        "error at gain 8 ({err8:.3e}) not below gain 4 ({err4:.3e})"
    );
}

#[test]
fn annulus_sweep_matches_the_symbolic_supremum() {
    // On 0.9 ≤ |x| ≤ 1.1 the tangential eigenvalue ρ(r² - s²) dominates and
    // peaks at the inner radius: sup λ_max(A_s) = ρ(r² - 0.81) = 0.19.
    let hopf = CanonicalSystem::hopf(TWO_PI, 1.0, 1.0, 1.0).unwrap();
    let graph = CouplingGraph::all_to_all(4, DMatrix::identity(2, 2)).unwrap();
    let lap = assemble_block_laplacian(&graph).unwrap();
    let sampler = RegionSampler::new(
        Region::Annulus {
            center: dvector![0.0, 0.0],
            inner: 0.9,
            outer: 1.1,
        },
        8192,
        0,
    )
    .unwrap();
    let report = check_sync_condition(&lap, &[&hopf], &sampler).unwrap();
    assert!(
        (report.sup_lambda_max - 0.19).abs() < 2e-4,
        "sampled sup {} vs symbolic 0.19",
        report.sup_lambda_max
    );
}

#[test]
fn vanishing_gains_fail_the_sync_condition() {
    // With gains at the positive-definiteness floor, λ_{N+1} collapses to
    // zero and the strict inequality fails.
    let hopf = CanonicalSystem::hopf(TWO_PI, 1.0, 1.0, 1.0).unwrap();
    let graph = CouplingGraph::all_to_all(4, DMatrix::identity(2, 2) * 1e-12).unwrap();
    let lap = assemble_block_laplacian(&graph).unwrap();
    let sampler = RegionSampler::new(
        Region::Ball {
            center: dvector![0.0, 0.0],
            radius: 1.3,
        },
        512,
        0,
    )
    .unwrap();
    let report = check_sync_condition(&lap, &[&hopf], &sampler).unwrap();
    assert!(report.lambda_n_plus_1 < 1e-10);
    assert!(!report.certificate.pass);
}

#[test]
fn disconnected_graph_is_rejected_by_the_sync_check() {
    let hopf = CanonicalSystem::hopf(TWO_PI, 1.0, 1.0, 1.0).unwrap();
    let graph = CouplingGraph::symmetric(4, 2, vec![]).unwrap();
    let lap = assemble_block_laplacian(&graph).unwrap();
    let sampler = RegionSampler::new(
        Region::Ball {
            center: dvector![0.0, 0.0],
            radius: 1.0,
        },
        64,
        0,
    )
    .unwrap();
    assert!(check_sync_condition(&lap, &[&hopf], &sampler).is_err());
}
