// Generates the bundled demonstration CSV for the learn subcommand.
use dmpnet::dynamics::{
    compose_hierarchy, CanonicalSystem, Forcing, GaussianForcing, TransformKind,
    TransformationSystem, VectorField,
};
use dmpnet::simulate::{integrate, IntegratorConfig};
use nalgebra::dvector;
use std::fmt::Write;

fn main() {
    let weights = [3.0, -1.5, 2.0, 0.5, -2.5, 1.0, 0.7, 4.0, -3.0, 1.5];
    let centers: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let forcing = GaussianForcing::new(centers, 0.12, weights.to_vec()).unwrap();
    let canonical = CanonicalSystem::exponential_decay(4.0, 1.0).unwrap();
    let transform = TransformationSystem::new(
        25.0,
        10.0,
        1.0,
        TransformKind::SpringDamper {
            goal: 1.0,
            forcing: Some(Forcing::Gaussian(forcing)),
        },
    )
    .unwrap();
    let h = compose_hierarchy(None, canonical, vec![transform]).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 2.0).unwrap();
    let traj = integrate(&h, &dvector![1.0, 0.0, 0.0], &cfg).unwrap();
    let mut out = String::from("t,y,ydot,yddot\n");
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let ydd = h.eval(s).unwrap()[2];
        let _ = writeln!(out, "{t},{},{},{ydd}", s[1], s[2]);
    }
    std::fs::write("data/demo_gaussian.csv", out).unwrap();
    eprintln!("wrote data/demo_gaussian.csv ({} samples)", traj.len());
}
