//! Sampled contraction, transverse-contraction, synchronization, and
//! hierarchy-composition checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::VectorField;
use crate::error::CoreError;
use crate::linalg::{
    lambda_max_sym, max_generalized_eig, orthonormal_complement, sym_eigenvalues_desc,
};
use crate::network::BlockLaplacian;

use super::measures::{matrix_measure, MeasureNorm};
use super::metric::Metric;
use super::sampler::RegionSampler;
use super::{metric_derivative_along, Certificate, CertificateKind, EVIDENCE_NOTE};

/// Default acceptance tolerance on margins.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

/// States with `|f(x)|` below this scale-relative floor count as equilibria
/// for the transverse-contraction precondition.
const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;

/// The quadratic form of the contraction condition at one sample, with the
/// metric and field values it was built from.
struct FormAt {
    form: DMatrix<f64>,
    metric: DMatrix<f64>,
    field: DVector<f64>,
}

fn contraction_form(
    field: &dyn VectorField,
    metric: &dyn Metric,
    x: &DVector<f64>,
    rate: f64,
) -> Result<FormAt, CoreError> {
    let f = field.eval(x)?;
    let a = field.jacobian(x)?;
    let m = metric.eval(x)?;
    let mdot = metric_derivative_along(metric, x, &f)?;
    let g = mdot + a.transpose() * &m + &m * a + &m * (2.0 * rate);
    Ok(FormAt {
        form: g,
        metric: m,
        field: f,
    })
}

/// Checks `Ṁ + AᵀM + MA + 2λM ≤ 0` at every sample; the margin at a sample
/// is the largest eigenvalue of the left side relative to `M`.
pub fn check_contraction(
    field: &dyn VectorField,
    metric: &dyn Metric,
    sampler: &RegionSampler,
    rate: f64,
    tolerance: f64,
) -> Result<Certificate, CoreError> {
    if metric.dim() != field.dim() {
        return Err(CoreError::DimensionMismatch(
            "metric and field dimensions differ".into(),
        ));
    }
    let samples = sampler.samples();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = DVector::zeros(field.dim());
    let mut metric_floor = f64::INFINITY;
    for x in &samples {
        let at = contraction_form(field, metric, x, rate)?;
        metric_floor = metric_floor.min(*sym_eigenvalues_desc(&at.metric).last().unwrap());
        let margin = max_generalized_eig(&at.form, &at.metric)?;
        if margin > worst {
            worst = margin;
            witness = x.clone();
        }
    }
    Ok(Certificate::new(
        CertificateKind::Contraction,
        metric.id(),
        rate,
        worst,
        witness.as_slice().to_vec(),
        samples.len(),
        tolerance,
    )
    .with_note(format!(
        "metric minimum eigenvalue over the samples: {metric_floor:.3e}"
    )))
}

/// Checks the transverse condition: at each sample the quadratic form
/// `Ṁ + AᵀM + MA + 2λM` restricted to `{δ : f(x)ᵀM(x)δ = 0}` must be
/// negative semidefinite. The margin is the largest restricted eigenvalue
/// relative to the restricted metric, which makes it invariant under
/// diffeomorphic pushforward. Equilibria inside the region violate the
/// precondition and are reported with the offending point.
pub fn check_transverse_contraction(
    field: &dyn VectorField,
    metric: &dyn Metric,
    sampler: &RegionSampler,
    rate: f64,
    tolerance: f64,
) -> Result<Certificate, CoreError> {
    if metric.dim() != field.dim() {
        return Err(CoreError::DimensionMismatch(
            "metric and field dimensions differ".into(),
        ));
    }
    let samples = sampler.samples();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = DVector::zeros(field.dim());
    let mut metric_floor = f64::INFINITY;
    for x in &samples {
        let at = contraction_form(field, metric, x, rate)?;
        if at.field.norm() <= EQUILIBRIUM_TOLERANCE * (1.0 + x.norm()) {
            return Err(CoreError::Precondition(format!(
                "f(x) = 0 inside the region at x = {:?}",
                x.as_slice()
            )));
        }
        metric_floor = metric_floor.min(*sym_eigenvalues_desc(&at.metric).last().unwrap());
        let basis = orthonormal_complement(&(&at.metric * &at.field))?;
        let restricted = basis.transpose() * &at.form * &basis;
        let restricted_metric = basis.transpose() * &at.metric * &basis;
        let margin = max_generalized_eig(&restricted, &restricted_metric)?;
        if margin > worst {
            worst = margin;
            witness = x.clone();
        }
    }
    Ok(Certificate::new(
        CertificateKind::Transverse,
        metric.id(),
        rate,
        worst,
        witness.as_slice().to_vec(),
        samples.len(),
        tolerance,
    )
    .with_note(format!(
        "metric minimum eigenvalue over the samples: {metric_floor:.3e}"
    )))
}

/// The largest rate the sampled transverse condition supports: the infimum
/// over samples of the generalized-eigenvalue bound on the restricted form.
pub fn estimate_transverse_rate(
    field: &dyn VectorField,
    metric: &dyn Metric,
    sampler: &RegionSampler,
) -> Result<f64, CoreError> {
    let samples = sampler.samples();
    let mut rate = f64::INFINITY;
    for x in &samples {
        let at = contraction_form(field, metric, x, 0.0)?;
        if at.field.norm() <= EQUILIBRIUM_TOLERANCE * (1.0 + x.norm()) {
            return Err(CoreError::Precondition(format!(
                "f(x) = 0 inside the region at x = {:?}",
                x.as_slice()
            )));
        }
        let basis = orthonormal_complement(&(&at.metric * &at.field))?;
        let g_r = basis.transpose() * &at.form * &basis;
        let m_r = basis.transpose() * &at.metric * &basis;
        let allowed = -0.5 * max_generalized_eig(&g_r, &m_r)?;
        rate = rate.min(allowed);
    }
    Ok(rate)
}

/// Synchronization-condition report: the eigenvalue route, the projected
/// route, and the matrix-measure route under three norms, side by side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncConditionReport {
    pub certificate: Certificate,
    /// `λ_{N+1}(L_K)` with eigenvalues sorted non-increasing.
    pub lambda_n_plus_1: f64,
    /// `sup_x λ_max(A_s)` over the sampled region, per node.
    pub sup_lambda_max_per_node: Vec<f64>,
    pub sup_lambda_max: f64,
    /// Smallest eigenvalue of `V L_K Vᵀ` on the sync complement.
    pub projected_min_eig: f64,
    /// `max_i μ(A_i) + μ(-V L_K Vᵀ)` under norms 1, 2, ∞ (negative passes).
    pub mu_conditions: Vec<(String, f64)>,
    pub connected: bool,
}

/// Checks the network synchronization condition
/// `λ_{N+1}(L_K) > max_i λ_max(A_is)` for diffusively coupled nodes.
///
/// `fields` holds either one field shared by all nodes or one per node. The
/// pass verdict uses the strict eigenvalue inequality; the projected and
/// matrix-measure forms are reported alongside without affecting it.
pub fn check_sync_condition(
    laplacian: &BlockLaplacian,
    fields: &[&dyn VectorField],
    sampler: &RegionSampler,
) -> Result<SyncConditionReport, CoreError> {
    if !laplacian.connected() {
        return Err(CoreError::Precondition(
            "synchronization condition needs a connected graph".into(),
        ));
    }
    let n_nodes = laplacian.n_nodes();
    if fields.len() != 1 && fields.len() != n_nodes {
        return Err(CoreError::DimensionMismatch(format!(
            "{} fields for {} nodes (pass 1 to share)",
            fields.len(),
            n_nodes
        )));
    }
    let node_dim = laplacian.node_dim();
    for f in fields {
        if f.dim() != node_dim {
            return Err(CoreError::DimensionMismatch(
                "node field dimension does not match the Laplacian blocks".into(),
            ));
        }
    }
    let samples = sampler.samples();
    if samples.is_empty() {
        return Err(CoreError::InvalidParameter("no samples".into()));
    }

    let mut sup_per_node = Vec::with_capacity(n_nodes);
    let mut witness = samples[0].clone();
    let mut sup_overall = f64::NEG_INFINITY;
    let mut mu_node_max = [f64::NEG_INFINITY; 3];
    let norms = [MeasureNorm::One, MeasureNorm::Two, MeasureNorm::Inf];
    for i in 0..n_nodes {
        let field = if fields.len() == 1 { fields[0] } else { fields[i] };
        let mut sup_i = f64::NEG_INFINITY;
        for x in &samples {
            let a = field.jacobian(x)?;
            let lam = lambda_max_sym(&a);
            if lam > sup_i {
                sup_i = lam;
            }
            if lam > sup_overall {
                sup_overall = lam;
                witness = x.clone();
            }
            for (k, &norm) in norms.iter().enumerate() {
                mu_node_max[k] = mu_node_max[k].max(matrix_measure(&a, norm));
            }
        }
        sup_per_node.push(sup_i);
        if fields.len() == 1 {
            // Identical nodes: one sweep fixes every row.
            for _ in 1..n_nodes {
                sup_per_node.push(sup_i);
            }
            break;
        }
    }

    let lambda_n_plus_1 = laplacian.eigenvalue_desc(n_nodes + 1)?;
    let projected = laplacian.projected_sym();
    let projected_min_eig = *sym_eigenvalues_desc(&projected).last().unwrap();
    let neg_projected = -projected;
    let mu_conditions: Vec<(String, f64)> = norms
        .iter()
        .zip(["one", "two", "inf"])
        .enumerate()
        .map(|(k, (&norm, name))| {
            (
                name.to_string(),
                mu_node_max[k] + matrix_measure(&neg_projected, norm),
            )
        })
        .collect();

    let margin = sup_overall - lambda_n_plus_1;
    let mut certificate = Certificate::new(
        CertificateKind::Synchronization,
        "identity".into(),
        (lambda_n_plus_1 - sup_overall).max(0.0),
        margin,
        witness.as_slice().to_vec(),
        samples.len(),
        0.0,
    );
    // The condition is a strict inequality.
    certificate.pass = margin < 0.0;
    certificate = certificate.with_note(
        "pass requires the strict inequality lambda_{N+1}(L_K) > sup lambda_max(A_s)",
    );

    Ok(SyncConditionReport {
        certificate,
        lambda_n_plus_1,
        sup_lambda_max_per_node: sup_per_node,
        sup_lambda_max: sup_overall,
        projected_min_eig,
        mu_conditions,
        connected: true,
    })
}

/// Combines per-layer certificates of a cascade in order.
///
/// All layers contracting gives a contracting hierarchy; exactly one
/// transverse layer gives a transverse-contracting hierarchy. More than one
/// transverse layer has no composition rule and is rejected.
pub fn check_hierarchy(layers: &[Certificate]) -> Result<Certificate, CoreError> {
    if layers.is_empty() {
        return Err(CoreError::InvalidParameter(
            "hierarchy needs at least one layer certificate".into(),
        ));
    }
    let mut transverse_count = 0;
    for c in layers {
        match c.kind {
            CertificateKind::Contraction => {}
            CertificateKind::Transverse => transverse_count += 1,
            CertificateKind::Synchronization => {
                return Err(CoreError::Unsupported(
                    "hierarchy layers must be contraction or transverse certificates".into(),
                ))
            }
        }
    }
    if transverse_count > 1 {
        return Err(CoreError::Unsupported(
            "no composition rule for more than one transverse layer".into(),
        ));
    }
    let kind = if transverse_count == 1 {
        CertificateKind::Transverse
    } else {
        CertificateKind::Contraction
    };
    let worst = layers
        .iter()
        .max_by(|a, b| a.worst_margin.partial_cmp(&b.worst_margin).unwrap())
        .unwrap();
    let mut combined = Certificate {
        kind,
        metric: format!(
            "hierarchy[{}]",
            layers
                .iter()
                .map(|c| c.metric.clone())
                .collect::<Vec<_>>()
                .join(" -> ")
        ),
        rate: layers.iter().map(|c| c.rate).fold(f64::INFINITY, f64::min),
        worst_margin: worst.worst_margin,
        witness: worst.witness.clone(),
        samples: layers.iter().map(|c| c.samples).sum(),
        tolerance: worst.tolerance,
        pass: layers.iter().all(|c| c.pass),
        notes: vec![EVIDENCE_NOTE.to_string()],
    };
    combined.notes.push(format!(
        "cascade of {} layers, {} transverse",
        layers.len(),
        transverse_count
    ));
    Ok(combined)
}

/// Combines a transverse certificate on `K` with a contraction certificate
/// on `C` when the sampled regions intersect: within `K ∪ C` a unique
/// equilibrium attracts every trajectory (to be confirmed by simulation).
pub fn check_funnel(
    transverse: &Certificate,
    contraction: &Certificate,
    k_sampler: &RegionSampler,
    c_sampler: &RegionSampler,
) -> Result<Certificate, CoreError> {
    if transverse.kind != CertificateKind::Transverse {
        return Err(CoreError::Precondition(
            "first certificate must be transverse".into(),
        ));
    }
    if contraction.kind != CertificateKind::Contraction {
        return Err(CoreError::Precondition(
            "second certificate must be contraction".into(),
        ));
    }
    let shared = c_sampler
        .samples()
        .iter()
        .filter(|x| k_sampler.region.contains(x))
        .count()
        + k_sampler
            .samples()
            .iter()
            .filter(|x| c_sampler.region.contains(x))
            .count();
    if shared == 0 {
        return Err(CoreError::Precondition(
            "sampled intersection of K and C is empty".into(),
        ));
    }
    let worst = transverse.worst_margin.max(contraction.worst_margin);
    let mut cert = Certificate::new(
        CertificateKind::Contraction,
        format!("funnel[{} | {}]", transverse.metric, contraction.metric),
        contraction.rate,
        worst,
        contraction.witness.clone(),
        transverse.samples + contraction.samples,
        transverse.tolerance.max(contraction.tolerance),
    );
    cert.pass = transverse.pass && contraction.pass;
    cert = cert.with_note(format!(
        "transverse region and contraction region share {shared} sampled points; \
         predicts a unique equilibrium in their union"
    ));
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::{ConstantMetric, IdentityMetric, Region};
    use crate::dynamics::{CanonicalSystem, LinearField};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::dvector;

    fn disk_sampler(radius: f64, count: usize) -> RegionSampler {
        RegionSampler::new(
            Region::Ball {
                center: dvector![0.0, 0.0],
                radius,
            },
            count,
            0,
        )
        .unwrap()
    }

    #[test]
    fn pure_decay_passes_with_zero_margin() {
        let field = LinearField::new(-DMatrix::identity(2, 2)).unwrap();
        let metric = IdentityMetric::new(2);
        let cert =
            check_contraction(&field, &metric, &disk_sampler(1.0, 128), 1.0, MARGIN_TOLERANCE)
                .unwrap();
        assert!(cert.pass);
        assert_abs_diff_eq!(cert.worst_margin, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn expansion_fails_with_a_witness() {
        let field = LinearField::new(DMatrix::identity(2, 2)).unwrap();
        let metric = IdentityMetric::new(2);
        let cert =
            check_contraction(&field, &metric, &disk_sampler(1.0, 64), 0.1, MARGIN_TOLERANCE)
                .unwrap();
        assert!(!cert.pass);
        assert_relative_eq!(cert.worst_margin, 2.2, epsilon = 1e-12);
        assert_eq!(cert.witness.len(), 2);
    }

    #[test]
    fn inhibition_field_margin_is_exactly_zero_at_its_own_rate() {
        // g(x) = k(x_d - x) has constant Jacobian -kI.
        let k = 7.3;
        let field = crate::dynamics::AffineField::toward(dvector![1.0, 0.0], k);
        let metric = IdentityMetric::new(2);
        let cert =
            check_contraction(&field, &metric, &disk_sampler(1.3, 64), k, MARGIN_TOLERANCE)
                .unwrap();
        assert!(cert.pass);
        assert!(cert.worst_margin.abs() < 1e-6, "margin {}", cert.worst_margin);
    }

    #[test]
    fn lyapunov_metric_certifies_a_rotated_stable_system() {
        // Solve (A+λI)ᵀM + M(A+λI) = -Q for M and certify at that rate.
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -0.5, -2.0]);
        let lambda = 0.4;
        let ashift = &a + DMatrix::identity(2, 2) * lambda;
        // Vectorized Lyapunov solve with Q = I: (I⊗Aᵀ + Aᵀ⊗I) vec(M) = -vec(Q).
        let mut big = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    // d/dM[(k,j)] of (AᵀM)[(i,j)] = Aᵀ[(i,k)]
                    big[(i * 2 + j, k * 2 + j)] += ashift[(k, i)];
                    // d/dM[(i,k)] of (MA)[(i,j)] = A[(k,j)]
                    big[(i * 2 + j, i * 2 + k)] += ashift[(k, j)];
                }
            }
        }
        let rhs = DVector::from_column_slice(&[-1.0, 0.0, 0.0, -1.0]);
        let vec_m = big.lu().solve(&rhs).unwrap();
        let m = DMatrix::from_row_slice(2, 2, vec_m.as_slice());
        let metric = ConstantMetric::new((&m + m.transpose()) * 0.5).unwrap();
        let field = LinearField::new(a).unwrap();
        let cert =
            check_contraction(&field, &metric, &disk_sampler(2.0, 32), lambda, MARGIN_TOLERANCE)
                .unwrap();
        assert!(cert.pass, "margin {}", cert.worst_margin);
        // A slightly larger rate must fail: the Lyapunov rate is tight up to Q.
        let cert_hot = check_contraction(&field, &metric, &disk_sampler(2.0, 32), lambda + 2.0, MARGIN_TOLERANCE)
            .unwrap();
        assert!(!cert_hot.pass);
    }

    #[test]
    fn hopf_transverse_margins_on_the_cycle() {
        // On |x| = r the transverse (radial) form value is -4ρr² + 2λ.
        let field = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let metric = IdentityMetric::new(2);
        let pts: Vec<DVector<f64>> = (0..32)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
                dvector![th.cos(), th.sin()]
            })
            .collect();
        let sampler = RegionSampler::new(Region::Points(pts), 0, 0).unwrap();
        let pass = check_transverse_contraction(&field, &metric, &sampler, 1.9, MARGIN_TOLERANCE)
            .unwrap();
        assert!(pass.pass);
        assert_relative_eq!(pass.worst_margin, -0.2, epsilon = 1e-9);
        let fail = check_transverse_contraction(&field, &metric, &sampler, 2.1, MARGIN_TOLERANCE)
            .unwrap();
        assert!(!fail.pass);
        assert_relative_eq!(fail.worst_margin, 0.2, epsilon = 1e-9);
    }

    #[test]
    fn hopf_annulus_passes_at_a_small_rate() {
        let field = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let metric = IdentityMetric::new(2);
        let sampler = RegionSampler::new(
            Region::Annulus {
                center: dvector![0.0, 0.0],
                inner: 0.8,
                outer: 1.2,
            },
            2048,
            0,
        )
        .unwrap();
        let cert = check_transverse_contraction(&field, &metric, &sampler, 0.1, MARGIN_TOLERANCE)
            .unwrap();
        assert!(cert.pass, "margin {}", cert.worst_margin);
    }

    #[test]
    fn equilibrium_in_the_region_violates_the_precondition() {
        let field = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let metric = IdentityMetric::new(2);
        let sampler = RegionSampler::new(
            Region::Points(vec![dvector![0.0, 0.0]]),
            0,
            0,
        )
        .unwrap();
        match check_transverse_contraction(&field, &metric, &sampler, 0.1, MARGIN_TOLERANCE) {
            Err(CoreError::Precondition(msg)) => assert!(msg.contains("f(x) = 0")),
            other => panic!("expected precondition violation, got {other:?}"),
        }
    }

    #[test]
    fn restricted_eigenvalue_matches_projected_brute_force() {
        // n = 2: the transverse subspace is one-dimensional, so projecting
        // random directions onto it recovers the same extremum exactly.
        let field = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let metric = IdentityMetric::new(2);
        let rate = 0.3;
        let x = dvector![0.9, 0.35];
        let at = contraction_form(&field, &metric, &x, rate).unwrap();
        let (g, m, f) = (at.form, at.metric, at.field);
        let basis = orthonormal_complement(&(&m * &f)).unwrap();
        let restricted = lambda_max_sym(&(basis.transpose() * &g * &basis));
        let v = &m * &f;
        let mut brute = f64::NEG_INFINITY;
        for k in 0..10_000 {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / 10_000.0;
            let d = dvector![ang.cos(), ang.sin()];
            let proj = &d - &v * (v.dot(&d) / v.norm_squared());
            let n = proj.norm();
            if n < 1e-12 {
                continue;
            }
            let u = proj / n;
            brute = brute.max(u.dot(&(&g * &u)));
        }
        assert_relative_eq!(restricted, brute, epsilon = 1e-6);
    }

    #[test]
    fn hierarchy_composition_rules() {
        let mk = |kind, pass| Certificate {
            kind,
            metric: "identity".into(),
            rate: 1.0,
            worst_margin: if pass { -0.5 } else { 0.5 },
            witness: vec![0.0],
            samples: 10,
            tolerance: 0.0,
            pass,
            notes: vec![],
        };
        let all_contracting = [
            mk(CertificateKind::Contraction, true),
            mk(CertificateKind::Contraction, true),
            mk(CertificateKind::Contraction, true),
        ];
        let combined = check_hierarchy(&all_contracting).unwrap();
        assert_eq!(combined.kind, CertificateKind::Contraction);
        assert!(combined.pass);

        let rhythmic = [
            mk(CertificateKind::Contraction, true),
            mk(CertificateKind::Transverse, true),
            mk(CertificateKind::Contraction, true),
        ];
        let combined = check_hierarchy(&rhythmic).unwrap();
        assert_eq!(combined.kind, CertificateKind::Transverse);
        assert!(combined.pass);

        let two_transverse = [
            mk(CertificateKind::Transverse, true),
            mk(CertificateKind::Transverse, true),
        ];
        assert!(matches!(
            check_hierarchy(&two_transverse),
            Err(CoreError::Unsupported(_))
        ));
    }

    #[test]
    fn estimated_rate_certifies_and_a_larger_rate_fails() {
        let field = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let metric = IdentityMetric::new(2);
        let sampler = RegionSampler::new(
            Region::Annulus {
                center: dvector![0.0, 0.0],
                inner: 0.8,
                outer: 1.2,
            },
            512,
            1,
        )
        .unwrap();
        let rate = estimate_transverse_rate(&field, &metric, &sampler).unwrap();
        assert!(rate > 0.5, "rate {rate}");
        let ok = check_transverse_contraction(
            &field,
            &metric,
            &sampler,
            rate * 0.999,
            MARGIN_TOLERANCE,
        )
        .unwrap();
        assert!(ok.pass);
        let bad =
            check_transverse_contraction(&field, &metric, &sampler, rate * 1.05, MARGIN_TOLERANCE)
                .unwrap();
        assert!(!bad.pass);
    }
}
