//! Metric synthesis along flows of a transverse contracting field.
//!
//! Stage one builds the singular metric
//!
//! ```text
//! M_s(x) = ∫₀^∞ V(t,x)ᵀ Q(x(t)) V(t,x) dt,
//! v̇ = (A - (ffᵀ/fᵀf)(A + Aᵀ)) v =: A_v v,   V(0,x) = I
//! ```
//!
//! which satisfies `M_s f = 0` and has rank `n-1`. Stage two completes it to
//! a full metric `M_z` over differential coordinates
//! `δz = [fᵀδx/|f|²; M̃_s^{1/2} Π δx]` by solving
//!
//! ```text
//! M₂₁ = ∫₀^∞ U₂ᵀ A₁₂ᵀ dτ,
//! M₂₂ = ∫₀^∞ e^{2rt} U₂ᵀ (M₂₁A₁₂ + A₁₂ᵀM₂₁ᵀ + Q̃) U₂ dt,   r < λ,
//! ```
//!
//! with `U₂` the fundamental matrix of the transverse block `A₂₂` and `Q̃`
//! scaled until `M₂₂ > M₂₁M₂₁ᵀ`. The symmetric generalized Jacobian of the
//! resulting coordinates has `λ₁(F_s) = 0` and `λ₂(F_s) < 0`.
//!
//! All quadratures are composite trapezoid on the RK4 grid, evaluated as
//! backward cocycle recursions (`S_k = G_k + Φ_kᵀ S_{k+1} Φ_k`). The
//! backward direction is what makes the pass stable: far-end truncation
//! errors are propagated through decaying transition factors instead of
//! growing ones, and one pass yields the metric at every grid point.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::VectorField;
use crate::error::CoreError;
use crate::linalg::{orthonormal_complement, spd_sqrt, sym_eigenvalues_desc};

/// Weight `Q(x)` for the singular-metric integrand, called with `(x, f(x))`.
pub type WeightFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Horizon and tolerance controls for the flow quadratures.
#[derive(Debug, Clone, Copy)]
pub struct HorizonControls {
    /// RK4 grid step.
    pub step: f64,
    /// Hard cap on the integration horizon past the base point.
    pub t_max: f64,
    /// Truncate once the decaying part `‖Q V‖_F` falls below this.
    pub tail_tolerance: f64,
    /// Extra horizon, as a multiple of the convergence time, integrated past
    /// truncation so later stages have a converged metric along the flow.
    pub extension: f64,
}

impl Default for HorizonControls {
    fn default() -> Self {
        Self {
            step: 1e-3,
            t_max: 50.0,
            tail_tolerance: 1e-8,
            extension: 1.0,
        }
    }
}

impl HorizonControls {
    fn validate(&self) -> Result<(), CoreError> {
        if !(self.step > 0.0) || !(self.t_max > self.step) {
            return Err(CoreError::InvalidParameter(
                "horizon controls need 0 < step < t_max".into(),
            ));
        }
        if !(self.tail_tolerance > 0.0) || !(self.extension >= 0.0) {
            return Err(CoreError::InvalidParameter(
                "horizon controls need a positive tail tolerance and nonnegative extension".into(),
            ));
        }
        Ok(())
    }
}

/// Singular-metric build at one base point, with the flow grid internals the
/// full-metric stage and consistency tests reuse.
#[derive(Debug, Clone)]
pub struct PointBuild {
    pub base: DVector<f64>,
    /// `M_s` at the base point.
    pub m_s: DMatrix<f64>,
    /// `|M_s f| / (‖M_s‖ |f|)` at the base point.
    pub ms_f_residual: f64,
    /// Eigenvalues of `M_s` below `1e-6 · trace` (rank `n-1` means one).
    pub near_zero_eigenvalues: usize,
    /// Horizon actually integrated past the base point.
    pub horizon: f64,
    /// Estimated truncation error of the quadrature.
    pub tail_bound: f64,
    pub(crate) step: f64,
    /// Grid index of the base point (the grid starts two steps earlier).
    pub(crate) base_index: usize,
    /// Last grid index at which the metric grids are converged.
    pub(crate) valid_end: usize,
    pub(crate) states: Vec<DVector<f64>>,
    pub(crate) f_grid: Vec<DVector<f64>>,
    pub(crate) a_grid: Vec<DMatrix<f64>>,
    pub(crate) m_s_grid: Vec<DMatrix<f64>>,
}

impl PointBuild {
    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    /// Flow states along the build grid.
    pub fn flow_states(&self) -> &[DVector<f64>] {
        &self.states
    }

    /// `M_s` along the build grid (converged up to `valid_len`).
    pub fn singular_metric_grid(&self) -> &[DMatrix<f64>] {
        &self.m_s_grid
    }

    pub fn valid_len(&self) -> usize {
        self.valid_end + 1
    }

    pub fn jacobian_grid(&self) -> &[DMatrix<f64>] {
        &self.a_grid
    }
}

/// The singular-metric build over a set of base points.
#[derive(Debug, Clone)]
pub struct SingularMetricBuild {
    pub rate: f64,
    pub controls: HorizonControls,
    pub points: Vec<PointBuild>,
}

fn default_weight(_x: &DVector<f64>, f: &DVector<f64>) -> DMatrix<f64> {
    let n = f.len();
    let nsq = f.norm_squared();
    let mut q = DMatrix::identity(n, n);
    if nsq > 0.0 {
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] -= f[i] * f[j] / nsq;
            }
        }
    }
    q
}

/// One RK4 step of the joint system `(ẋ, V̇) = (f(x), A_v(x) V)`.
fn joint_step(
    field: &dyn VectorField,
    x: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), CoreError> {
    let n = field.dim();
    let a_v = |x: &DVector<f64>| -> Result<DMatrix<f64>, CoreError> {
        let f = field.eval(x)?;
        let a = field.jacobian(x)?;
        let nsq = f.norm_squared();
        if nsq == 0.0 {
            return Err(CoreError::Precondition(
                "flow hit an equilibrium during the metric build".into(),
            ));
        }
        let sym2 = &a + a.transpose();
        let mut proj = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                proj[(i, j)] = f[i] * f[j] / nsq;
            }
        }
        Ok(a - proj * sym2)
    };
    let v0 = DMatrix::identity(n, n);
    let k1x = field.eval(x)?;
    let k1v = a_v(x)? * &v0;
    let x2 = x + &k1x * (h / 2.0);
    let k2x = field.eval(&x2)?;
    let k2v = a_v(&x2)? * (&v0 + &k1v * (h / 2.0));
    let x3 = x + &k2x * (h / 2.0);
    let k3x = field.eval(&x3)?;
    let k3v = a_v(&x3)? * (&v0 + &k2v * (h / 2.0));
    let x4 = x + &k3x * h;
    let k4x = field.eval(&x4)?;
    let k4v = a_v(&x4)? * (&v0 + &k3v * h);
    Ok((
        x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0),
        v0 + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
    ))
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m)
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

fn build_point(
    field: &dyn VectorField,
    base: &DVector<f64>,
    rate: f64,
    controls: &HorizonControls,
    q_weight: Option<&WeightFn>,
) -> Result<PointBuild, CoreError> {
    let n = field.dim();
    let h = controls.step;
    let weight = |x: &DVector<f64>, f: &DVector<f64>| -> DMatrix<f64> {
        match q_weight {
            Some(q) => q(x, f),
            None => default_weight(x, f),
        }
    };

    // Validate the weight at the base point: symmetric, PSD, annihilates f,
    // rank n-1.
    let f_base = field.eval(base)?;
    if f_base.norm() <= 1e-10 * (1.0 + base.norm()) {
        return Err(CoreError::Precondition(
            "base point is an equilibrium".into(),
        ));
    }
    let q_base = weight(base, &f_base);
    if (&q_base - q_base.transpose()).amax() > 1e-10 {
        return Err(CoreError::InvalidParameter(
            "weight Q must be symmetric".into(),
        ));
    }
    if (&q_base * &f_base).norm() > 1e-8 * (1.0 + f_base.norm()) * (1.0 + q_base.amax()) {
        return Err(CoreError::InvalidParameter(
            "weight Q must annihilate the field direction".into(),
        ));
    }
    let q_eigs = sym_eigenvalues_desc(&q_base);
    if q_eigs.iter().any(|&v| v < -1e-10) {
        return Err(CoreError::InvalidParameter(
            "weight Q must be positive semidefinite".into(),
        ));
    }
    if q_eigs.iter().filter(|&&v| v > 1e-10).count() != n - 1 {
        return Err(CoreError::InvalidParameter(
            "weight Q must have rank n-1".into(),
        ));
    }

    // Extend the grid two steps before the base so central differences along
    // the flow are available at the base point.
    let mut pre = base.clone();
    let mut states = Vec::new();
    let mut back = Vec::new();
    for _ in 0..2 {
        let (xb, _) = joint_step(field, &pre, -h)?;
        back.push(xb.clone());
        pre = xb;
    }
    states.push(back[1].clone());
    states.push(back[0].clone());
    states.push(base.clone());
    let base_index = 2usize;

    // Forward pass: flow, one-step transitions of the A_v system, and the
    // decaying part of the cumulative fundamental matrix from the base.
    let mut transitions: Vec<DMatrix<f64>> = Vec::new();
    // Transitions for the two prepended steps.
    for k in 0..2 {
        let (x_next, phi) = joint_step(field, &states[k], h)?;
        debug_assert!((&x_next - &states[k + 1]).norm() < 1e-9 * (1.0 + x_next.norm()));
        transitions.push(phi);
    }
    let mut cumulative = DMatrix::<f64>::identity(n, n);
    let mut x = base.clone();
    let max_steps = (controls.t_max / h).ceil() as usize;
    let mut converged_at: Option<usize> = None;
    let mut decay_norm = f64::INFINITY;
    let mut initial_decay = None;
    for k in 0..max_steps {
        let (x_next, phi) = joint_step(field, &x, h)?;
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Divergence { t: k as f64 * h });
        }
        states.push(x_next.clone());
        transitions.push(phi.clone());
        cumulative = phi * cumulative;
        let f_here = field.eval(&x_next)?;
        let q_here = weight(&x_next, &f_here);
        decay_norm = (&q_here * &cumulative).norm();
        if initial_decay.is_none() {
            initial_decay = Some(decay_norm);
        }
        x = x_next;
        if decay_norm <= controls.tail_tolerance {
            converged_at = Some(k + 1);
            break;
        }
    }
    let Some(conv_steps) = converged_at else {
        return Err(CoreError::BuildFailure(format!(
            "‖Q V‖ did not decay below {:e} within t_max = {}: started at {:e}, ended at {:e}; \
             the field may not be transverse contracting along this flow",
            controls.tail_tolerance,
            controls.t_max,
            initial_decay.unwrap_or(f64::NAN),
            decay_norm
        )));
    };
    let extra = ((controls.extension * conv_steps as f64).ceil() as usize)
        .min(((controls.t_max / h).ceil() as usize).saturating_sub(conv_steps));
    for _ in 0..extra {
        let (x_next, phi) = joint_step(field, &x, h)?;
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Divergence { t: 0.0 });
        }
        states.push(x_next.clone());
        transitions.push(phi);
        x = x_next;
    }

    let total = states.len();
    let mut f_grid = Vec::with_capacity(total);
    let mut a_grid = Vec::with_capacity(total);
    let mut q_grid = Vec::with_capacity(total);
    for s in &states {
        let f = field.eval(s)?;
        a_grid.push(field.jacobian(s)?);
        q_grid.push(weight(s, &f));
        f_grid.push(f);
    }

    // Backward trapezoid recursion: M_s(x_k) = G_k + Φ_kᵀ M_s(x_{k+1}) Φ_k.
    let mut m_s_grid = vec![DMatrix::zeros(n, n); total];
    for k in (0..total - 1).rev() {
        let phi = &transitions[k];
        let g = (&q_grid[k] + phi.transpose() * &q_grid[k + 1] * phi) * (h / 2.0);
        m_s_grid[k] = g + phi.transpose() * &m_s_grid[k + 1] * phi;
    }

    let m_s = m_s_grid[base_index].clone();
    let ms_norm = spectral_norm_sym(&m_s);
    let ms_f_residual = if ms_norm > 0.0 {
        (&m_s * &f_base).norm() / (ms_norm * f_base.norm())
    } else {
        f64::INFINITY
    };
    let trace = m_s.trace();
    let near_zero_eigenvalues = sym_eigenvalues_desc(&m_s)
        .iter()
        .filter(|&&v| v < 1e-6 * trace)
        .count();
    let q_norm = spectral_norm_sym(&q_grid[base_index + conv_steps]);
    let tail_bound = decay_norm * decay_norm * q_norm.max(1.0) / (2.0 * rate);
    let valid_end = base_index + extra.max(1);

    Ok(PointBuild {
        base: base.clone(),
        m_s,
        ms_f_residual,
        near_zero_eigenvalues,
        horizon: conv_steps as f64 * h,
        tail_bound,
        step: h,
        base_index,
        valid_end,
        states,
        f_grid,
        a_grid,
        m_s_grid,
    })
}

/// Builds the singular metric at each base point by integrating the flow and
/// the fundamental matrix of the `A_v` system, truncating the quadrature
/// once its decaying part reaches the tail tolerance.
///
/// `rate` is the certified transverse-contraction rate of `field` on the
/// region containing the base points; it sizes the reported tail bound. A
/// flow whose `‖Q V‖` fails to decay produces a build failure with
/// diagnostics. Builds are independent per base point and run in parallel.
pub fn build_singular_metric(
    field: &dyn VectorField,
    base_points: &[DVector<f64>],
    rate: f64,
    controls: &HorizonControls,
    q_weight: Option<&WeightFn>,
) -> Result<SingularMetricBuild, CoreError> {
    controls.validate()?;
    if base_points.is_empty() {
        return Err(CoreError::InvalidParameter("no base points".into()));
    }
    if !(rate > 0.0) {
        return Err(CoreError::Precondition(
            "the certified transverse rate must be positive".into(),
        ));
    }
    let points: Result<Vec<PointBuild>, CoreError> = base_points
        .par_iter()
        .map(|b| build_point(field, b, rate, controls, q_weight))
        .collect();
    Ok(SingularMetricBuild {
        rate,
        controls: *controls,
        points: points?,
    })
}

/// Full-metric build at one base point.
#[derive(Debug, Clone)]
pub struct FullPointBuild {
    pub base: DVector<f64>,
    /// `M₂₁` at the base point ((n-1) × 1).
    pub m21: DMatrix<f64>,
    /// `M₂₂` at the base point ((n-1) × (n-1)), after scaling.
    pub m22: DMatrix<f64>,
    /// The factor applied to `Q̃` so that `M₂₂ > M₂₁M₂₁ᵀ`.
    pub q_scale: f64,
    /// Assembled `M_z` at the base point.
    pub m_z: DMatrix<f64>,
    /// Composite factor `Θ = Θ_z Θ_x` at the base point.
    pub theta: DMatrix<f64>,
    /// Eigenvalues of the symmetric generalized Jacobian `F_s`, descending.
    pub f_s_eigenvalues: Vec<f64>,
    /// Largest magnitude seen in the (theoretically zero) first column of
    /// the z-coordinate generalized Jacobian, a quadrature diagnostic.
    pub structure_residual: f64,
}

/// Full-metric builds over the base points of a singular build.
#[derive(Debug, Clone)]
pub struct FullMetricBuild {
    /// Rate parameter `r < λ` used in the `M₂₂` quadrature.
    pub r: f64,
    pub points: Vec<FullPointBuild>,
}

impl FullMetricBuild {
    /// `λ₁(F_s)` per point.
    pub fn lambda1(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f_s_eigenvalues[0]).collect()
    }

    /// `λ₂(F_s)` per point.
    pub fn lambda2(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f_s_eigenvalues[1]).collect()
    }

    /// Condition-number bound `R = θ̄/θ̲` of the factor over the points.
    pub fn condition_number_bound(&self) -> f64 {
        let mut hi = 0.0f64;
        let mut lo = f64::INFINITY;
        for p in &self.points {
            let svd = p.theta.clone().svd(false, false);
            hi = hi.max(svd.singular_values.max());
            lo = lo.min(svd.singular_values.min());
        }
        hi / lo
    }
}

/// Smoothly continued orthonormal completion of the unit flow direction
/// along the grid: rows of `Π(x_k)` spanning `f(x_k)⊥`.
fn continued_complement(f_grid: &[DVector<f64>]) -> Result<Vec<DMatrix<f64>>, CoreError> {
    let n = f_grid[0].len();
    let mut out = Vec::with_capacity(f_grid.len());
    let first = orthonormal_complement(&f_grid[0])?; // n x (n-1), columns
    let mut rows: Vec<DVector<f64>> = (0..n - 1).map(|j| first.column(j).into_owned()).collect();
    for f in f_grid {
        let fhat = f / f.norm();
        let mut new_rows: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
        for r in &rows {
            let mut v = r - &fhat * fhat.dot(r);
            for nr in &new_rows {
                let c = nr.dot(&v);
                v -= nr * c;
            }
            let norm = v.norm();
            if norm < 1e-8 {
                return Err(CoreError::BuildFailure(
                    "orthonormal completion degenerated along the flow".into(),
                ));
            }
            new_rows.push(v / norm);
        }
        let mut pi = DMatrix::zeros(n - 1, n);
        for (i, r) in new_rows.iter().enumerate() {
            for j in 0..n {
                pi[(i, j)] = r[j];
            }
        }
        out.push(pi);
        rows = new_rows;
    }
    Ok(out)
}

/// RK4 one-step transition for `U̇ = A(t) U` with `A` linearly interpolated
/// between grid endpoints.
fn matrix_transition(a0: &DMatrix<f64>, a1: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = a0.nrows();
    let amid = (a0 + a1) * 0.5;
    let u0 = DMatrix::identity(n, n);
    let k1 = a0 * &u0;
    let k2 = &amid * (&u0 + &k1 * (h / 2.0));
    let k3 = &amid * (&u0 + &k2 * (h / 2.0));
    let k4 = a1 * (&u0 + &k3 * h);
    u0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn build_full_point(point: &PointBuild, r: f64) -> Result<FullPointBuild, CoreError> {
    let n = point.base.len();
    let h = point.step;
    let last = point.valid_end;
    let f_grid = &point.f_grid[..=last];
    let a_grid = &point.a_grid[..=last];
    let m_s_grid = &point.m_s_grid[..=last];

    // Θ_x along the grid: [fᵀ/|f|² ; M̃_s^{1/2} Π].
    let pi_grid = continued_complement(f_grid)?;
    let mut theta_x = Vec::with_capacity(last + 1);
    for k in 0..=last {
        let f = &f_grid[k];
        let pi = &pi_grid[k];
        let m_tilde = pi * &m_s_grid[k] * pi.transpose();
        let root = spd_sqrt(&m_tilde);
        let mut th = DMatrix::zeros(n, n);
        let nsq = f.norm_squared();
        for j in 0..n {
            th[(0, j)] = f[j] / nsq;
        }
        let lower = &root * pi;
        for i in 0..n - 1 {
            for j in 0..n {
                th[(i + 1, j)] = lower[(i, j)];
            }
        }
        theta_x.push(th);
    }

    // z-coordinate generalized Jacobian blocks along the grid.
    let mut a12 = Vec::with_capacity(last + 1);
    let mut a22 = Vec::with_capacity(last + 1);
    let mut structure_residual = 0.0f64;
    for k in 0..=last {
        let theta_dot = if k == 0 {
            (&theta_x[1] - &theta_x[0]) / h
        } else if k == last {
            (&theta_x[last] - &theta_x[last - 1]) / h
        } else {
            (&theta_x[k + 1] - &theta_x[k - 1]) / (2.0 * h)
        };
        let inv = theta_x[k].clone().try_inverse().ok_or_else(|| {
            CoreError::BuildFailure("Θ_x became singular along the flow".into())
        })?;
        let f_z = (theta_dot + &theta_x[k] * &a_grid[k]) * inv;
        for i in 0..n {
            structure_residual = structure_residual.max(f_z[(i, 0)].abs());
        }
        let mut b12 = DMatrix::zeros(1, n - 1);
        for j in 0..n - 1 {
            b12[(0, j)] = f_z[(0, j + 1)];
        }
        let mut b22 = DMatrix::zeros(n - 1, n - 1);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                b22[(i, j)] = f_z[(i + 1, j + 1)];
            }
        }
        a12.push(b12);
        a22.push(b22);
    }

    // U₂ one-step transitions, then the M₂₁ and M₂₂ backward recursions.
    let mut psi = Vec::with_capacity(last);
    for k in 0..last {
        psi.push(matrix_transition(&a22[k], &a22[k + 1], h));
    }
    let mut m21_grid = vec![DMatrix::zeros(n - 1, 1); last + 1];
    for k in (0..last).rev() {
        let g = (a12[k].transpose() + psi[k].transpose() * a12[k + 1].transpose()) * (h / 2.0);
        m21_grid[k] = g + psi[k].transpose() * &m21_grid[k + 1];
    }

    let decay = (2.0 * r * h).exp();
    let w_a = |k: usize| -> DMatrix<f64> {
        &m21_grid[k] * &a12[k] + a12[k].transpose() * m21_grid[k].transpose()
    };
    let mut m22_a = vec![DMatrix::zeros(n - 1, n - 1); last + 1];
    let mut m22_b = vec![DMatrix::zeros(n - 1, n - 1); last + 1];
    let eye = DMatrix::<f64>::identity(n - 1, n - 1);
    for k in (0..last).rev() {
        let ga = (w_a(k) + psi[k].transpose() * w_a(k + 1) * &psi[k] * decay) * (h / 2.0);
        m22_a[k] = ga + psi[k].transpose() * &m22_a[k + 1] * &psi[k] * decay;
        let gb = (&eye + psi[k].transpose() * &eye * &psi[k] * decay) * (h / 2.0);
        m22_b[k] = gb + psi[k].transpose() * &m22_b[k + 1] * &psi[k] * decay;
    }

    // Scale Q̃ = q I until M₂₂ dominates M₂₁M₂₁ᵀ near the base point.
    let check_end = (point.base_index + 5).min(last.saturating_sub(1));
    let mut q_scale = 1.0f64;
    let mut ok = false;
    for _ in 0..60 {
        ok = (0..=check_end).all(|k| {
            let m22 = &m22_a[k] + &m22_b[k] * q_scale;
            let gap = m22 - &m21_grid[k] * m21_grid[k].transpose();
            sym_eigenvalues_desc(&gap)
                .last()
                .map(|&v| v > 1e-9)
                .unwrap_or(false)
        });
        if ok {
            break;
        }
        q_scale *= 2.0;
    }
    if !ok {
        return Err(CoreError::BuildFailure(
            "M_z could not be made positive definite by scaling Q".into(),
        ));
    }

    // Assemble M_z and Θ_z on the indices needed for the flow derivative.
    let m_z_at = |k: usize| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = 1.0;
        let m22 = &m22_a[k] + &m22_b[k] * q_scale;
        for i in 0..n - 1 {
            m[(i + 1, 0)] = m21_grid[k][(i, 0)];
            m[(0, i + 1)] = m21_grid[k][(i, 0)];
            for j in 0..n - 1 {
                m[(i + 1, j + 1)] = m22[(i, j)];
            }
        }
        m
    };
    let theta_z_at = |k: usize| -> Result<DMatrix<f64>, CoreError> {
        let chol = m_z_at(k).cholesky().ok_or_else(|| {
            CoreError::BuildFailure(
                "M_z not positive definite after scaling attempts".into(),
            )
        })?;
        Ok(chol.l().transpose())
    };

    let b = point.base_index;
    let theta_prev = theta_z_at(b - 1)? * &theta_x[b - 1];
    let theta_here = theta_z_at(b)? * &theta_x[b];
    let theta_next = theta_z_at(b + 1)? * &theta_x[b + 1];
    let theta_dot = (&theta_next - &theta_prev) / (2.0 * h);
    let theta_inv = theta_here.clone().try_inverse().ok_or_else(|| {
        CoreError::BuildFailure("composite factor is singular at the base point".into())
    })?;
    let f_full = (theta_dot + &theta_here * &a_grid[b]) * theta_inv;
    let f_s_eigenvalues = sym_eigenvalues_desc(&f_full);

    Ok(FullPointBuild {
        base: point.base.clone(),
        m21: m21_grid[b].clone(),
        m22: &m22_a[b] + &m22_b[b] * q_scale,
        q_scale,
        m_z: m_z_at(b),
        theta: theta_here,
        f_s_eigenvalues,
        structure_residual,
    })
}

/// Completes a singular build to the full metric `M_z` with rate parameter
/// `r < λ`, and reports the eigenvalues of the symmetric generalized
/// Jacobian at each base point (expected: `λ₁ ≈ 0`, `λ₂ < 0`).
pub fn build_full_metric(sm: &SingularMetricBuild, r: f64) -> Result<FullMetricBuild, CoreError> {
    if !(r > 0.0) || !(r < sm.rate) {
        return Err(CoreError::InvalidParameter(format!(
            "rate parameter r = {r} must satisfy 0 < r < λ = {}",
            sm.rate
        )));
    }
    // The M₂₂ integrand decays like e^{-2(λ - r)t}; the converged window of
    // the singular grid must cover that horizon.
    let needed = sm.rate / (2.0 * (sm.rate - r));
    if needed > 1.0 + sm.controls.extension {
        return Err(CoreError::InvalidParameter(format!(
            "r = {r} needs a horizon extension of at least {:.2} (have {:.2})",
            needed - 1.0,
            sm.controls.extension
        )));
    }
    let points: Result<Vec<FullPointBuild>, CoreError> = sm
        .points
        .par_iter()
        .map(|p| build_full_point(p, r))
        .collect();
    Ok(FullMetricBuild {
        r,
        points: points?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CanonicalSystem;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::dvector;

    fn hopf() -> CanonicalSystem {
        CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap()
    }

    fn cycle_points(count: usize) -> Vec<DVector<f64>> {
        (0..count)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                dvector![th.cos(), th.sin()]
            })
            .collect()
    }

    #[test]
    fn hopf_singular_metric_matches_the_closed_form() {
        // On the cycle the radial direction decays at 2ρr² and the flow
        // direction is preserved, so M_s(x) = x̂x̂ᵀ / (4ρr²).
        let field = hopf();
        let controls = HorizonControls::default();
        let build =
            build_singular_metric(&field, &cycle_points(4), 1.98, &controls, None).unwrap();
        for p in &build.points {
            let xhat = &p.base / p.base.norm();
            let expect = &xhat * xhat.transpose() / 4.0;
            assert!(
                (&p.m_s - &expect).amax() < 1e-5,
                "M_s deviates from the closed form by {}",
                (&p.m_s - expect).amax()
            );
            assert!(p.ms_f_residual < 1e-6, "residual {}", p.ms_f_residual);
            assert_eq!(p.near_zero_eigenvalues, 1);
        }
    }

    #[test]
    fn hopf_singular_metric_is_rotation_covariant() {
        let field = hopf();
        let controls = HorizonControls::default();
        let pts = cycle_points(8);
        let build = build_singular_metric(&field, &pts, 1.98, &controls, None).unwrap();
        let r = crate::linalg::rotation2(2.0 * std::f64::consts::PI / 8.0);
        for k in 0..7 {
            let rotated = &r * &build.points[k].m_s * r.transpose();
            assert!(
                (&build.points[k + 1].m_s - rotated).amax() < 1e-5,
                "rotation covariance broken at point {k}"
            );
        }
    }

    #[test]
    fn quadratic_form_decays_at_twice_the_rate() {
        // δxᵀ M_s δx decays at rate ≥ 2λ along the differential flow.
        let field = hopf();
        let rate = 1.9;
        let build = build_singular_metric(
            &field,
            &[dvector![1.0, 0.0]],
            rate,
            &HorizonControls::default(),
            None,
        )
        .unwrap();
        let p = &build.points[0];
        let h = p.grid_step();
        let a = p.jacobian_grid();
        let m = p.singular_metric_grid();
        let upto = p.valid_len().min(a.len()) - 1;
        let mut delta = dvector![0.3, -0.4];
        let mut energies = Vec::new();
        for k in 0..upto {
            energies.push(delta.dot(&(&m[k] * &delta)));
            // RK4 on δẋ = A(t) δx with A interpolated between grid points.
            let amid = (&a[k] + &a[k + 1]) * 0.5;
            let k1 = &a[k] * &delta;
            let k2 = &amid * (&delta + &k1 * (h / 2.0));
            let k3 = &amid * (&delta + &k2 * (h / 2.0));
            let k4 = &a[k + 1] * (&delta + &k3 * h);
            delta += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        // Compare energies one decade apart in time.
        let stride = (0.5 / h) as usize;
        for k in (0..energies.len().saturating_sub(stride)).step_by(stride) {
            let e0 = energies[k];
            let e1 = energies[k + stride];
            if e0 < 1e-24 {
                break;
            }
            let bound = e0 * (-2.0 * rate * (stride as f64) * h).exp();
            assert!(
                e1 <= bound * 1.01 + 1e-24,
                "energy decayed too slowly at k = {k}: {e1} > {bound}"
            );
        }
    }

    #[test]
    fn full_metric_has_the_predicted_scalar_blocks() {
        // For the Hopf cycle A₁₂ = 0, so M₂₁ = 0 and
        // M₂₂ = q / (4ρr² - 2r); with q = 1, r = 1: M₂₂ = 1/2 and
        // λ₂(F_s) = -(q + 2 r M₂₂) / (2 M₂₂) = -2.
        let field = hopf();
        let rate = 1.98;
        let build = build_singular_metric(
            &field,
            &cycle_points(4),
            rate,
            &HorizonControls::default(),
            None,
        )
        .unwrap();
        let full = build_full_metric(&build, 1.0).unwrap();
        for p in &full.points {
            assert_abs_diff_eq!(p.m21[(0, 0)], 0.0, epsilon = 1e-4);
            assert_relative_eq!(p.m22[(0, 0)], 0.5, epsilon = 1e-3);
            assert_relative_eq!(p.q_scale, 1.0);
            let l1 = p.f_s_eigenvalues[0];
            let l2 = p.f_s_eigenvalues[1];
            assert!(l1.abs() <= 1e-3 * l2.abs(), "λ₁ = {l1}, λ₂ = {l2}");
            assert_relative_eq!(l2, -2.0, epsilon = 1e-2);
        }
    }

    #[test]
    fn theta_x_maps_the_field_to_e1() {
        // δz₁ = fᵀδx/|f|² evaluated at δx = f gives exactly 1, and the
        // transverse rows annihilate f.
        let field = hopf();
        let build = build_singular_metric(
            &field,
            &[dvector![0.0, 1.0]],
            1.9,
            &HorizonControls::default(),
            None,
        )
        .unwrap();
        let p = &build.points[0];
        let f = crate::dynamics::VectorField::eval(&field, &p.base).unwrap();
        let pi = continued_complement(&p.f_grid[..=p.valid_end]).unwrap();
        let k = p.base_index();
        let m_tilde = &pi[k] * &p.m_s_grid[k] * pi[k].transpose();
        let root = crate::linalg::spd_sqrt(&m_tilde);
        let z2 = root * &pi[k] * &f;
        assert_relative_eq!(f.dot(&f) / f.norm_squared(), 1.0);
        assert!(z2.norm() < 1e-12);
    }

    #[test]
    fn non_decaying_flow_fails_with_diagnostics() {
        // An expanding planar spiral is not transverse contracting.
        let field = crate::dynamics::FnField::new(2, |x: &DVector<f64>| {
            dvector![x[1] + 0.5 * x[0], -x[0] + 0.5 * x[1]]
        });
        let controls = HorizonControls {
            t_max: 3.0,
            ..HorizonControls::default()
        };
        match build_singular_metric(&field, &[dvector![1.0, 0.0]], 1.0, &controls, None) {
            Err(CoreError::BuildFailure(msg)) => {
                assert!(msg.contains("did not decay"), "{msg}");
            }
            other => panic!("expected build failure, got {other:?}"),
        }
    }

    #[test]
    fn full_metric_rejects_r_not_below_lambda() {
        let field = hopf();
        let build = build_singular_metric(
            &field,
            &[dvector![1.0, 0.0]],
            1.9,
            &HorizonControls::default(),
            None,
        )
        .unwrap();
        assert!(build_full_metric(&build, 1.9).is_err());
        assert!(build_full_metric(&build, 2.5).is_err());
    }
}
