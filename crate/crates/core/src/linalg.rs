//! Small shared linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

/// Symmetric part `(A + Aᵀ)/2`.
pub(crate) fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in non-increasing order.
pub(crate) fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = symmetric_part(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Largest eigenvalue of the symmetric part of `a`.
pub(crate) fn lambda_max_sym(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(a)[0]
}

/// Largest generalized eigenvalue of symmetric `g` relative to SPD `m`,
/// i.e. `λ_max(L⁻¹ G L⁻ᵀ)` with `M = L Lᵀ`.
pub(crate) fn max_generalized_eig(g: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64, CoreError> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| CoreError::Singular("metric is not positive definite".into()))?;
    let l = chol.l();
    let z = l
        .clone()
        .solve_lower_triangular(g)
        .ok_or_else(|| CoreError::Singular("triangular solve failed".into()))?;
    let s = l
        .solve_lower_triangular(&z.transpose())
        .ok_or_else(|| CoreError::Singular("triangular solve failed".into()))?
        .transpose();
    Ok(lambda_max_sym(&s))
}

/// Orthonormal basis of the hyperplane orthogonal to `v`, as the columns of
/// an `n × (n-1)` matrix. Built from the Householder reflector that maps
/// `e₁` onto `±v̂`, which is well-conditioned for every direction of `v`.
pub(crate) fn orthonormal_complement(v: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
    let n = v.len();
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(CoreError::Precondition(
            "cannot build a complement of the zero vector".into(),
        ));
    }
    let vhat = v / norm;
    let sign = if vhat[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = vhat.clone();
    u[0] += sign;
    let uu = u.norm_squared();
    // H = I - 2uuᵀ/|u|² maps v̂ to -sign·e₁; its trailing columns span v̂⊥.
    let mut basis = DMatrix::zeros(n, n - 1);
    for j in 1..n {
        for i in 0..n {
            let e = if i == j { 1.0 } else { 0.0 };
            basis[(i, j - 1)] = e - 2.0 * u[i] * u[j] / uu;
        }
    }
    Ok(basis)
}

/// Symmetric positive semidefinite square root via eigendecomposition.
/// Slightly negative eigenvalues from roundoff are clamped to zero.
pub(crate) fn spd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_part(m).symmetric_eigen();
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Planar rotation matrix by `angle` (counterclockwise).
pub(crate) fn rotation2(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}
