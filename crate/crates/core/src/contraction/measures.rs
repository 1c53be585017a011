//! Matrix measures (logarithmic norms) `μ(A) = lim_{h→0⁺} (‖I + hA‖ - 1)/h`.

use nalgebra::DMatrix;

use crate::linalg::lambda_max_sym;

/// Which induced norm the measure is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureNorm {
    /// Column-sum norm: `μ₁(A) = max_j (a_jj + Σ_{i≠j} |a_ij|)`.
    One,
    /// Euclidean norm: `μ₂(A) = λ_max((A + Aᵀ)/2)`.
    Two,
    /// Row-sum norm: `μ_∞(A) = max_i (a_ii + Σ_{j≠i} |a_ij|)`.
    Inf,
}

/// Matrix measure of a square matrix under the chosen norm. Subadditive:
/// `μ(A + B) ≤ μ(A) + μ(B)` for any of the three.
pub fn matrix_measure(a: &DMatrix<f64>, norm: MeasureNorm) -> f64 {
    debug_assert!(a.is_square());
    match norm {
        MeasureNorm::One => (0..a.ncols())
            .map(|j| {
                let mut s = a[(j, j)];
                for i in 0..a.nrows() {
                    if i != j {
                        s += a[(i, j)].abs();
                    }
                }
                s
            })
            .fold(f64::NEG_INFINITY, f64::max),
        MeasureNorm::Two => lambda_max_sym(a),
        MeasureNorm::Inf => (0..a.nrows())
            .map(|i| {
                let mut s = a[(i, i)];
                for j in 0..a.ncols() {
                    if j != i {
                        s += a[(i, j)].abs();
                    }
                }
                s
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn measure_of_minus_identity_and_zero() {
        let id = DMatrix::<f64>::identity(3, 3);
        let zero = DMatrix::<f64>::zeros(3, 3);
        for norm in [MeasureNorm::One, MeasureNorm::Two, MeasureNorm::Inf] {
            assert_relative_eq!(matrix_measure(&(-id.clone()), norm), -1.0);
            assert_relative_eq!(matrix_measure(&zero, norm), 0.0);
        }
    }

    #[test]
    fn one_norm_measure_by_hand() {
        // Columns: -2 + |0| = -2 and -3 + |1| = -2.
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -3.0]);
        assert_relative_eq!(matrix_measure(&a, MeasureNorm::One), -2.0);
    }

    #[test]
    fn two_norm_measure_of_hopf_jacobian_at_origin() {
        // A(0) = ρr² I + skew part, so μ₂ = ρr² for any ω.
        let p = crate::dynamics::HopfParams {
            omega: 4.7,
            rho: 1.0,
            radius: 1.0,
        };
        let j = p.jacobian(&nalgebra::Vector2::zeros(), 1.0);
        let a = DMatrix::from_row_slice(2, 2, &[j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]]);
        assert_relative_eq!(matrix_measure(&a, MeasureNorm::Two), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_and_inf_measures_match_the_norm_limit_exactly() {
        // ‖I + hA‖₁ is piecewise linear in h, so the difference quotient is
        // exact once h is small enough.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: DMatrix<f64> = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
            let h = 1e-3;
            let i_ha = DMatrix::identity(4, 4) + &a * h;
            let norm1: f64 = (0..4)
                .map(|j| (0..4).map(|i| i_ha[(i, j)].abs()).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            let norm_inf: f64 = (0..4)
                .map(|i| (0..4).map(|j| i_ha[(i, j)].abs()).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(
                matrix_measure(&a, MeasureNorm::One),
                (norm1 - 1.0) / h,
                epsilon = 1e-10
            );
            assert_relative_eq!(
                matrix_measure(&a, MeasureNorm::Inf),
                (norm_inf - 1.0) / h,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn two_norm_measure_matches_power_iteration() {
        // Independent route: shifted power iteration on the symmetric part.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let s = (&a + a.transpose()) * 0.5;
            let shift = 10.0;
            let shifted = &s + DMatrix::identity(4, 4) * shift;
            let mut v = nalgebra::DVector::from_element(4, 1.0).normalize();
            for _ in 0..20_000 {
                v = (&shifted * v).normalize();
            }
            let rayleigh = v.dot(&(&s * &v));
            assert_relative_eq!(
                matrix_measure(&a, MeasureNorm::Two),
                rayleigh,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn subadditivity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-3.0..3.0));
            let b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-3.0..3.0));
            let sum = &a + &b;
            for norm in [MeasureNorm::One, MeasureNorm::Two, MeasureNorm::Inf] {
                let lhs = matrix_measure(&sum, norm);
                let rhs = matrix_measure(&a, norm) + matrix_measure(&b, norm);
                assert!(lhs <= rhs + 1e-12, "subadditivity violated: {lhs} > {rhs}");
            }
        }
    }
}
