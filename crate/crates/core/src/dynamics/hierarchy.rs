//! Cascade composition of reference, canonical, and transformation systems
//! into one autonomous vector field.

use nalgebra::DVector;

use crate::error::CoreError;

use super::subsystems::{CanonicalSystem, ReferenceSystem, TransformationSystem};
use super::VectorField;

/// The stacked cascade over `(r, x, y)`. Information flows only
/// reference → canonical → transformation; there are no back edges, so the
/// Jacobian is block lower-triangular in this ordering.
pub struct HierarchyField {
    reference: Option<ReferenceSystem>,
    canonical: CanonicalSystem,
    transforms: Vec<TransformationSystem>,
}

impl HierarchyField {
    pub fn reference_dim(&self) -> usize {
        self.reference.as_ref().map(|r| r.dim()).unwrap_or(0)
    }

    pub fn canonical_dim(&self) -> usize {
        self.canonical.dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.transforms.len()
    }

    /// Offset of the canonical block in the stacked state.
    pub fn canonical_offset(&self) -> usize {
        self.reference_dim()
    }

    /// Offset of the `(y, ẏ)` block for transform `i`.
    pub fn output_offset(&self, i: usize) -> usize {
        self.reference_dim() + self.canonical_dim() + 2 * i
    }

    pub fn canonical(&self) -> &CanonicalSystem {
        &self.canonical
    }
}

/// Stacks the subsystems into a single autonomous field over `(r, x, y)`.
///
/// The external command held by the reference system is frozen into the
/// field; transformation systems read the canonical state and the reference
/// state of this hierarchy only.
pub fn compose_hierarchy(
    reference: Option<ReferenceSystem>,
    canonical: CanonicalSystem,
    transforms: Vec<TransformationSystem>,
) -> Result<HierarchyField, CoreError> {
    for t in &transforms {
        match &t.kind {
            super::subsystems::TransformKind::SpringDamper { forcing, .. } => {
                if let Some(f) = forcing {
                    let needs = match f {
                        super::Forcing::Gaussian(_) => 1,
                        super::Forcing::VonMises(_) => 2,
                    };
                    if needs != canonical.dim() {
                        return Err(CoreError::DimensionMismatch(format!(
                            "forcing expects a {}-dimensional phase, canonical system has {}",
                            needs,
                            canonical.dim()
                        )));
                    }
                }
            }
            super::subsystems::TransformKind::TrackingGoals { .. } => {
                if canonical.dim() != 2 {
                    return Err(CoreError::DimensionMismatch(
                        "tracking goals need a planar canonical system".into(),
                    ));
                }
            }
        }
    }
    Ok(HierarchyField {
        reference,
        canonical,
        transforms,
    })
}

impl VectorField for HierarchyField {
    fn dim(&self) -> usize {
        self.reference_dim() + self.canonical_dim() + self.output_dim()
    }

    fn eval(&self, state: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        if state.len() != self.dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "hierarchy state has length {}, expected {}",
                state.len(),
                self.dim()
            )));
        }
        let nr = self.reference_dim();
        let nx = self.canonical_dim();
        let mut out = DVector::zeros(self.dim());

        let r_state = if let Some(reference) = &self.reference {
            let r = DVector::from_column_slice(&state.as_slice()[..nr]);
            let dr = reference.eval(&r);
            for i in 0..nr {
                out[i] = dr[i];
            }
            Some(r)
        } else {
            None
        };

        let x = DVector::from_column_slice(&state.as_slice()[nr..nr + nx]);
        let dx = VectorField::eval(&self.canonical, &x)?;
        for i in 0..nx {
            out[nr + i] = dx[i];
        }

        let canonical_slice = &state.as_slice()[nr..nr + nx];
        for (i, t) in self.transforms.iter().enumerate() {
            let off = self.output_offset(i);
            let (dy, ddy) = t.eval(state[off], state[off + 1], canonical_slice, r_state.as_ref())?;
            out[off] = dy;
            out[off + 1] = ddy;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Forcing, GaussianForcing, TransformKind};
    use crate::simulate::{estimate_period, integrate, IntegratorConfig, Section};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn discrete_hierarchy() -> HierarchyField {
        let reference = ReferenceSystem::new(dvector![2.0], dvector![1.2]).unwrap();
        let canonical = CanonicalSystem::exponential_decay(4.0, 1.0).unwrap();
        let forcing = GaussianForcing::evenly_spaced(5, 0.0, 1.0, 0.2).unwrap();
        let transform = TransformationSystem::new(
            25.0,
            10.0,
            1.0,
            TransformKind::SpringDamper {
                goal: 1.2,
                forcing: Some(Forcing::Gaussian(forcing)),
            },
        )
        .unwrap();
        compose_hierarchy(Some(reference), canonical, vec![transform]).unwrap()
    }

    #[test]
    fn cascade_settles_to_rest_with_constant_command() {
        let h = discrete_hierarchy();
        let x0 = dvector![0.0, 0.9, 0.4, 0.0];
        let cfg = IntegratorConfig::new(1e-3, 8.0).unwrap();
        let traj = integrate(&h, &x0, &cfg).unwrap();
        let last = traj.states.last().unwrap();
        assert_relative_eq!(last[0], 1.2, epsilon = 1e-6); // r -> r_ext
        assert!(last[1].abs() < 1e-6); // x -> 0
        assert_relative_eq!(last[2], 1.2, epsilon = 1e-4); // y -> goal
        assert!(last[3].abs() < 1e-4); // ẏ -> 0
    }

    #[test]
    fn jacobian_is_block_lower_triangular() {
        // Zero blocks above the diagonal in the (r, x, y) ordering, at random
        // states, to finite-difference tolerance.
        let h = discrete_hierarchy();
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..100 {
            let state = DVector::from_fn(4, |_, _| next());
            let jac = h.jacobian(&state).unwrap();
            let scale = jac.amax();
            let tol = 1e-6 * (1.0 + scale);
            // r block (row 0) must not feel x or y.
            for j in 1..4 {
                assert!(jac[(0, j)].abs() <= tol, "r row leaks: {}", jac[(0, j)]);
            }
            // x block (row 1) must not feel y.
            for j in 2..4 {
                assert!(jac[(1, j)].abs() <= tol, "x row leaks: {}", jac[(1, j)]);
            }
        }
    }

    #[test]
    fn rhythmic_hierarchy_output_inherits_the_canonical_period() {
        let canonical = CanonicalSystem::hopf(2.0 * std::f64::consts::PI, 1.0, 1.0, 1.0).unwrap();
        let transform = TransformationSystem::new(
            80.0,
            18.0,
            1.0,
            TransformKind::SpringDamper {
                goal: 0.0,
                forcing: Some(Forcing::VonMises(
                    crate::dynamics::VonMisesForcing::new(
                        vec![0.0, 2.0, 4.0],
                        0.6,
                        vec![
                            nalgebra::Vector2::new(1.5, 0.0),
                            nalgebra::Vector2::new(0.0, 1.0),
                            nalgebra::Vector2::new(-0.7, 0.4),
                        ],
                    )
                    .unwrap(),
                )),
            },
        )
        .unwrap();
        let h = compose_hierarchy(None, canonical, vec![transform]).unwrap();
        let x0 = dvector![1.0, 0.0, 0.3, 0.0];
        let cfg = IntegratorConfig::new(1e-3, 20.0).unwrap();
        let traj = integrate(&h, &x0, &cfg).unwrap();
        // Section on the output coordinate y against its late-time mean.
        let mean_y: f64 = traj
            .states
            .iter()
            .skip(traj.states.len() / 2)
            .map(|s| s[2])
            .sum::<f64>()
            / (traj.states.len() - traj.states.len() / 2) as f64;
        let section = Section::on_coordinate(4, 2, mean_y);
        let est = estimate_period(&traj, &section, 10.0).unwrap();
        assert_relative_eq!(est.period, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let canonical = CanonicalSystem::exponential_decay(4.0, 1.0).unwrap();
        let transform = TransformationSystem::new(
            10.0,
            5.0,
            1.0,
            TransformKind::SpringDamper {
                goal: 0.0,
                forcing: Some(Forcing::VonMises(
                    crate::dynamics::VonMisesForcing::evenly_spaced(4, 0.5).unwrap(),
                )),
            },
        )
        .unwrap();
        assert!(compose_hierarchy(None, canonical, vec![transform]).is_err());
    }
}
