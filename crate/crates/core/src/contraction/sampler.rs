//! Deterministic low-discrepancy region sampling.
//!
//! Samples come from a Halton sequence (prime bases per coordinate); the
//! seed offsets the start index, so the same `(region, count, seed)` always
//! yields the same points, all of them inside the region.

use nalgebra::DVector;

use crate::error::CoreError;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical-inverse (van der Corput) value of `index` in the given base.
fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// A sampling region.
#[derive(Debug, Clone)]
pub enum Region {
    /// Axis-aligned box `[lo, hi]` per coordinate.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// Euclidean ball around a center.
    Ball { center: DVector<f64>, radius: f64 },
    /// Annulus `inner ≤ |x - center| ≤ outer`.
    Annulus {
        center: DVector<f64>,
        inner: f64,
        outer: f64,
    },
    /// An explicit point list, used verbatim.
    Points(Vec<DVector<f64>>),
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } => lo.len(),
            Region::Ball { center, .. } => center.len(),
            Region::Annulus { center, .. } => center.len(),
            Region::Points(pts) => pts.first().map(|p| p.len()).unwrap_or(0),
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Region::Box { lo, hi } => (0..lo.len()).all(|i| x[i] >= lo[i] && x[i] <= hi[i]),
            Region::Ball { center, radius } => (x - center).norm() <= *radius,
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let d = (x - center).norm();
                d >= *inner && d <= *outer
            }
            Region::Points(pts) => pts.iter().any(|p| (p - x).norm() == 0.0),
        }
    }

    fn validate(&self) -> Result<(), CoreError> {
        match self {
            Region::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(CoreError::DimensionMismatch("box bounds mismatch".into()));
                }
                if (0..lo.len()).any(|i| !(hi[i] >= lo[i])) {
                    return Err(CoreError::InvalidParameter("box has hi < lo".into()));
                }
            }
            Region::Ball { radius, center } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return Err(CoreError::InvalidParameter(
                        "ball needs a positive radius".into(),
                    ));
                }
            }
            Region::Annulus {
                inner,
                outer,
                center,
            } => {
                if center.is_empty() || !(*inner >= 0.0) || !(*outer > *inner) {
                    return Err(CoreError::InvalidParameter(
                        "annulus needs 0 ≤ inner < outer".into(),
                    ));
                }
            }
            Region::Points(pts) => {
                if pts.is_empty() {
                    return Err(CoreError::InvalidParameter(
                        "point region must be non-empty".into(),
                    ));
                }
                let d = pts[0].len();
                if pts.iter().any(|p| p.len() != d) {
                    return Err(CoreError::DimensionMismatch(
                        "point region has mixed dimensions".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Low-discrepancy sampler over a region.
#[derive(Debug, Clone)]
pub struct RegionSampler {
    pub region: Region,
    pub count: usize,
    pub seed: u64,
}

impl RegionSampler {
    pub fn new(region: Region, count: usize, seed: u64) -> Result<Self, CoreError> {
        region.validate()?;
        if count == 0 && !matches!(region, Region::Points(_)) {
            return Err(CoreError::InvalidParameter("sample count is zero".into()));
        }
        Ok(Self {
            region,
            count,
            seed,
        })
    }

    /// The sample points. For `Points` regions the list is returned verbatim.
    pub fn samples(&self) -> Vec<DVector<f64>> {
        let start = 1 + self.seed.wrapping_mul(7919);
        match &self.region {
            Region::Points(pts) => pts.clone(),
            Region::Box { lo, hi } => {
                let d = lo.len();
                (0..self.count as u64)
                    .map(|k| {
                        DVector::from_fn(d, |i, _| {
                            let u = halton(start + k, PRIMES[i % PRIMES.len()]);
                            lo[i] + u * (hi[i] - lo[i])
                        })
                    })
                    .collect()
            }
            Region::Ball { center, radius } => {
                if center.len() == 2 {
                    // Polar map: area-uniform in the disk.
                    (0..self.count as u64)
                        .map(|k| {
                            let u = halton(start + k, 2);
                            let v = halton(start + k, 3);
                            let rho = radius * u.sqrt();
                            let ang = 2.0 * std::f64::consts::PI * v;
                            DVector::from_column_slice(&[
                                center[0] + rho * ang.cos(),
                                center[1] + rho * ang.sin(),
                            ])
                        })
                        .collect()
                } else {
                    self.rejection_ring(center, 0.0, *radius, start)
                }
            }
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                if center.len() == 2 {
                    (0..self.count as u64)
                        .map(|k| {
                            let u = halton(start + k, 2);
                            let v = halton(start + k, 3);
                            let rho = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
                            let ang = 2.0 * std::f64::consts::PI * v;
                            DVector::from_column_slice(&[
                                center[0] + rho * ang.cos(),
                                center[1] + rho * ang.sin(),
                            ])
                        })
                        .collect()
                } else {
                    self.rejection_ring(center, *inner, *outer, start)
                }
            }
        }
    }

    /// Rejection sampling from the bounding box, deterministic through the
    /// shared Halton stream.
    fn rejection_ring(
        &self,
        center: &DVector<f64>,
        inner: f64,
        outer: f64,
        start: u64,
    ) -> Vec<DVector<f64>> {
        let d = center.len();
        let mut out = Vec::with_capacity(self.count);
        let mut k = 0u64;
        while out.len() < self.count {
            let x = DVector::from_fn(d, |i, _| {
                let u = halton(start + k, PRIMES[i % PRIMES.len()]);
                center[i] - outer + 2.0 * outer * u
            });
            let r = (&x - center).norm();
            if r >= inner && r <= outer {
                out.push(x);
            }
            k += 1;
        }
        out
    }
}
