//! Deterministic fixed-step integration with switching events and
//! disturbance hooks.
//!
//! Classical RK4 with a fixed step: identical inputs give bit-identical
//! trajectories and event logs, which is what golden tests and reproducible
//! scenario runs need. Events are detected by sign change of an indicator
//! between steps, with the crossing time linearly interpolated; a field
//! switch triggered at step `k` takes effect from step `k+1` (one-step
//! latency).

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::VectorField;
use crate::error::CoreError;

mod measure;

pub use measure::{estimate_period, min_distance_to_orbit, PeriodEstimate, Section};

/// Integration method. Fixed-step RK4 is the only one on purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
}

/// A bounded disturbance signal `w(t)` added to the field.
#[derive(Debug, Clone)]
pub enum Disturbance {
    /// Constant vector.
    Constant(DVector<f64>),
    /// `amplitude · sin(2π f t + φ)` applied along a fixed direction.
    Sinusoid {
        amplitude: DVector<f64>,
        freq_hz: f64,
        phase: f64,
    },
    /// Piecewise-constant: on each window of length `dwell`, a seeded random
    /// unit direction scaled by `magnitude`. Random access by window index
    /// keeps evaluation deterministic.
    PiecewiseConstant {
        magnitude: f64,
        dwell: f64,
        seed: u64,
        dim: usize,
    },
}

impl Disturbance {
    pub fn dim(&self) -> usize {
        match self {
            Disturbance::Constant(v) => v.len(),
            Disturbance::Sinusoid { amplitude, .. } => amplitude.len(),
            Disturbance::PiecewiseConstant { dim, .. } => *dim,
        }
    }

    /// Reported sup-norm bound `w̄ = sup_t |w(t)|`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Disturbance::Constant(v) => v.norm(),
            Disturbance::Sinusoid { amplitude, .. } => amplitude.norm(),
            Disturbance::PiecewiseConstant { magnitude, .. } => magnitude.abs(),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            Disturbance::Constant(v) => v.clone(),
            Disturbance::Sinusoid {
                amplitude,
                freq_hz,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * freq_hz * t + phase).sin(),
            Disturbance::PiecewiseConstant {
                magnitude,
                dwell,
                seed,
                dim,
            } => {
                let window = (t / dwell).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(window));
                let mut dir = DVector::from_fn(*dim, |_, _| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v
                });
                let n = dir.norm();
                if n > 0.0 {
                    dir /= n;
                } else {
                    dir[0] = 1.0;
                }
                dir * *magnitude
            }
        }
    }
}

/// Fixed-step integrator configuration.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step size `h` in seconds.
    pub step: f64,
    /// Total duration; rounded to a whole number of steps.
    pub duration: f64,
    pub disturbance: Option<Disturbance>,
}

impl IntegratorConfig {
    pub fn new(step: f64, duration: f64) -> Result<Self, CoreError> {
        if !(step > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "step must be positive, got {step}"
            )));
        }
        if !(duration >= step) {
            return Err(CoreError::InvalidParameter(format!(
                "duration {duration} must cover at least one step {step}"
            )));
        }
        Ok(Self {
            method: Method::Rk4,
            step,
            duration,
            disturbance: None,
        })
    }

    pub fn with_disturbance(mut self, disturbance: Disturbance) -> Self {
        self.disturbance = Some(disturbance);
        self
    }

    fn steps(&self) -> usize {
        (self.duration / self.step).round().max(1.0) as usize
    }
}

/// A logged event: interpolated crossing time plus a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub label: String,
}

/// A stored rollout: strictly increasing time grid, one state row per time,
/// and the event log.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map(|s| s.len()).unwrap_or(0)
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// Samples within `[t0, t1]` as (time, state) pairs.
    pub fn window(&self, t0: f64, t1: f64) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.times
            .iter()
            .zip(&self.states)
            .filter(move |(&t, _)| t >= t0 && t <= t1)
            .map(|(&t, s)| (t, s))
    }
}

fn rk4_step(
    field: &dyn VectorField,
    t: f64,
    x: &DVector<f64>,
    h: f64,
    disturbance: Option<&Disturbance>,
) -> Result<DVector<f64>, CoreError> {
    let w = |t: f64| -> Option<DVector<f64>> { disturbance.map(|d| d.eval(t)) };
    let add = |f: DVector<f64>, w: Option<DVector<f64>>| match w {
        Some(w) => f + w,
        None => f,
    };
    let k1 = add(field.eval(x)?, w(t));
    let k2 = add(field.eval(&(x + &k1 * (h / 2.0)))?, w(t + h / 2.0));
    let k3 = add(field.eval(&(x + &k2 * (h / 2.0)))?, w(t + h / 2.0));
    let k4 = add(field.eval(&(x + &k3 * h))?, w(t + h));
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates `ẋ = f(x) [+ w(t)]` from `x0` with classical fixed-step RK4.
///
/// Fails with a divergence error carrying the last valid time if the state
/// goes non-finite.
pub fn integrate(
    field: &dyn VectorField,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    if x0.len() != field.dim() {
        return Err(CoreError::DimensionMismatch(format!(
            "initial state has length {}, field dimension is {}",
            x0.len(),
            field.dim()
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(CoreError::InvalidParameter(
            "initial state must be finite".into(),
        ));
    }
    if let Some(d) = &cfg.disturbance {
        if d.dim() != field.dim() {
            return Err(CoreError::DimensionMismatch(
                "disturbance dimension does not match the field".into(),
            ));
        }
    }
    let n = cfg.steps();
    let h = cfg.step;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(x0.clone());
    let mut x = x0.clone();
    for k in 0..n {
        let t = k as f64 * h;
        x = rk4_step(field, t, &x, h, cfg.disturbance.as_ref())?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Divergence { t });
        }
        times.push((k + 1) as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        events: Vec::new(),
    })
}

/// Region gate for switching: negative inside the switching region.
pub struct RegionIndicator {
    offset: usize,
    center: DVector<f64>,
    radius: f64,
}

impl RegionIndicator {
    /// Ball `|center - x[offset..offset+len]| ≤ radius` on a state slice.
    pub fn ball(offset: usize, center: DVector<f64>, radius: f64) -> Result<Self, CoreError> {
        if !(radius > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "region radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            offset,
            center,
            radius,
        })
    }

    /// Signed indicator, negative inside.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..self.center.len() {
            let e = self.center[i] - x[self.offset + i];
            d2 += e * e;
        }
        d2.sqrt() - self.radius
    }
}

/// Two-field system switching between a nominal and an alternate field.
///
/// The alternate becomes active ("armed") when the schedule is enabled and
/// the region indicator is non-positive. In latch mode it stays armed while
/// the schedule remains enabled; in strict mode it releases as soon as the
/// state leaves the region.
pub struct SwitchedField<'a> {
    pub nominal: &'a dyn VectorField,
    pub alternate: &'a dyn VectorField,
    /// Enable windows `[start, end)` in seconds.
    pub enable: Vec<(f64, f64)>,
    pub region: RegionIndicator,
    pub latch: bool,
}

impl SwitchedField<'_> {
    fn enabled(&self, t: f64) -> bool {
        self.enable.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Boundary of the enable window containing or preceding `t`, used to
    /// timestamp schedule-driven switches exactly.
    fn schedule_edge_in(&self, t0: f64, t1: f64) -> Option<f64> {
        let mut edges: Vec<f64> = self
            .enable
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .filter(|&e| e > t0 && e <= t1)
            .collect();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.first().copied()
    }
}

/// Integrates a switched system, logging region entry/exit and arming and
/// release events with interpolated crossing times. The active field changes
/// starting at the step after the event is detected.
pub fn integrate_switched(
    system: &SwitchedField,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    let dim = system.nominal.dim();
    if system.alternate.dim() != dim {
        return Err(CoreError::DimensionMismatch(
            "nominal and alternate fields must share a dimension".into(),
        ));
    }
    if x0.len() != dim {
        return Err(CoreError::DimensionMismatch(format!(
            "initial state has length {}, field dimension is {}",
            x0.len(),
            dim
        )));
    }
    let n = cfg.steps();
    let h = cfg.step;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut events = Vec::new();
    times.push(0.0);
    states.push(x0.clone());

    let mut x = x0.clone();
    let mut armed = system.enabled(0.0) && system.region.value(&x) <= 0.0;
    if armed {
        events.push(Event {
            time: 0.0,
            label: "armed".into(),
        });
    }
    let mut prev_indicator = system.region.value(&x);

    for k in 0..n {
        let t = k as f64 * h;
        let t_next = (k + 1) as f64 * h;
        let field: &dyn VectorField = if armed {
            system.alternate
        } else {
            system.nominal
        };
        x = rk4_step(field, t, &x, h, cfg.disturbance.as_ref())?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Divergence { t });
        }
        times.push(t_next);
        states.push(x.clone());

        let indicator = system.region.value(&x);
        // Region entry/exit with linear interpolation of the crossing time.
        if prev_indicator > 0.0 && indicator <= 0.0 {
            let frac = prev_indicator / (prev_indicator - indicator);
            events.push(Event {
                time: t + frac * h,
                label: "region_entry".into(),
            });
        } else if prev_indicator <= 0.0 && indicator > 0.0 {
            let frac = -prev_indicator / (indicator - prev_indicator);
            events.push(Event {
                time: t + frac * h,
                label: "region_exit".into(),
            });
        }

        let enabled = system.enabled(t_next);
        let should_arm = if armed {
            if system.latch {
                enabled
            } else {
                enabled && indicator <= 0.0
            }
        } else {
            enabled && indicator <= 0.0
        };
        if should_arm != armed {
            // Schedule edges are known exactly; region crossings were just
            // interpolated above, so reuse the most recent crossing estimate.
            let schedule_driven = (armed && !enabled)
                || (!armed && enabled && prev_indicator <= 0.0 && system.enabled(t) != enabled);
            let event_time = if schedule_driven {
                system.schedule_edge_in(t, t_next).unwrap_or(t_next)
            } else if prev_indicator > 0.0 && indicator <= 0.0 {
                t + prev_indicator / (prev_indicator - indicator) * h
            } else if prev_indicator <= 0.0 && indicator > 0.0 {
                t + (-prev_indicator) / (indicator - prev_indicator) * h
            } else {
                t_next
            };
            events.push(Event {
                time: event_time,
                label: if should_arm { "armed" } else { "released" }.into(),
            });
            armed = should_arm;
        }
        prev_indicator = indicator;
    }

    Ok(Trajectory {
        times,
        states,
        events,
    })
}
