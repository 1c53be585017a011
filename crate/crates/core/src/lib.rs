//! Dynamic movement primitives, coupled oscillator networks, and sample-based
//! contraction certification.
//!
//! The crate is organized around a small set of building blocks:
//!
//! - [`dynamics`]: vector fields for DMP subsystems (reference filters,
//!   canonical oscillators, transformation systems), normalized basis-function
//!   forcing, hierarchy composition, and diffeomorphic rescaling.
//! - [`network`]: coupling graphs, block Laplacians, diffusive coupling with
//!   phase offsets, parameter heterogeneity, and sparse inhibition.
//! - [`simulate`]: deterministic fixed-step RK4 integration with switching
//!   events, disturbance hooks, and trajectory measurements.
//! - [`contraction`]: matrix measures, contraction / transverse-contraction
//!   certificates over sampled regions, metric synthesis along flows, and
//!   disturbance tube bounds.
//! - [`learning`]: least-squares recovery of forcing weights from
//!   demonstrations.
//!
//! Certificates produced here are sample-based numerical evidence, not formal
//! proofs; every report says so explicitly.

// Parameter guards use `!(x > 0.0)` so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contraction;
pub mod dynamics;
pub mod error;
pub mod learning;
mod linalg;
pub mod network;
pub mod simulate;

pub use error::CoreError;
