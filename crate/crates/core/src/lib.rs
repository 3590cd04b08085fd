//! Stability toolkit for multiclass queueing networks.
//!
//! * [`network`] describes a network and derives first-moment quantities.
//! * [`sim`] simulates the head-of-the-line network as a Markov process.
//! * [`fluid`] integrates the associated fluid network exactly.
//! * [`scaling`] compares scaled sample paths against fluid trajectories.
//! * [`lyapunov`] checks and synthesizes fluid Lyapunov functions and probes
//!   the Foster-Lyapunov drift built from them.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fluid;
pub mod lyapunov;
pub mod netfile;
pub mod network;
pub mod presets;
pub mod rng;
pub mod scaling;
pub mod sim;
pub mod stats;

pub use error::Error;
pub use network::{validate_spec, Discipline, Distribution, NetworkSpec, ValidatedSpec};
