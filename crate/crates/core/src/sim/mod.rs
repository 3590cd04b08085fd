//! Discrete-event simulation of the head-of-the-line network.
//!
//! The simulated process carries per-class FIFO lists of customers with
//! their ages, residual interarrival times `u`, residual service times `v` of
//! the head customers and the effort split `z`. Between events the queue
//! lengths are constant, `u` decays at rate one and `v_k` at rate `z_k`.

mod engine;
mod estimate;
mod path;
mod state;

pub use engine::{Event, EventKind, Horizon, RunSummary, Segment, SimOptions, Simulator, DEFAULT_EVENT_CAP};
pub use estimate::{
    checked_options, estimate_return_time, first_entrance_simulated, first_entrance_time, occupation_fraction,
    time_average_queue, PredicateSet, QueueTerm, ReturnTimeEstimate, Stretch, TimeAverage,
};
pub use path::{simulate, simulate_with, PathSegment, SamplePath};
pub use state::{check_state, InitialStateFile, SimState};
