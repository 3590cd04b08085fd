//! Fluid network integration.
//!
//! Within a regime (a fixed set of nonempty classes) the allocation rates
//! are constant for static priority, so trajectories are integrated exactly
//! from breakpoint to breakpoint. Under the proportional split the rates
//! move with the levels; those segments are bounded in length and use the
//! split at their midpoint. Every trajectory satisfies the balance,
//! monotonicity and capacity equations exactly by construction, which
//! [`verify_fluid_solution`] re-checks independently.

mod integrate;
mod model;
mod probe;
mod rates;
mod trajectory;
mod verify;

pub use integrate::{fluid_trajectory, fluid_trajectory_with, FluidOptions};
pub use model::{FluidDiscipline, FluidSpec};
pub use probe::{
    late_slope, lipschitz_bound, lipschitz_check, stability_probe, unit_directions, DirectionOutcome, StabilityReport,
    StabilityVerdict, DIVERGENCE_SLOPE,
};
pub use rates::{all_priority_solutions, regime_rates, RegimePattern, RATE_ITER_CAP, RATE_TOL};
pub use trajectory::{concatenate, scale, shift, FluidTrajectory, MATCH_TOL};
pub use verify::{
    verify_fluid_solution, FluidVerification, ResidualCheck, ALLOCATION_START, BALANCE, COMPLEMENTARITY, I_MONOTONE,
    NONNEGATIVE, T_MONOTONE, WORKLOAD,
};
