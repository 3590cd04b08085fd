use std::fmt;

use thiserror::Error;

/// A single structural problem found while validating a network.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecViolation(pub String);

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("invalid network: {}", join(.0))]
    Invalid(Vec<SpecViolation>),
    #[error("spectral radius iteration did not converge (best estimate {best_estimate})")]
    SpectralRadius { best_estimate: f64 },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("malformed network file: {0}")]
    Format(String),
}

fn join(v: &[SpecViolation]) -> String {
    v.iter().map(|s| s.0.as_str()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("initial state: {0}")]
    InitialState(String),
    #[error("state invariant violated at t={time}: {what}")]
    Invariant { time: f64, what: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("estimate undefined: all {0} replications ended before reaching the target set")]
    NeverReached(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum FluidError {
    #[error("fluid dynamics are not implemented for the {0} discipline")]
    UnsupportedDiscipline(&'static str),
    #[error("allocation rate fixed point not reached after {iterations} iterations (residual {residual:e})")]
    RateFixedPoint {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("breakpoint cap of {0} exceeded (chattering)")]
    Chattering(usize),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("endpoint mismatch {0:e} exceeds tolerance")]
    EndpointMismatch(f64),
    #[error("malformed trajectory: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("scaling schedule must be positive and strictly increasing")]
    Schedule,
    #[error("direction must be nonnegative with unit l1 norm")]
    Direction,
    #[error("scaling certificate failed: {0}")]
    Certificate(String),
    #[error("grid or span mismatch: {0}")]
    Span(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

#[derive(Debug, Error, PartialEq)]
pub enum LyapunovError {
    #[error("invalid candidate: {0}")]
    Candidate(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("regime enumeration overflow: {0} classes exceeds the cap")]
    EnumerationOverflow(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

/// Umbrella error for callers that drive several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}
