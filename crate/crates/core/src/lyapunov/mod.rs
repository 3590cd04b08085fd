//! Fluid Lyapunov functions and the Foster-Lyapunov drift built from them.
//!
//! Candidates are homogeneous of degree two (`V(r q) = r^2 V(q)`): a
//! degree-one function decreases at a constant rate along rays and cannot
//! dominate an unbounded decay envelope.

mod candidate;
mod foster;
pub mod lp;
mod synthesis;

pub use candidate::{
    fluid_drift_check, sandwich_check, CandidateForm, DriftCheckReport, Envelope, LyapunovCandidate, SandwichReport,
};
pub use foster::{
    calibrate, foster_drift_estimate, foster_set, foster_w, return_time_check, supermartingale_probe, BoundVerdict,
    Calibration, DriftEstimate, FosterTerm, ReturnTimeReport, SupermartingaleReport, SupermartingaleStep,
    DEFAULT_CONTRACTION, MIN_REPLICATIONS,
};
pub use synthesis::{
    enumerate_drifts, random_unit_directions, synthesize_linear_certificate, CertificateOutcome, LinearCertificate,
    MAX_ENUMERATED_CLASSES,
};
