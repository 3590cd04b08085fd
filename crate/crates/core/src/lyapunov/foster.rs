//! Monte Carlo probes of the Foster-Lyapunov drift built from a fluid
//! candidate.
//!
//! The state function is `W(x) = w2^{-1}(V(q)) + |u| + |v|`. Starting from
//! `x`, the probes sample `W` at the deterministic time `c W(x)`, follow the
//! stopping times `T_{n+1} = T_n + c W(X(T_n))` with
//! `M(n) = c W(X(T_n)) + eps T_n`, and time the return to `{W <= kappa}`.

use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::candidate::LyapunovCandidate;
use crate::error::LyapunovError;
use crate::fluid::{stability_probe, unit_directions, FluidSpec, StabilityVerdict};
use crate::network::ValidatedSpec;
use crate::rng::replication_seed;
use crate::sim::{estimate_return_time, Horizon, PredicateSet, QueueTerm, ReturnTimeEstimate, SimState, Simulator};
use crate::stats::{map_replications, MeanCi};

pub const MIN_REPLICATIONS: usize = 100;

/// `q -> w2^{-1}(V(q))` as a level-set term for the simulator estimators.
#[derive(Debug, Clone)]
pub struct FosterTerm(pub LyapunovCandidate);

impl QueueTerm for FosterTerm {
    fn eval(&self, q: &[f64]) -> f64 {
        self.0.level(q)
    }
}

/// `W(x) = w2^{-1}(V(q)) + |u|_1 + |v|_1`.
pub fn foster_w(x: &SimState, v: &LyapunovCandidate) -> f64 {
    let q: Vec<f64> = x.queue_lengths().into_iter().map(|n| n as f64).collect();
    v.level(&q) + x.u_sum() + x.v_sum()
}

/// The set `B = {W <= kappa}`.
pub fn foster_set(v: &LyapunovCandidate, kappa: f64) -> PredicateSet {
    PredicateSet::LevelAtMost {
        term: Arc::new(FosterTerm(v.clone())),
        kappa,
    }
}

fn run_to(spec: &ValidatedSpec, x: SimState, t: f64, seed: u64) -> Result<(SimState, bool), LyapunovError> {
    let mut sim = Simulator::new(spec, x, seed)?;
    let start = sim.state().time();
    let summary = sim.run(Horizon::Time(start + t), |_| ControlFlow::Continue(()))?;
    Ok((sim.into_state(), summary.truncated))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub w_x: f64,
    pub c: f64,
    /// `c W(x)`.
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    /// `E_x[W(X(c W(x)))]`.
    pub estimate: MeanCi,
    /// The estimate divided by `W(x)`.
    pub ratio: MeanCi,
    pub truncated: usize,
}

/// Estimates `E_x[W(X(c W(x)))]` over independent replications.
pub fn foster_drift_estimate(
    spec: &ValidatedSpec,
    x: &SimState,
    v: &LyapunovCandidate,
    c: f64,
    replications: usize,
    seed: u64,
) -> Result<DriftEstimate, LyapunovError> {
    if replications < MIN_REPLICATIONS {
        return Err(LyapunovError::Parameter(format!(
            "at least {MIN_REPLICATIONS} replications required"
        )));
    }
    if !(c > 0.0) {
        return Err(LyapunovError::Parameter(format!("c must be positive, got {c}")));
    }
    let w_x = foster_w(x, v);
    let horizon = c * w_x;
    let runs = map_replications(replications, |r| {
        run_to(spec, x.clone(), horizon, replication_seed(seed, r as u64)).map(|(s, t)| (foster_w(&s, v), t))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let estimate = MeanCi::from_samples(&values);
    Ok(DriftEstimate {
        w_x,
        c,
        horizon,
        replications,
        seed,
        ratio: estimate.scaled(w_x),
        estimate,
        truncated: runs.iter().filter(|r| r.1).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleStep {
    pub n: usize,
    /// `E[M(min{n, N})]`.
    pub mean: MeanCi,
    /// Paired increment `M(min{n, N}) - M(min{n-1, N})`; absent at `n = 0`.
    pub increment: Option<MeanCi>,
    /// Fraction of replications stopped by step `n`.
    pub stopped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub w_x: f64,
    pub c: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub replications: usize,
    pub seed: u64,
    pub steps: Vec<SupermartingaleStep>,
    /// No increment is significantly positive.
    pub nonincreasing: bool,
    /// Replications still outside the set after the last step.
    pub exhausted: usize,
    pub truncated: usize,
}

/// Follows the stopping-time recursion up to `n_steps` per replication and
/// reports the mean of the stopped process per step.
#[allow(clippy::too_many_arguments)]
pub fn supermartingale_probe(
    spec: &ValidatedSpec,
    x: &SimState,
    v: &LyapunovCandidate,
    c: f64,
    epsilon: f64,
    kappa: f64,
    n_steps: usize,
    replications: usize,
    seed: u64,
) -> Result<SupermartingaleReport, LyapunovError> {
    if !(epsilon > 0.0 && epsilon < 1.0) || !(kappa > 0.0) || !(c > 0.0) {
        return Err(LyapunovError::Parameter(format!(
            "need c > 0, 0 < eps < 1, kappa > 0; got {c}, {epsilon}, {kappa}"
        )));
    }
    if replications < 2 {
        return Err(LyapunovError::Parameter("at least 2 replications required".into()));
    }
    let w_x = foster_w(x, v);
    // each replication yields M(0..=n_steps), the stop index and truncation
    let runs = map_replications(
        replications,
        |r| -> Result<(Vec<f64>, Option<usize>, bool), LyapunovError> {
            let mut m = Vec::with_capacity(n_steps + 1);
            let mut state = x.clone();
            let mut w = w_x;
            let mut t = 0.0;
            let mut stop = (w <= kappa).then_some(0);
            let mut truncated = false;
            m.push(c * w.max(kappa));
            for n in 1..=n_steps {
                if stop.is_some() {
                    m.push(*m.last().expect("nonempty"));
                    continue;
                }
                let dt = c * w;
                let (next, trunc) = run_to(
                    spec,
                    state,
                    dt,
                    replication_seed(replication_seed(seed, r as u64), n as u64),
                )?;
                truncated |= trunc;
                state = next;
                t += dt;
                w = foster_w(&state, v);
                m.push(c * w + epsilon * t);
                if w <= kappa {
                    stop = Some(n);
                }
            }
            Ok((m, stop, truncated))
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut nonincreasing = true;
    for n in 0..=n_steps {
        let values: Vec<f64> = runs.iter().map(|r| r.0[n]).collect();
        let increment = (n > 0).then(|| {
            let d: Vec<f64> = runs.iter().map(|r| r.0[n] - r.0[n - 1]).collect();
            MeanCi::from_samples(&d)
        });
        if let Some(inc) = &increment {
            if inc.low > 0.0 {
                nonincreasing = false;
            }
        }
        steps.push(SupermartingaleStep {
            n,
            mean: MeanCi::from_samples(&values),
            increment,
            stopped: runs.iter().filter(|r| r.1.is_some_and(|s| s <= n)).count() as f64 / replications as f64,
        });
    }
    Ok(SupermartingaleReport {
        w_x,
        c,
        epsilon,
        kappa,
        replications,
        seed,
        steps,
        nonincreasing,
        exhausted: runs.iter().filter(|r| r.1.is_none()).count(),
        truncated: runs.iter().filter(|r| r.2).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundVerdict {
    Respected,
    Violated,
    /// Some replications never reached the set.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTimeReport {
    pub w_x: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub delta: f64,
    /// `max{W(x), kappa} / eps`.
    pub bound: f64,
    pub estimate: ReturnTimeEstimate,
    pub verdict: BoundVerdict,
}

/// Estimates `E_x[tau_B(delta)]` for `B = {W <= kappa}` and compares the
/// upper confidence limit with `max{W(x), kappa} / eps`.
///
/// Optional stopping on `M` only yields `c max{W(x), kappa} / eps`; the
/// check uses the tighter form, which is what a calibrated `c` of order one
/// is expected to meet.
#[allow(clippy::too_many_arguments)]
pub fn return_time_check(
    spec: &ValidatedSpec,
    x: &SimState,
    v: &LyapunovCandidate,
    epsilon: f64,
    kappa: f64,
    delta: f64,
    replications: usize,
    seed: u64,
    horizon: f64,
) -> Result<ReturnTimeReport, LyapunovError> {
    if !(epsilon > 0.0 && epsilon < 1.0) || !(kappa > 0.0) || !(delta > 0.0) {
        return Err(LyapunovError::Parameter(format!(
            "need 0 < eps < 1, kappa > 0, delta > 0; got {epsilon}, {kappa}, {delta}"
        )));
    }
    let w_x = foster_w(x, v);
    let bound = w_x.max(kappa) / epsilon;
    let set = foster_set(v, kappa);
    let estimate = estimate_return_time(spec, &set, x, delta, replications, seed, Horizon::Time(horizon))?;
    let verdict = match &estimate.estimate {
        _ if estimate.not_reached > 0 => BoundVerdict::Inconclusive,
        Some(ci) if ci.high <= bound => BoundVerdict::Respected,
        Some(_) => BoundVerdict::Violated,
        None => BoundVerdict::Inconclusive,
    };
    Ok(ReturnTimeReport {
        w_x,
        epsilon,
        kappa,
        delta,
        bound,
        estimate,
        verdict,
    })
}

/// Default contraction `eps~`; the drift constant is `eps = 1 - eps~`.
pub const DEFAULT_CONTRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Fluid emptying time `tau` from the stability probe.
    pub c: f64,
    pub epsilon: f64,
    pub kappa: f64,
    /// `(W(x), upper ratio limit)` for each probed state.
    pub ladder: Vec<(f64, f64)>,
}

/// Sets `c` to the fluid emptying time, `eps = 1 - contraction`, and `kappa`
/// to the smallest probed `W(x)` from which every larger probed state shows
/// an upper ratio limit at most `contraction`. States are `levels[i]`
/// customers spread along `q_dir`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    spec: &ValidatedSpec,
    v: &LyapunovCandidate,
    q_dir: &[f64],
    levels: &[usize],
    contraction: f64,
    replications: usize,
    seed: u64,
) -> Result<Calibration, LyapunovError> {
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(LyapunovError::Parameter(format!(
            "contraction must be in (0, 1), got {contraction}"
        )));
    }
    let fluid = FluidSpec::from_network(spec)?;
    let k = spec.num_classes();
    let report = stability_probe(&fluid, &unit_directions(k), 1e3)?;
    let c = match report.verdict {
        StabilityVerdict::Stable { tau } => tau,
        other => {
            return Err(LyapunovError::Parameter(format!(
                "calibration needs a stable fluid model, probe says {other:?}"
            )))
        }
    };
    let mut ladder = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        let q: Vec<usize> = q_dir.iter().map(|d| (d * level as f64).round() as usize).collect();
        let x = SimState::with_queue_lengths(spec, &q, replication_seed(seed, i as u64));
        let est = foster_drift_estimate(spec, &x, v, c, replications, replication_seed(seed ^ 0x5eed, i as u64))?;
        ladder.push((est.w_x, est.ratio.high));
    }
    ladder.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut kappa = ladder.last().map_or(1.0, |l| l.0);
    for &(w, high) in ladder.iter().rev() {
        if high <= contraction {
            kappa = w;
        } else {
            break;
        }
    }
    Ok(Calibration {
        c,
        epsilon: 1.0 - contraction,
        kappa,
        ladder,
    })
}
