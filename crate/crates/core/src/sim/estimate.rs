//! Hitting-time, occupation and time-average estimators.
//!
//! Queue lengths are constant between events and every residual time decays
//! at a constant rate, so a level of the form `g(q) + ||u|| + ||v||` is affine
//! on each inter-event stretch. Entrance and occupation times of sets
//! `{level <= kappa}` are therefore computed exactly, not by sampling.

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::engine::{Horizon, Segment, SimOptions, Simulator};
use super::path::{PathSegment, SamplePath};
use super::state::SimState;
use crate::error::SimError;
use crate::network::ValidatedSpec;
use crate::rng::replication_seed;
use crate::stats::{map_replications, MeanCi};

/// Function of the queue-length vector used to build level sets.
pub trait QueueTerm: Send + Sync + fmt::Debug {
    fn eval(&self, q: &[f64]) -> f64;
}

/// Decidable surrogate for a measurable set of states.
#[derive(Debug, Clone)]
pub enum PredicateSet {
    All,
    Nothing,
    /// `{q = 0}`.
    Empty,
    /// `{|x| <= kappa}`.
    NormAtMost(f64),
    /// `{term(q) + ||u|| + ||v|| <= kappa}`.
    LevelAtMost {
        term: Arc<dyn QueueTerm>,
        kappa: f64,
    },
}

/// Inter-event stretch with queue lengths `q` on `[start, end]`.
#[derive(Debug, Clone, Copy)]
pub struct Stretch<'a> {
    pub start: f64,
    pub end: f64,
    pub q: &'a [f64],
    pub residual: f64,
    pub decay: f64,
    /// The right end point carries this stretch's state (the run stopped
    /// there instead of processing an event).
    pub closed: bool,
}

impl<'a> Stretch<'a> {
    pub fn from_segment(seg: &Segment<'_>, buf: &'a mut Vec<f64>) -> Self {
        buf.clear();
        buf.extend(seg.state.queues.iter().map(|c| c.len() as f64));
        Stretch {
            start: seg.start,
            end: seg.end,
            q: buf,
            residual: seg.state.u_sum() + seg.state.v_sum(),
            decay: seg.u_rate() + seg.v_rate(),
            closed: seg.closed,
        }
    }

    pub fn from_path(seg: &PathSegment<'_>, buf: &'a mut Vec<f64>) -> Self {
        buf.clear();
        buf.extend(seg.q.iter().map(|&x| f64::from(x)));
        Stretch {
            start: seg.start,
            end: seg.end,
            q: buf,
            residual: seg.u.iter().sum::<f64>() + seg.v.iter().sum::<f64>(),
            decay: seg.u_rate() + seg.v_rate(),
            closed: seg.last,
        }
    }
}

enum Level {
    Always,
    Never,
    /// Set is `{base - decay * (t - start) <= kappa}`.
    Affine {
        base: f64,
        kappa: f64,
    },
}

impl PredicateSet {
    fn level(&self, s: &Stretch<'_>) -> Level {
        match self {
            PredicateSet::All => Level::Always,
            PredicateSet::Nothing => Level::Never,
            PredicateSet::Empty => {
                if s.q.iter().all(|&x| x == 0.0) {
                    Level::Always
                } else {
                    Level::Never
                }
            }
            PredicateSet::NormAtMost(kappa) => Level::Affine {
                base: s.q.iter().sum::<f64>() + s.residual,
                kappa: *kappa,
            },
            PredicateSet::LevelAtMost { term, kappa } => Level::Affine {
                base: term.eval(s.q) + s.residual,
                kappa: *kappa,
            },
        }
    }

    /// Earliest time `t >= from` in the stretch at which the state is in the set.
    pub fn entrance(&self, s: &Stretch<'_>, from: f64) -> Option<f64> {
        let t0 = from.max(s.start);
        let inside = |t: f64| t < s.end || (s.closed && t <= s.end);
        if !inside(t0) {
            return None;
        }
        match self.level(s) {
            Level::Always => Some(t0),
            Level::Never => None,
            Level::Affine { base, kappa } => {
                let at_t0 = base - s.decay * (t0 - s.start);
                if at_t0 <= kappa {
                    Some(t0)
                } else if s.decay > 0.0 {
                    let hit = s.start + (base - kappa) / s.decay;
                    inside(hit).then_some(hit.max(t0))
                } else {
                    None
                }
            }
        }
    }

    /// Time spent in the set during the stretch.
    pub fn occupation(&self, s: &Stretch<'_>) -> f64 {
        let len = (s.end - s.start).max(0.0);
        match self.level(s) {
            Level::Always => len,
            Level::Never => 0.0,
            Level::Affine { base, kappa } => {
                if base <= kappa {
                    len
                } else if s.decay > 0.0 {
                    let hit = s.start + (base - kappa) / s.decay;
                    (s.end - hit).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn contains(&self, state: &SimState) -> bool {
        let q: Vec<f64> = state.queues.iter().map(|c| c.len() as f64).collect();
        let residual = state.u_sum() + state.v_sum();
        match self {
            PredicateSet::All => true,
            PredicateSet::Nothing => false,
            PredicateSet::Empty => state.total_customers() == 0,
            PredicateSet::NormAtMost(kappa) => q.iter().sum::<f64>() + residual <= *kappa,
            PredicateSet::LevelAtMost { term, kappa } => term.eval(&q) + residual <= *kappa,
        }
    }
}

/// `inf {t >= delta : X(t) in A}` on a recorded path, `None` if the record
/// ends first.
pub fn first_entrance_time(path: &SamplePath, set: &PredicateSet, delta: f64) -> Option<f64> {
    let mut buf = Vec::new();
    for seg in path.segments() {
        if seg.end < delta {
            continue;
        }
        let s = Stretch::from_path(&seg, &mut buf);
        if let Some(t) = set.entrance(&s, delta) {
            return Some(t);
        }
    }
    None
}

/// Fraction of `[0, end_time]` the recorded path spends in the set.
pub fn occupation_fraction(path: &SamplePath, set: &PredicateSet) -> f64 {
    let mut buf = Vec::new();
    let span = path.end_time - path.times.first().copied().unwrap_or(0.0);
    if span <= 0.0 {
        return match path.segments().next() {
            Some(seg) => {
                let s = Stretch::from_path(&seg, &mut buf);
                if set.entrance(&s, s.start).is_some() {
                    1.0
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
    }
    let mut inside = 0.0;
    for seg in path.segments() {
        let s = Stretch::from_path(&seg, &mut buf);
        inside += set.occupation(&s);
    }
    (inside / span).clamp(0.0, 1.0)
}

/// First entrance past `delta` computed while simulating, without keeping
/// the path.
pub fn first_entrance_simulated(
    spec: &ValidatedSpec,
    x0: SimState,
    set: &PredicateSet,
    delta: f64,
    horizon: Horizon,
    seed: u64,
) -> Result<Option<f64>, SimError> {
    let mut sim = Simulator::new(spec, x0, seed)?;
    let mut hit = None;
    let mut buf = Vec::new();
    sim.run(horizon, |seg| {
        if seg.end < delta {
            return ControlFlow::Continue(());
        }
        let s = Stretch::from_segment(seg, &mut buf);
        match set.entrance(&s, delta) {
            Some(t) => {
                hit = Some(t);
                ControlFlow::Break(())
            }
            None => ControlFlow::Continue(()),
        }
    })?;
    Ok(hit)
}

/// Time-averaged queue lengths over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAverage {
    pub per_class: Vec<f64>,
    pub total: f64,
    pub duration: f64,
    pub events: u64,
    pub truncated: bool,
}

pub fn time_average_queue(
    spec: &ValidatedSpec,
    x0: SimState,
    horizon: Horizon,
    seed: u64,
) -> Result<TimeAverage, SimError> {
    let k = spec.num_classes();
    let mut area = vec![0.0; k];
    let start = x0.time();
    let mut sim = Simulator::new(spec, x0, seed)?;
    let summary = sim.run(horizon, |seg| {
        let dt = seg.duration();
        for (a, c) in area.iter_mut().zip(&seg.state.queues) {
            *a += c.len() as f64 * dt;
        }
        ControlFlow::Continue(())
    })?;
    let duration = summary.end_time - start;
    let per_class: Vec<f64> = area.iter().map(|a| a / duration).collect();
    Ok(TimeAverage {
        total: per_class.iter().sum(),
        per_class,
        duration,
        events: summary.events,
        truncated: summary.truncated,
    })
}

/// Monte Carlo estimate of `E_x[tau_B(delta)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTimeEstimate {
    pub replications: usize,
    pub reached: usize,
    pub not_reached: usize,
    /// Mean and interval over the replications that reached the set;
    /// `None` if none did.
    pub estimate: Option<MeanCi>,
    pub samples: Vec<Option<f64>>,
}

impl ReturnTimeEstimate {
    pub fn undefined(&self) -> bool {
        self.estimate.is_none()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_return_time(
    spec: &ValidatedSpec,
    set: &PredicateSet,
    x0: &SimState,
    delta: f64,
    replications: usize,
    seed: u64,
    horizon: Horizon,
) -> Result<ReturnTimeEstimate, SimError> {
    if replications < 2 {
        return Err(SimError::Parameter("at least 2 replications required".into()));
    }
    if !(delta >= 0.0) {
        return Err(SimError::Parameter(format!("delta must be nonnegative, got {delta}")));
    }
    let samples = map_replications(replications, |r| {
        first_entrance_simulated(spec, x0.clone(), set, delta, horizon, replication_seed(seed, r as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let hits: Vec<f64> = samples.iter().flatten().copied().collect();
    Ok(ReturnTimeEstimate {
        replications,
        reached: hits.len(),
        not_reached: replications - hits.len(),
        estimate: (!hits.is_empty()).then(|| MeanCi::from_samples(&hits)),
        samples,
    })
}

/// Default options with invariant checks after every event.
pub fn checked_options() -> SimOptions {
    SimOptions {
        check_invariants: true,
        ..SimOptions::default()
    }
}
