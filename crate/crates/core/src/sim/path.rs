use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::engine::{EventKind, Horizon, RunSummary, SimOptions, Simulator};
use super::state::SimState;
use crate::error::SimError;
use crate::network::ValidatedSpec;

/// Recorded realization: one snapshot of `(q, u, v, z)` at time 0 and after
/// every event. Snapshots are stored flat, `K` entries per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub num_classes: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub kinds: Vec<EventKind>,
    /// Class of the event (`None` for the initial record).
    pub classes: Vec<Option<usize>>,
    pub q: Vec<u32>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    /// Clock time at which the record ends.
    pub end_time: f64,
    pub truncated: bool,
}

/// One piecewise-deterministic stretch of a recorded path.
#[derive(Debug, Clone, Copy)]
pub struct PathSegment<'a> {
    pub start: f64,
    pub end: f64,
    pub q: &'a [u32],
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub z: &'a [f64],
    /// Last segment of the path; its right end point belongs to it.
    pub last: bool,
}

impl PathSegment<'_> {
    pub fn u_rate(&self) -> f64 {
        self.u.iter().filter(|&&x| x > 0.0).count() as f64
    }

    pub fn v_rate(&self) -> f64 {
        self.z.iter().sum()
    }
}

impl SamplePath {
    fn new(num_classes: usize, seed: u64) -> Self {
        SamplePath {
            num_classes,
            seed,
            times: Vec::new(),
            kinds: Vec::new(),
            classes: Vec::new(),
            q: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            z: Vec::new(),
            end_time: 0.0,
            truncated: false,
        }
    }

    fn push(&mut self, state: &SimState, kind: EventKind, class: Option<usize>) {
        self.times.push(state.time());
        self.kinds.push(kind);
        self.classes.push(class);
        self.q.extend(state.queues.iter().map(|c| c.len() as u32));
        self.u.extend_from_slice(state.u());
        self.v.extend_from_slice(state.v());
        self.z.extend_from_slice(state.z());
    }

    /// Number of records (initial state plus events).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.len().saturating_sub(1)
    }

    fn slot(&self, i: usize) -> std::ops::Range<usize> {
        i * self.num_classes..(i + 1) * self.num_classes
    }

    pub fn q(&self, i: usize) -> &[u32] {
        &self.q[self.slot(i)]
    }

    pub fn u(&self, i: usize) -> &[f64] {
        &self.u[self.slot(i)]
    }

    pub fn v(&self, i: usize) -> &[f64] {
        &self.v[self.slot(i)]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[self.slot(i)]
    }

    pub fn total(&self, i: usize) -> u64 {
        self.q(i).iter().map(|&x| u64::from(x)).sum()
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.total(i) as f64 + self.u(i).iter().sum::<f64>() + self.v(i).iter().sum::<f64>()
    }

    pub fn segments(&self) -> impl Iterator<Item = PathSegment<'_>> + '_ {
        let n = self.len();
        (0..n).map(move |i| PathSegment {
            start: self.times[i],
            end: if i + 1 < n { self.times[i + 1] } else { self.end_time },
            q: self.q(i),
            u: self.u(i),
            v: self.v(i),
            z: self.z(i),
            last: i + 1 == n,
        })
    }

    /// Index of the record in force at time `t` (the last record at or
    /// before `t`).
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Canonical CSV export: `time,event_kind,class,q_1..q_K,norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,event_kind,class");
        for k in 1..=self.num_classes {
            let _ = write!(out, ",q_{k}");
        }
        out.push_str(",norm\n");
        for i in 0..self.len() {
            let class = self.classes[i].map_or(String::new(), |c| (c + 1).to_string());
            let _ = write!(out, "{:?},{},{}", self.times[i], self.kinds[i].as_str(), class);
            for q in self.q(i) {
                let _ = write!(out, ",{q}");
            }
            let _ = writeln!(out, ",{:?}", self.norm(i));
        }
        out
    }
}

/// Simulates from `x0` and records every event.
pub fn simulate(spec: &ValidatedSpec, x0: SimState, horizon: Horizon, seed: u64) -> Result<SamplePath, SimError> {
    simulate_with(spec, x0, horizon, seed, SimOptions::default()).map(|(p, _)| p)
}

pub fn simulate_with(
    spec: &ValidatedSpec,
    x0: SimState,
    horizon: Horizon,
    seed: u64,
    options: SimOptions,
) -> Result<(SamplePath, RunSummary), SimError> {
    if let Horizon::Time(t) = horizon {
        if !(t > 0.0) {
            return Err(SimError::Parameter(format!("horizon must be positive, got {t}")));
        }
    }
    let mut path = SamplePath::new(spec.num_classes(), seed);
    let mut sim = Simulator::with_options(spec, x0, seed, options)?;
    let summary = sim.run(horizon, |seg| {
        match seg.event {
            None => path.push(seg.state, EventKind::Initial, None),
            Some(e) => path.push(seg.state, e.kind, Some(e.class)),
        }
        ControlFlow::Continue(())
    })?;
    path.end_time = summary.end_time;
    path.truncated = summary.truncated;
    Ok((path, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn same_seed_same_path() {
        for spec in presets::all() {
            let q0 = vec![2; spec.num_classes()];
            let a = simulate(
                &spec,
                SimState::with_queue_lengths(&spec, &q0, 11),
                Horizon::Events(2000),
                5,
            )
            .unwrap();
            let b = simulate(
                &spec,
                SimState::with_queue_lengths(&spec, &q0, 11),
                Horizon::Events(2000),
                5,
            )
            .unwrap();
            assert_eq!(a, b);
            assert_eq!(a.to_csv(), b.to_csv());
            let c = simulate(
                &spec,
                SimState::with_queue_lengths(&spec, &q0, 11),
                Horizon::Events(2000),
                6,
            )
            .unwrap();
            assert_ne!(a.times, c.times);
        }
    }

    #[test]
    fn records_are_time_ordered_and_balanced() {
        let spec = presets::rybko_stolyar_stable();
        let x0 = SimState::with_queue_lengths(&spec, &[5, 0, 5, 0], 1);
        let path = simulate(&spec, x0, Horizon::Time(200.0), 2).unwrap();
        assert!(path.times.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(path.end_time, 200.0);
        let mut total = path.total(0) as i64;
        for i in 1..path.len() {
            match path.kinds[i] {
                EventKind::Arrival => total += 1,
                EventKind::Departure => {
                    let routed = path.total(i) as i64 == total;
                    if !routed {
                        total -= 1;
                    }
                }
                EventKind::Initial => unreachable!(),
            }
            assert_eq!(path.total(i) as i64, total);
        }
    }

    #[test]
    fn csv_layout() {
        let spec = presets::tandem();
        let x0 = SimState::with_queue_lengths(&spec, &[1, 0], 1);
        let path = simulate(&spec, x0, Horizon::Events(3), 1).unwrap();
        let csv = path.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("time,event_kind,class,q_1,q_2,norm"));
        assert!(lines.next().unwrap().starts_with("0.0,initial,,1,0,"));
        assert_eq!(csv.lines().count(), 5);
    }
}
