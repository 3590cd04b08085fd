use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::network::{Discipline, ValidatedSpec};
use crate::rng::{self, Sampler, StreamKind};

/// Markov state of the network.
///
/// Customers are stored per class as the clock time at which they entered
/// that class, oldest first, so ages `w = time - entered` are descending
/// from head to tail. `u` has one slot per class; slots of classes without
/// exogenous arrivals stay at zero and are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub(crate) time: f64,
    pub(crate) queues: Vec<VecDeque<f64>>,
    pub(crate) u: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) z: Vec<f64>,
}

/// Initial-state file: `{"queues": [[ages...], ...], "u": [...], "v": [...]}`.
///
/// `u` may list either one entry per class or one entry per class with
/// exogenous arrivals (in class order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStateFile {
    pub queues: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SimState {
    /// Builds a state at clock 0 from customer ages and residual times.
    ///
    /// Ages within a class may be given in any order; they are sorted oldest
    /// first. The effort split is derived from the discipline.
    pub fn from_parts(spec: &ValidatedSpec, ages: Vec<Vec<f64>>, u: Vec<f64>, v: Vec<f64>) -> Result<Self, SimError> {
        let k = spec.num_classes();
        let bad = |m: String| Err(SimError::InitialState(m));
        if ages.len() != k || v.len() != k {
            return bad(format!("expected {k} queues and {k} service residuals"));
        }
        let exo = spec.exogenous_classes();
        let u = if u.len() == k {
            u
        } else if u.len() == exo.len() {
            let mut full = vec![0.0; k];
            for (&c, &x) in exo.iter().zip(&u) {
                full[c] = x;
            }
            full
        } else {
            return bad(format!(
                "u must have {k} entries or one per exogenous class ({})",
                exo.len()
            ));
        };
        let mut queues = Vec::with_capacity(k);
        for (class, mut a) in ages.into_iter().enumerate() {
            if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad(format!("class {class} has a negative or non-finite age"));
            }
            a.sort_by(|x, y| y.total_cmp(x));
            queues.push(a.into_iter().map(|w| -w).collect::<VecDeque<f64>>());
        }
        for class in 0..k {
            let exogenous = spec.alpha()[class] > 0.0;
            if !u[class].is_finite() || u[class] < 0.0 {
                return bad(format!("u[{class}] must be nonnegative"));
            }
            if !exogenous && u[class] != 0.0 {
                return bad(format!("u[{class}] set for a class without exogenous arrivals"));
            }
            if !v[class].is_finite() || v[class] < 0.0 {
                return bad(format!("v[{class}] must be nonnegative"));
            }
            let empty = queues[class].is_empty();
            if empty != (v[class] == 0.0) {
                return bad(format!("v[{class}] must be zero exactly when class {class} is empty"));
            }
        }
        let mut state = SimState {
            time: 0.0,
            queues,
            u,
            v,
            z: vec![0.0; k],
        };
        state.refresh_effort(spec);
        Ok(state)
    }

    pub fn from_file(spec: &ValidatedSpec, file: InitialStateFile) -> Result<Self, SimError> {
        Self::from_parts(spec, file.queues, file.u, file.v)
    }

    pub fn to_file(&self) -> InitialStateFile {
        InitialStateFile {
            queues: (0..self.queues.len()).map(|k| self.ages(k)).collect(),
            u: self.u.clone(),
            v: self.v.clone(),
        }
    }

    /// `q[k]` customers of age 0 per class with residual times drawn from
    /// the primitive distributions (seeded, independent of the simulation
    /// streams).
    pub fn with_queue_lengths(spec: &ValidatedSpec, q: &[usize], seed: u64) -> Self {
        let k = spec.num_classes();
        assert_eq!(q.len(), k, "queue vector length");
        let mut aux = rng::stream(seed, StreamKind::Aux, usize::MAX >> 8);
        let mut u = vec![0.0; k];
        let mut v = vec![0.0; k];
        for class in 0..k {
            if let Some(d) = spec.arrival_distribution(class) {
                u[class] = Sampler::new(d).sample(&mut aux);
            }
            if q[class] > 0 {
                v[class] = Sampler::new(spec.service_distribution(class)).sample(&mut aux);
            }
        }
        Self::with_residuals(spec, q, u, v)
    }

    /// `q[k]` customers of age 0 with explicit residuals.
    pub fn with_residuals(spec: &ValidatedSpec, q: &[usize], u: Vec<f64>, v: Vec<f64>) -> Self {
        let ages = q.iter().map(|&n| vec![0.0; n]).collect();
        Self::from_parts(spec, ages, u, v).expect("consistent residuals")
    }

    pub fn empty(spec: &ValidatedSpec, seed: u64) -> Self {
        Self::with_queue_lengths(spec, &vec![0; spec.num_classes()], seed)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn num_classes(&self) -> usize {
        self.queues.len()
    }

    pub fn queue_len(&self, class: usize) -> usize {
        self.queues[class].len()
    }

    pub fn queue_lengths(&self) -> Vec<usize> {
        self.queues.iter().map(VecDeque::len).collect()
    }

    pub fn total_customers(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// Ages of class `class` customers, oldest first.
    pub fn ages(&self, class: usize) -> Vec<f64> {
        self.queues[class].iter().map(|e| self.time - e).collect()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Sum of residual interarrival times (classes without arrivals hold 0).
    pub fn u_sum(&self) -> f64 {
        self.u.iter().sum()
    }

    pub fn v_sum(&self) -> f64 {
        self.v.iter().sum()
    }

    /// `|x| = ||q|| + ||u|| + ||v||`.
    pub fn norm(&self) -> f64 {
        self.total_customers() as f64 + self.u_sum() + self.v_sum()
    }

    pub(crate) fn refresh_effort(&mut self, spec: &ValidatedSpec) {
        for station in 0..spec.num_stations() {
            self.refresh_station(spec, station);
        }
    }

    pub(crate) fn refresh_station(&mut self, spec: &ValidatedSpec, station: usize) {
        let classes = spec.classes_at(station);
        for &c in classes {
            self.z[c] = 0.0;
        }
        let total: usize = classes.iter().map(|&c| self.queues[c].len()).sum();
        if total == 0 {
            return;
        }
        match spec.discipline() {
            Discipline::Fifo => {
                // oldest head at the station; ties go to the lowest class index
                let mut best: Option<(f64, usize)> = None;
                for &c in classes {
                    if let Some(&entered) = self.queues[c].front() {
                        if best.is_none_or(|(e, _)| entered < e) {
                            best = Some((entered, c));
                        }
                    }
                }
                self.z[best.expect("station nonempty").1] = 1.0;
            }
            Discipline::StaticPriority { ranks } => {
                let c = classes
                    .iter()
                    .copied()
                    .filter(|&c| !self.queues[c].is_empty())
                    .min_by_key(|&c| ranks[c])
                    .expect("station nonempty");
                self.z[c] = 1.0;
            }
            Discipline::Hlpps | Discipline::WorkConserving => {
                let total = total as f64;
                for &c in classes {
                    self.z[c] = self.queues[c].len() as f64 / total;
                }
            }
        }
    }
}

/// Verifies the structural state invariants.
pub fn check_state(spec: &ValidatedSpec, state: &SimState) -> Result<(), SimError> {
    let fail = |what: String| Err(SimError::Invariant { time: state.time, what });
    for class in 0..spec.num_classes() {
        let q = state.queues[class].len();
        if state.u[class] < 0.0 || state.v[class] < 0.0 {
            return fail(format!("negative residual at class {class}"));
        }
        if (q == 0) != (state.v[class] == 0.0) {
            return fail(format!("v[{class}] = {} with q = {q}", state.v[class]));
        }
        if q == 0 && state.z[class] != 0.0 {
            return fail(format!("effort on empty class {class}"));
        }
        let entries = &state.queues[class];
        if entries.iter().zip(entries.iter().skip(1)).any(|(a, b)| a > b) {
            return fail(format!("class {class} list is not ordered by age"));
        }
        if entries.back().is_some_and(|&e| e > state.time) {
            return fail(format!("class {class} has a customer from the future"));
        }
    }
    for station in 0..spec.num_stations() {
        let classes = spec.classes_at(station);
        let total: usize = classes.iter().map(|&c| state.queues[c].len()).sum();
        let effort: f64 = classes.iter().map(|&c| state.z[c]).sum();
        let expected = if total > 0 { 1.0 } else { 0.0 };
        if (effort - expected).abs() > 1e-12 {
            return fail(format!("station {station} effort {effort} with {total} customers"));
        }
        match spec.discipline() {
            Discipline::StaticPriority { ranks } => {
                for &c in classes {
                    if state.z[c] == 1.0
                        && classes
                            .iter()
                            .any(|&h| ranks[h] < ranks[c] && !state.queues[h].is_empty())
                    {
                        return fail(format!("class {c} served ahead of a higher priority class"));
                    }
                }
            }
            Discipline::Hlpps | Discipline::WorkConserving if total > 0 => {
                for &c in classes {
                    if state.z[c] != state.queues[c].len() as f64 / total as f64 {
                        return fail(format!("class {c} effort not proportional to queue"));
                    }
                }
            }
            Discipline::Fifo if total > 0 => {
                let served = classes.iter().copied().find(|&c| state.z[c] == 1.0);
                let oldest = classes
                    .iter()
                    .filter_map(|&c| state.queues[c].front().copied())
                    .fold(f64::INFINITY, f64::min);
                match served {
                    Some(c) if state.queues[c].front() == Some(&oldest) => {}
                    _ => return fail(format!("station {station} not serving its oldest customer")),
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{validate_spec, NetworkSpec};
    use crate::presets;

    fn two_class_one_exogenous() -> ValidatedSpec {
        validate_spec(NetworkSpec::exponential(
            &[0, 1],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            Discipline::Fifo,
        ))
        .unwrap()
    }

    #[test]
    fn norm_examples() {
        let mm1 = presets::mm1();
        let s = SimState::with_residuals(&mm1, &[0], vec![2.0], vec![0.0]);
        assert_eq!(s.norm(), 2.0);

        let spec = two_class_one_exogenous();
        let s = SimState::from_parts(&spec, vec![vec![0.0; 3], vec![0.0]], vec![0.2], vec![0.5, 0.1]).unwrap();
        assert!((s.norm() - 4.8).abs() < 1e-12);

        let s = SimState::from_parts(&spec, vec![vec![], vec![]], vec![0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(s.norm(), 0.0);
    }

    #[test]
    fn rejects_inconsistent_residuals() {
        let mm1 = presets::mm1();
        assert!(SimState::from_parts(&mm1, vec![vec![1.0]], vec![1.0], vec![0.0]).is_err());
        assert!(SimState::from_parts(&mm1, vec![vec![]], vec![1.0], vec![0.5]).is_err());
        assert!(SimState::from_parts(&mm1, vec![vec![-1.0]], vec![1.0], vec![0.5]).is_err());
    }

    #[test]
    fn ages_sorted_oldest_first() {
        let mm1 = presets::mm1();
        let s = SimState::from_parts(&mm1, vec![vec![1.0, 5.0, 3.0]], vec![1.0], vec![0.5]).unwrap();
        assert_eq!(s.ages(0), vec![5.0, 3.0, 1.0]);
        check_state(&mm1, &s).unwrap();
    }

    #[test]
    fn effort_split_per_discipline() {
        let prio = presets::single_station_priority();
        let s = SimState::with_queue_lengths(&prio, &[3, 2], 1);
        assert_eq!(s.z(), &[0.0, 1.0]);
        check_state(&prio, &s).unwrap();

        let mut raw = prio.raw().clone();
        raw.discipline = Discipline::Hlpps;
        let hl = validate_spec(raw.clone()).unwrap();
        let s = SimState::with_queue_lengths(&hl, &[3, 1], 1);
        assert_eq!(s.z(), &[0.75, 0.25]);

        raw.discipline = Discipline::Fifo;
        let fifo = validate_spec(raw).unwrap();
        let s = SimState::from_parts(&fifo, vec![vec![1.0], vec![4.0]], vec![0.3], vec![0.5, 0.5]).unwrap();
        assert_eq!(s.z(), &[0.0, 1.0]);
        check_state(&fifo, &s).unwrap();
    }

    #[test]
    fn file_accepts_exogenous_length_u() {
        let spec = two_class_one_exogenous();
        let file: InitialStateFile =
            serde_json::from_str(r#"{"queues": [[0.5], []], "u": [0.25], "v": [1.0, 0.0]}"#).unwrap();
        let s = SimState::from_file(&spec, file).unwrap();
        assert_eq!(s.u(), &[0.25, 0.0]);
        assert_eq!(s.to_file().queues, vec![vec![0.5], vec![]]);
    }
}
