use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::FluidSpec;
use crate::error::FluidError;

/// Tolerance on the matching condition of [`concatenate`].
pub const MATCH_TOL: f64 = 1e-9;

/// Piecewise-linear fluid solution.
///
/// `times` are strictly increasing breakpoints starting at 0, `q[i]` is the
/// fluid level at `times[i]`, `rates[i]` the allocation rate on
/// `[times[i], times[i+1]]` and `allocation[i]` the cumulative allocation at
/// `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub allocation: Vec<Vec<f64>>,
}

fn lerp(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * w).collect()
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

impl FluidTrajectory {
    /// Builds a trajectory from breakpoints, levels and segment rates; the
    /// cumulative allocation is integrated from the rates.
    pub fn new(times: Vec<f64>, q: Vec<Vec<f64>>, rates: Vec<Vec<f64>>) -> Result<Self, FluidError> {
        if times.is_empty() || q.len() != times.len() || rates.len() + 1 != times.len() {
            return Err(FluidError::Malformed(format!(
                "{} breakpoints, {} levels, {} rate vectors",
                times.len(),
                q.len(),
                rates.len()
            )));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FluidError::Malformed(
                "breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        let k = q[0].len();
        if q.iter().chain(&rates).any(|v| v.len() != k) {
            return Err(FluidError::Malformed("inconsistent dimensions".into()));
        }
        let mut allocation = Vec::with_capacity(times.len());
        allocation.push(vec![0.0; k]);
        for (i, r) in rates.iter().enumerate() {
            let dt = times[i + 1] - times[i];
            let next = allocation[i].iter().zip(r).map(|(t, x)| t + x * dt).collect();
            allocation.push(next);
        }
        Ok(FluidTrajectory {
            times,
            q,
            rates,
            allocation,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.q[0].len()
    }

    pub fn num_segments(&self) -> usize {
        self.rates.len()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn q0(&self) -> &[f64] {
        &self.q[0]
    }

    /// Segment containing `t` (the last one starting at or before it).
    pub fn segment_at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        i.min(self.num_segments().saturating_sub(1))
    }

    fn interpolate(&self, t: f64, values: &[Vec<f64>]) -> Vec<f64> {
        if self.num_segments() == 0 || t <= 0.0 {
            return values[0].clone();
        }
        if t >= self.end_time() {
            return values.last().expect("nonempty").clone();
        }
        let i = self.segment_at(t);
        let (a, b) = (self.times[i], self.times[i + 1]);
        lerp(&values[i], &values[i + 1], (t - a) / (b - a))
    }

    /// Fluid level at `t`, held constant beyond the horizon.
    pub fn q_at(&self, t: f64) -> Vec<f64> {
        self.interpolate(t, &self.q)
    }

    pub fn allocation_at(&self, t: f64) -> Vec<f64> {
        self.interpolate(t, &self.allocation)
    }

    pub fn norm_at(&self, t: f64) -> f64 {
        l1(&self.q_at(t))
    }

    /// Net rate `dQ/dt` on segment `i`, read off the stored levels.
    pub fn slope(&self, i: usize) -> Vec<f64> {
        let dt = self.times[i + 1] - self.times[i];
        self.q[i + 1]
            .iter()
            .zip(&self.q[i])
            .map(|(b, a)| (b - a) / dt)
            .collect()
    }

    /// First breakpoint from which the level stays exactly zero to the end
    /// of the trajectory.
    pub fn emptying_time(&self) -> Option<f64> {
        let mut first = None;
        for (i, q) in self.q.iter().enumerate().rev() {
            if q.iter().all(|&x| x == 0.0) {
                first = Some(self.times[i]);
            } else {
                break;
            }
        }
        first
    }

    /// Breakpoint CSV: `time,Q_*,Tdot_*,W_*,I_*`. The rate column holds the
    /// rate of the segment starting at the row (the last segment's rate on
    /// the final row).
    pub fn to_csv(&self, spec: &FluidSpec) -> String {
        let k = self.num_classes();
        let j = spec.num_stations();
        let mut out = String::from("time");
        for c in 1..=k {
            let _ = write!(out, ",Q_{c}");
        }
        for c in 1..=k {
            let _ = write!(out, ",Tdot_{c}");
        }
        for s in 1..=j {
            let _ = write!(out, ",W_{s}");
        }
        for s in 1..=j {
            let _ = write!(out, ",I_{s}");
        }
        out.push('\n');
        let zero = vec![0.0; k];
        for i in 0..self.times.len() {
            let t = self.times[i];
            let rate = self.rates.get(i).or(self.rates.last()).unwrap_or(&zero);
            let _ = write!(out, "{t:?}");
            for x in &self.q[i] {
                let _ = write!(out, ",{x:?}");
            }
            for x in rate {
                let _ = write!(out, ",{x:?}");
            }
            for w in spec.workload(&self.q[i]) {
                let _ = write!(out, ",{w:?}");
            }
            for used in spec.usage(&self.allocation[i]) {
                let _ = write!(out, ",{:?}", t - used);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    /// Reads a trajectory; a missing `allocation` is integrated from the
    /// rates, a present one is kept as written so the verifier judges it.
    pub fn from_json(text: &str) -> Result<Self, FluidError> {
        let raw: FluidTrajectory = serde_json::from_str(text).map_err(|e| FluidError::Malformed(e.to_string()))?;
        let mut traj = FluidTrajectory::new(raw.times, raw.q, raw.rates)?;
        if !raw.allocation.is_empty() {
            if raw.allocation.len() != traj.times.len() || raw.allocation.iter().any(|a| a.len() != traj.num_classes())
            {
                return Err(FluidError::Malformed(
                    "allocation does not match the breakpoints".into(),
                ));
            }
            traj.allocation = raw.allocation;
        }
        Ok(traj)
    }
}

/// Scaling operator: `t -> Q(r t) / r`, and likewise for the allocation.
pub fn scale(traj: &FluidTrajectory, r: f64) -> Result<FluidTrajectory, FluidError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(FluidError::Argument(format!("scale factor must be positive, got {r}")));
    }
    let div = |v: &Vec<f64>| v.iter().map(|x| x / r).collect::<Vec<_>>();
    Ok(FluidTrajectory {
        times: traj.times.iter().map(|t| t / r).collect(),
        q: traj.q.iter().map(div).collect(),
        rates: traj.rates.clone(),
        allocation: traj.allocation.iter().map(div).collect(),
    })
}

/// Shift operator: `t -> Q(t + s)`, with the allocation re-based at `s`.
pub fn shift(traj: &FluidTrajectory, s: f64) -> Result<FluidTrajectory, FluidError> {
    let end = traj.end_time();
    if !(s >= 0.0) || s > end {
        return Err(FluidError::Argument(format!(
            "shift {s} outside the trajectory span [0, {end}]"
        )));
    }
    let base = traj.allocation_at(s);
    let mut times = vec![0.0];
    let mut q = vec![traj.q_at(s)];
    let mut allocation = vec![vec![0.0; traj.num_classes()]];
    let mut rates = Vec::new();
    let first = traj.times.partition_point(|&t| t <= s);
    for i in first..traj.times.len() {
        rates.push(traj.rates[i - 1].clone());
        times.push(traj.times[i] - s);
        q.push(traj.q[i].clone());
        allocation.push(traj.allocation[i].iter().zip(&base).map(|(a, b)| a - b).collect());
    }
    Ok(FluidTrajectory {
        times,
        q,
        rates,
        allocation,
    })
}

/// Concatenation: follow `first` up to `t_star`, then `second` shifted to
/// start at `t_star`. Requires `first.Q(t_star) == second.Q(0)`.
pub fn concatenate(
    first: &FluidTrajectory,
    second: &FluidTrajectory,
    t_star: f64,
) -> Result<FluidTrajectory, FluidError> {
    if !(t_star >= 0.0) || t_star > first.end_time() {
        return Err(FluidError::Argument(format!(
            "cut point {t_star} outside [0, {}]",
            first.end_time()
        )));
    }
    let at = first.q_at(t_star);
    let gap = at
        .iter()
        .zip(second.q0())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap > MATCH_TOL || at.len() != second.num_classes() {
        return Err(FluidError::EndpointMismatch(gap));
    }
    let cut = first.times.partition_point(|&t| t < t_star);
    let mut times = first.times[..cut].to_vec();
    let mut q = first.q[..cut].to_vec();
    let mut allocation = first.allocation[..cut].to_vec();
    let mut rates = first.rates[..cut].to_vec();
    // the junction: second's start replaces first's level at t_star
    let base = first.allocation_at(t_star);
    times.push(t_star);
    q.push(second.q0().to_vec());
    allocation.push(base.clone());
    for i in 1..second.times.len() {
        rates.push(second.rates[i - 1].clone());
        times.push(t_star + second.times[i]);
        q.push(second.q[i].clone());
        allocation.push(second.allocation[i].iter().zip(&base).map(|(a, b)| a + b).collect());
    }
    Ok(FluidTrajectory {
        times,
        q,
        rates,
        allocation,
    })
}
