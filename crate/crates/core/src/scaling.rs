//! Scaled sample paths and their distance to fluid trajectories.
//!
//! A scaling sequence starts the network from `round(r_n q_dir)` customers
//! with bounded residual times, so queue lengths grow like `r_n` while the
//! residuals stay bounded. [`scaled_path`] records `X(r_n t) / r_n` on a fixed
//! grid and [`uoc_distance`] measures the uniform distance of its queue
//! component to a fluid trajectory.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::ScalingError;
use crate::fluid::{fluid_trajectory, FluidSpec, FluidTrajectory};
use crate::network::ValidatedSpec;
use crate::rng::replication_seed;
use crate::sim::{Horizon, SimOptions, SimState, Simulator};
use crate::stats::{least_squares, map_replications, MeanCi};

/// Grid intervals over `[0, t_max]`; the grid has one more point.
pub const GRID_INTERVALS: usize = 1000;

/// How the residual times of each initial state are chosen. Both rules keep
/// them bounded, so `|u_n| / r_n` and `|v_n| / r_n` vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualRule {
    /// Drawn from the primitive distributions.
    Fresh,
    /// Set to the distribution means.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTerm {
    pub r: f64,
    pub q: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Numerical record of the scaling conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCertificate {
    /// `|q_n|_1 / r_n` per term.
    pub queue_ratios: Vec<f64>,
    /// `(|u_n|_1 + |v_n|_1) / r_n` per term.
    pub residual_ratios: Vec<f64>,
    /// Largest residual numerator; the ratios are at most this over `r_n`.
    pub residual_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSequence {
    pub q_dir: Vec<f64>,
    pub rule: ResidualRule,
    pub terms: Vec<ScalingTerm>,
    pub certificate: ScalingCertificate,
}

impl ScalingSequence {
    pub fn initial_state(&self, spec: &ValidatedSpec, n: usize) -> SimState {
        let term = &self.terms[n];
        SimState::with_residuals(spec, &term.q, term.u.clone(), term.v.clone())
    }
}

/// Builds and certifies the initial states `x_n` for `schedule`.
pub fn make_scaling_sequence(
    spec: &ValidatedSpec,
    q_dir: &[f64],
    schedule: &[f64],
    rule: ResidualRule,
    seed: u64,
) -> Result<ScalingSequence, ScalingError> {
    let k = spec.num_classes();
    if q_dir.len() != k || q_dir.iter().any(|&x| !(x >= 0.0)) || (q_dir.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ScalingError::Direction);
    }
    if schedule.is_empty()
        || schedule.iter().any(|&r| !(r > 0.0) || !r.is_finite())
        || schedule.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(ScalingError::Schedule);
    }
    let mut terms = Vec::with_capacity(schedule.len());
    for (n, &r) in schedule.iter().enumerate() {
        let q: Vec<usize> = q_dir.iter().map(|&d| (r * d).round() as usize).collect();
        let (u, v) = match rule {
            ResidualRule::Fresh => {
                let s = SimState::with_queue_lengths(spec, &q, replication_seed(seed, n as u64));
                (s.u().to_vec(), s.v().to_vec())
            }
            ResidualRule::Mean => {
                let u = (0..k)
                    .map(|c| spec.arrival_distribution(c).map_or(0.0, |d| d.mean()))
                    .collect();
                let v = (0..k)
                    .map(|c| {
                        if q[c] > 0 {
                            spec.service_distribution(c).mean()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (u, v)
            }
        };
        terms.push(ScalingTerm { r, q, u, v });
    }
    let certificate = certify(&terms, k)?;
    Ok(ScalingSequence {
        q_dir: q_dir.to_vec(),
        rule,
        terms,
        certificate,
    })
}

fn certify(terms: &[ScalingTerm], k: usize) -> Result<ScalingCertificate, ScalingError> {
    let mut queue_ratios = Vec::new();
    let mut residual_ratios = Vec::new();
    let mut residual_bound = 0.0f64;
    for t in terms {
        let total = t.q.iter().sum::<usize>() as f64;
        let ratio = total / t.r;
        // rounding moves each coordinate by at most one half
        if (ratio - 1.0).abs() > 0.5 * k as f64 / t.r + 1e-12 {
            return Err(ScalingError::Certificate(format!(
                "|q|/r = {ratio} at r = {} is not within rounding of 1",
                t.r
            )));
        }
        let residual: f64 = t.u.iter().chain(&t.v).sum();
        if !residual.is_finite() {
            return Err(ScalingError::Certificate(format!("non-finite residual at r = {}", t.r)));
        }
        residual_bound = residual_bound.max(residual);
        queue_ratios.push(ratio);
        residual_ratios.push(residual / t.r);
    }
    Ok(ScalingCertificate {
        queue_ratios,
        residual_ratios,
        residual_bound,
    })
}

/// `X(r t) / r` sampled on an equally spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPath {
    pub r: f64,
    pub grid: Vec<f64>,
    /// Scaled queue lengths per grid point.
    pub q: Vec<Vec<f64>>,
    /// Scaled `|u|_1` per grid point.
    pub u_norm: Vec<f64>,
    /// Scaled `|v|_1` per grid point.
    pub v_norm: Vec<f64>,
    /// The event cap stopped the simulation; the grid ends early.
    pub truncated: bool,
}

impl ScaledPath {
    /// Index of the last grid point at or before `t`.
    fn last_index(&self, t: f64) -> usize {
        self.grid.partition_point(|&s| s <= t * (1.0 + 1e-12)).saturating_sub(1)
    }

    /// Largest scaled residual norm up to `t`.
    pub fn residual_sup(&self, t: f64) -> f64 {
        (0..=self.last_index(t))
            .map(|i| self.u_norm[i] + self.v_norm[i])
            .fold(0.0, f64::max)
    }
}

/// Simulates from `x_n` up to `r_n t_max` and records the scaled process.
pub fn scaled_path(
    spec: &ValidatedSpec,
    x_n: SimState,
    r_n: f64,
    t_max: f64,
    seed: u64,
) -> Result<ScaledPath, ScalingError> {
    scaled_path_with(spec, x_n, r_n, t_max, seed, SimOptions::default())
}

pub fn scaled_path_with(
    spec: &ValidatedSpec,
    x_n: SimState,
    r_n: f64,
    t_max: f64,
    seed: u64,
    options: SimOptions,
) -> Result<ScaledPath, ScalingError> {
    if !(t_max > 0.0) || !(r_n > 0.0) {
        return Err(ScalingError::Span(format!(
            "need r > 0 and t_max > 0, got {r_n}, {t_max}"
        )));
    }
    let grid: Vec<f64> = (0..=GRID_INTERVALS)
        .map(|i| t_max * i as f64 / GRID_INTERVALS as f64)
        .collect();
    let mut q = Vec::with_capacity(grid.len());
    let mut u_norm = Vec::with_capacity(grid.len());
    let mut v_norm = Vec::with_capacity(grid.len());
    let mut next = 0usize;
    let mut sim = Simulator::with_options(spec, x_n, seed, options)?;
    let summary = sim.run(Horizon::Time(r_n * t_max), |seg| {
        while next < grid.len() {
            // grid times are compared on the unscaled clock
            let s = if next == GRID_INTERVALS {
                r_n * t_max
            } else {
                r_n * grid[next]
            };
            let inside = s < seg.end || (seg.closed && s <= seg.end);
            if !inside {
                break;
            }
            let age = s - seg.start;
            let state = seg.state;
            q.push(
                (0..state.num_classes())
                    .map(|c| state.queue_len(c) as f64 / r_n)
                    .collect(),
            );
            let u: f64 = state
                .u()
                .iter()
                .map(|&x| if x > 0.0 { (x - age).max(0.0) } else { 0.0 })
                .sum();
            let v: f64 = state
                .v()
                .iter()
                .zip(state.z())
                .map(|(&x, &z)| (x - z * age).max(0.0))
                .sum();
            u_norm.push(u / r_n);
            v_norm.push(v / r_n);
            next += 1;
        }
        ControlFlow::Continue(())
    })?;
    let mut grid = grid;
    grid.truncate(q.len());
    Ok(ScaledPath {
        r: r_n,
        grid,
        q,
        u_norm,
        v_norm,
        truncated: summary.truncated,
    })
}

/// `sup_{s <= t} |Q_path(s) - Q_traj(s)|_1` over the grid points. Only the
/// queue components are compared; [`ScaledPath::residual_sup`] gives the
/// residual part, whose fluid counterpart is zero.
pub fn uoc_distance(path: &ScaledPath, traj: &FluidTrajectory, t: f64) -> Result<f64, ScalingError> {
    let path_end = path.grid.last().copied().unwrap_or(0.0);
    if !(t >= 0.0) || t > path_end * (1.0 + 1e-12) || t > traj.end_time() * (1.0 + 1e-12) {
        return Err(ScalingError::Span(format!(
            "t = {t} outside the path span {path_end} or the trajectory span {}",
            traj.end_time()
        )));
    }
    if path.q.first().map(Vec::len) != Some(traj.num_classes()) {
        return Err(ScalingError::Span("class counts differ".into()));
    }
    Ok((0..=path.last_index(t))
        .map(|i| {
            let f = traj.q_at(path.grid[i]);
            path.q[i].iter().zip(&f).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub r_n: f64,
    pub seed_count: usize,
    pub mean_dist: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub truncated_runs: usize,
}

/// Trend of the mean distance along the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Least-squares slope of `log(mean)` against `log(r)`; about `-1/2`
    /// for diffusive fluctuations.
    pub log_log_slope: f64,
    /// Consecutive pairs with a smaller mean at the larger `r`.
    pub decreasing_steps: usize,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub t_max: f64,
    pub rows: Vec<ConvergenceRow>,
    pub trend: Trend,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_n,seed_count,mean_dist,ci_low,ci_high\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:?},{},{:?},{:?},{:?}",
                r.r_n, r.seed_count, r.mean_dist, r.ci_low, r.ci_high
            );
        }
        out
    }
}

/// Mean uniform distance to the fluid trajectory from `q_dir` per scale,
/// over `seeds` independent runs.
pub fn convergence_experiment(
    spec: &ValidatedSpec,
    seq: &ScalingSequence,
    t_max: f64,
    seeds: usize,
    seed: u64,
) -> Result<ConvergenceTable, ScalingError> {
    if seeds == 0 {
        return Err(ScalingError::Span("need at least one seed".into()));
    }
    let fluid = FluidSpec::from_network(spec)?;
    let traj = fluid_trajectory(&fluid, &seq.q_dir, t_max)?;
    let n_terms = seq.terms.len();
    let cells = map_replications(n_terms * seeds, |cell| {
        let (n, i) = (cell / seeds, cell % seeds);
        let run_seed = replication_seed(replication_seed(seed, n as u64), i as u64);
        let path = scaled_path(spec, seq.initial_state(spec, n), seq.terms[n].r, t_max, run_seed)?;
        let d = uoc_distance(&path, &traj, path.grid.last().copied().unwrap_or(0.0))?;
        Ok::<_, ScalingError>((d, path.truncated))
    });
    let mut cells = cells.into_iter();
    let mut rows = Vec::with_capacity(n_terms);
    for n in 0..n_terms {
        let mut dists = Vec::with_capacity(seeds);
        let mut truncated_runs = 0;
        for cell in cells.by_ref().take(seeds) {
            let (d, truncated) = cell?;
            dists.push(d);
            truncated_runs += usize::from(truncated);
        }
        let ci = MeanCi::from_samples(&dists);
        rows.push(ConvergenceRow {
            r_n: seq.terms[n].r,
            seed_count: seeds,
            mean_dist: ci.mean,
            ci_low: ci.low,
            ci_high: ci.high,
            truncated_runs,
        });
    }
    let decreasing_steps = rows.windows(2).filter(|w| w[1].mean_dist < w[0].mean_dist).count();
    let log_log_slope = if rows.len() >= 2 && rows.iter().all(|r| r.mean_dist > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.r_n.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_dist.ln()).collect();
        least_squares(&xs, &ys).slope
    } else {
        f64::NAN
    };
    let trend = Trend {
        log_log_slope,
        decreasing_steps,
        strictly_decreasing: decreasing_steps + 1 == rows.len(),
    };
    Ok(ConvergenceTable { t_max, rows, trend })
}
