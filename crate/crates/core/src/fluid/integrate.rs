use super::model::FluidSpec;
use super::rates::{regime_rates, RegimePattern};
use super::trajectory::FluidTrajectory;
use crate::error::FluidError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidOptions {
    /// Abort once this many breakpoints have been produced.
    pub max_breakpoints: usize,
    /// Proportional disciplines have rates that vary continuously with the
    /// levels; segments are then limited to this fraction of `|Q| / L`.
    pub proportional_step: f64,
}

impl Default for FluidOptions {
    fn default() -> Self {
        FluidOptions {
            max_breakpoints: 1_000_000,
            proportional_step: 0.01,
        }
    }
}

/// Integrates the fluid equations from `q0` up to `horizon`.
pub fn fluid_trajectory(spec: &FluidSpec, q0: &[f64], horizon: f64) -> Result<FluidTrajectory, FluidError> {
    fluid_trajectory_with(spec, q0, horizon, FluidOptions::default())
}

pub fn fluid_trajectory_with(
    spec: &FluidSpec,
    q0: &[f64],
    horizon: f64,
    options: FluidOptions,
) -> Result<FluidTrajectory, FluidError> {
    let k = spec.num_classes();
    if q0.len() != k {
        return Err(FluidError::Argument(format!(
            "q0 has {} entries, expected {k}",
            q0.len()
        )));
    }
    if q0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(FluidError::Argument("q0 must be finite and nonnegative".into()));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(FluidError::Argument(format!("horizon must be positive, got {horizon}")));
    }
    let size = q0.iter().sum::<f64>();
    let snap = 1e-12 * size.max(1.0);
    let lip = super::probe::lipschitz_bound(spec);
    let drift_tol = 1e-12 * lip;
    let floor = 1e-3 * size.max(1.0) / lip;

    let mut times = vec![0.0];
    let mut levels = vec![q0.to_vec()];
    let mut rates: Vec<Vec<f64>> = Vec::new();
    let mut q = q0.to_vec();
    let mut t = 0.0;
    let mut warm: Option<Vec<f64>> = None;
    let mut stalled = 0usize;

    while t < horizon {
        if times.len() >= options.max_breakpoints {
            return Err(FluidError::Chattering(times.len()));
        }
        let pattern = RegimePattern::from_levels(&q);
        let (mut tdot, mut qdot) = solve(spec, &pattern, &q, warm.as_deref(), drift_tol)?;
        let mut dt = horizon - t;
        let varying = spec.discipline.is_proportional() && shares_vary(spec, &q, &qdot, drift_tol);
        if varying {
            let total: f64 = q.iter().sum();
            dt = dt.min((options.proportional_step * total / lip).max(floor));
            dt = dt.min(crossing(&q, &qdot).unwrap_or(f64::INFINITY));
            // midpoint rule: take the split at the middle of the step
            let mid: Vec<f64> = q.iter().zip(&qdot).map(|(x, d)| (x + d * dt / 2.0).max(0.0)).collect();
            let weights: Vec<f64> = mid
                .iter()
                .zip(&q)
                .map(|(&m, &x)| if x > 0.0 { m } else { 0.0 })
                .collect();
            let (r, d) = solve(spec, &pattern, &weights, Some(&tdot), drift_tol)?;
            tdot = r;
            qdot = d;
        }
        let hit = crossing(&q, &qdot);
        if let Some(h) = hit {
            dt = dt.min(h);
        }
        let mut next: Vec<f64> = q.iter().zip(&qdot).map(|(x, d)| x + d * dt).collect();
        for (c, x) in next.iter_mut().enumerate() {
            let crossed = q[c] > 0.0 && qdot[c] < 0.0 && q[c] / -qdot[c] <= dt;
            if crossed || *x <= snap {
                *x = 0.0;
            }
        }
        let end = if dt == horizon - t { horizon } else { t + dt };
        if end > t {
            times.push(end);
            levels.push(next.clone());
            rates.push(tdot.clone());
            stalled = 0;
        } else {
            // a crossing too close to resolve in time; only the pattern changes
            stalled += 1;
            if stalled > 1000 {
                return Err(FluidError::Chattering(times.len()));
            }
            let last = levels.len() - 1;
            levels[last] = next.clone();
        }
        let terminal = next.iter().all(|&x| x == 0.0) && qdot.iter().all(|&d| d == 0.0);
        t = end;
        q = next;
        warm = Some(tdot.clone());
        if terminal && t < horizon {
            // the empty state is invariant: one closing segment
            times.push(horizon);
            levels.push(q.clone());
            rates.push(tdot);
            break;
        }
    }
    FluidTrajectory::new(times, levels, rates)
}

fn solve(
    spec: &FluidSpec,
    pattern: &RegimePattern,
    weights: &[f64],
    warm: Option<&[f64]>,
    drift_tol: f64,
) -> Result<(Vec<f64>, Vec<f64>), FluidError> {
    let tdot = regime_rates(spec, pattern, weights, warm)?;
    let mut qdot = spec.drift(&tdot);
    for (c, d) in qdot.iter_mut().enumerate() {
        // empty classes kept empty by their rate show rounding-level drift
        if !pattern.nonempty[c] && d.abs() <= drift_tol {
            *d = 0.0;
        }
    }
    Ok((tdot, qdot))
}

/// Time until the first positive component hits zero.
fn crossing(q: &[f64], qdot: &[f64]) -> Option<f64> {
    q.iter()
        .zip(qdot)
        .filter(|(&x, &d)| x > 0.0 && d < 0.0)
        .map(|(&x, &d)| x / -d)
        .min_by(f64::total_cmp)
}

/// Whether some station splits capacity among two or more active classes
/// whose levels are changing.
fn shares_vary(spec: &FluidSpec, q: &[f64], qdot: &[f64], tol: f64) -> bool {
    (0..spec.num_stations()).any(|j| {
        let active: Vec<usize> = spec
            .classes_at(j)
            .iter()
            .copied()
            .filter(|&c| q[c] > 0.0 || qdot[c] > tol)
            .collect();
        active.len() >= 2 && active.iter().any(|&c| qdot[c].abs() > tol)
    })
}
