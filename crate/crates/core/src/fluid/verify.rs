use serde::{Deserialize, Serialize};

use super::model::FluidSpec;
use super::trajectory::FluidTrajectory;

pub const BALANCE: &str = "balance";
pub const NONNEGATIVE: &str = "Q nonnegative";
pub const ALLOCATION_START: &str = "T(0) = 0";
pub const T_MONOTONE: &str = "T nondecreasing";
pub const I_MONOTONE: &str = "I nondecreasing";
pub const WORKLOAD: &str = "workload";
pub const COMPLEMENTARITY: &str = "complementarity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub name: String,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidVerification {
    pub tol: f64,
    pub checks: Vec<ResidualCheck>,
    pub passed: bool,
}

impl FluidVerification {
    pub fn check(&self, name: &str) -> Option<&ResidualCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// Checks balance, nonnegativity, monotonicity of `T` and `I`, the workload
/// identity and complementarity at every breakpoint and segment midpoint.
/// Arrivals are read as `A(t) = alpha t + P^T M T(t)`.
pub fn verify_fluid_solution(traj: &FluidTrajectory, spec: &FluidSpec, tol: f64) -> FluidVerification {
    let k = spec.num_classes();
    let q0 = traj.q0();
    let mut points: Vec<f64> = Vec::with_capacity(2 * traj.times.len());
    for w in traj.times.windows(2) {
        points.push(w[0]);
        points.push(0.5 * (w[0] + w[1]));
    }
    points.push(traj.end_time());

    let mut balance = 0.0f64;
    let mut negative = 0.0f64;
    let mut workload = 0.0f64;
    for &t in &points {
        let q = traj.q_at(t);
        let alloc = traj.allocation_at(t);
        // predicted level from the balance equation
        let served: Vec<f64> = (0..k).map(|c| spec.mu[c] * alloc[c]).collect();
        let mut predicted: Vec<f64> = (0..k).map(|c| q0[c] + spec.alpha[c] * t - served[c]).collect();
        let mut arrived: Vec<f64> = (0..k).map(|c| spec.alpha[c] * t).collect();
        for l in 0..k {
            for c in 0..k {
                let p = spec.routing[l][c];
                if p != 0.0 {
                    predicted[c] += p * served[l];
                    arrived[c] += p * served[l];
                }
            }
        }
        balance = balance.max(max_abs(q.iter().zip(&predicted).map(|(a, b)| a - b)));
        negative = negative.max(q.iter().map(|&x| -x).fold(0.0, f64::max));
        // workload through arrivals minus service, against C M^-1 Q
        let direct = spec.workload(&q);
        let mut via_arrivals = vec![0.0; spec.num_stations()];
        for c in 0..k {
            via_arrivals[spec.station_of[c]] += (q0[c] + arrived[c]) / spec.mu[c] - alloc[c];
        }
        workload = workload.max(max_abs(direct.iter().zip(&via_arrivals).map(|(a, b)| a - b)));
    }

    let start = max_abs(traj.allocation[0].iter().copied());
    let mut t_drop = 0.0f64;
    let mut i_drop = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..traj.num_segments() {
        let dt = traj.times[i + 1] - traj.times[i];
        for c in 0..k {
            t_drop = t_drop.max(traj.allocation[i][c] - traj.allocation[i + 1][c]);
            t_drop = t_drop.max(-traj.rates[i][c]);
        }
        let d_alloc: Vec<f64> = (0..k)
            .map(|c| traj.allocation[i + 1][c] - traj.allocation[i][c])
            .collect();
        let wa = spec.workload(&traj.q[i]);
        let wb = spec.workload(&traj.q[i + 1]);
        for (j, used) in spec.usage(&d_alloc).into_iter().enumerate() {
            let d_idle = dt - used;
            i_drop = i_drop.max(-d_idle);
            complementarity += d_idle.max(0.0) * 0.5 * (wa[j] + wb[j]);
        }
    }

    let entries = [
        (BALANCE, balance),
        (NONNEGATIVE, negative),
        (ALLOCATION_START, start),
        (T_MONOTONE, t_drop),
        (I_MONOTONE, i_drop),
        (WORKLOAD, workload),
        (COMPLEMENTARITY, complementarity),
    ];
    let checks: Vec<ResidualCheck> = entries
        .into_iter()
        .map(|(name, r)| ResidualCheck {
            name: name.to_string(),
            max_residual: if r == 0.0 { 0.0 } else { r },
            passed: r <= tol,
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    FluidVerification { tol, checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{fluid_trajectory, FluidDiscipline};
    use crate::presets;

    fn mm1() -> FluidSpec {
        FluidSpec::from_network(&presets::mm1()).unwrap()
    }

    #[test]
    fn integrated_mm1_passes() {
        let f = mm1();
        let traj = fluid_trajectory(&f, &[1.0], 10.0).unwrap();
        let report = verify_fluid_solution(&traj, &f, 1e-9);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn decreasing_allocation_fails() {
        let f = mm1();
        let traj = FluidTrajectory::new(vec![0.0, 1.0], vec![vec![1.0], vec![2.5]], vec![vec![-1.0]]).unwrap();
        let report = verify_fluid_solution(&traj, &f, 1e-9);
        assert!(!report.check(T_MONOTONE).unwrap().passed);
        // the levels are consistent with the (illegal) rate
        assert!(report.check(BALANCE).unwrap().passed);
    }

    #[test]
    fn idling_with_work_fails_complementarity() {
        // no arrivals, the station sits idle with workload 0.5
        let f = FluidSpec::new(
            vec![0.0],
            vec![1.0],
            vec![vec![0.0]],
            vec![0],
            FluidDiscipline::WorkConserving,
        );
        let traj = FluidTrajectory::new(vec![0.0, 1.0], vec![vec![0.5], vec![0.5]], vec![vec![0.0]]).unwrap();
        let report = verify_fluid_solution(&traj, &f, 1e-9);
        assert_eq!(report.failures(), vec![COMPLEMENTARITY]);
        assert!((report.check(COMPLEMENTARITY).unwrap().max_residual - 0.5).abs() < 1e-12);
    }
}
