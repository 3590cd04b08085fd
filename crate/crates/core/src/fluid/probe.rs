use serde::{Deserialize, Serialize};

use super::integrate::fluid_trajectory;
use super::model::FluidSpec;
use super::trajectory::FluidTrajectory;
use crate::error::FluidError;
use crate::stats::least_squares;

/// Slope of `|Q|` above which a direction counts as diverging.
pub const DIVERGENCE_SLOPE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StabilityVerdict {
    /// Every direction empties; `tau` is the largest emptying time.
    Stable {
        tau: f64,
    },
    /// Some direction grows; the largest fitted slope.
    Diverging {
        slope: f64,
    },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionOutcome {
    pub q0: Vec<f64>,
    pub emptying_time: Option<f64>,
    pub late_slope: f64,
    pub final_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub tau_cap: f64,
    pub directions: Vec<DirectionOutcome>,
}

/// Least-squares slope of `|Q(t)|_1` over the second half of the trajectory.
pub fn late_slope(traj: &FluidTrajectory) -> f64 {
    let end = traj.end_time();
    let n = 200;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=n)
        .map(|i| {
            let t = end * (0.5 + 0.5 * i as f64 / n as f64);
            (t, traj.norm_at(t))
        })
        .unzip();
    least_squares(&xs, &ys).slope
}

/// Integrates every unit-norm direction up to `tau_cap` and classifies the
/// network.
pub fn stability_probe(spec: &FluidSpec, directions: &[Vec<f64>], tau_cap: f64) -> Result<StabilityReport, FluidError> {
    if directions.is_empty() {
        return Err(FluidError::Argument("no directions given".into()));
    }
    for d in directions {
        let norm: f64 = d.iter().sum();
        if d.iter().any(|&x| x < 0.0) || (norm - 1.0).abs() > 1e-9 {
            return Err(FluidError::Argument(format!("direction {d:?} is not a unit vector")));
        }
    }
    let outcomes = directions
        .iter()
        .map(|d| {
            let traj = fluid_trajectory(spec, d, tau_cap)?;
            Ok(DirectionOutcome {
                q0: d.clone(),
                emptying_time: traj.emptying_time(),
                late_slope: late_slope(&traj),
                final_norm: traj.norm_at(tau_cap),
            })
        })
        .collect::<Result<Vec<_>, FluidError>>()?;
    let verdict = if outcomes.iter().all(|o| o.emptying_time.is_some()) {
        StabilityVerdict::Stable {
            tau: outcomes.iter().filter_map(|o| o.emptying_time).fold(0.0, f64::max),
        }
    } else {
        let slope = outcomes.iter().map(|o| o.late_slope).fold(f64::NEG_INFINITY, f64::max);
        if slope > DIVERGENCE_SLOPE {
            StabilityVerdict::Diverging { slope }
        } else {
            StabilityVerdict::Inconclusive
        }
    };
    Ok(StabilityReport {
        verdict,
        tau_cap,
        directions: outcomes,
    })
}

/// The coordinate directions `e_1, ..., e_K`.
pub fn unit_directions(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut d = vec![0.0; k];
            d[i] = 1.0;
            d
        })
        .collect()
}

/// Worst-case bound on `|dQ/dt|_1` over all allocations using at most full
/// capacity: `|alpha|_1 + (1 + max row sum of P) * sum_j max_{k at j} mu_k`.
pub fn lipschitz_bound(spec: &FluidSpec) -> f64 {
    let alpha: f64 = spec.alpha.iter().map(|a| a.abs()).sum();
    let row = spec.routing.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let service: f64 = (0..spec.num_stations())
        .map(|j| spec.classes_at(j).iter().map(|&c| spec.mu[c]).fold(0.0, f64::max))
        .sum();
    alpha + (1.0 + row) * service
}

/// Largest segment slope `|dQ/dt|_1` and whether it stays within `bound`.
pub fn lipschitz_check(traj: &FluidTrajectory, bound: f64) -> (f64, bool) {
    let worst = (0..traj.num_segments())
        .map(|i| traj.slope(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (worst, worst <= bound * (1.0 + 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn fluid(name: &str) -> FluidSpec {
        FluidSpec::from_network(&presets::preset(name).unwrap()).unwrap()
    }

    #[test]
    fn mm1_and_tandem_stable_at_two() {
        for name in ["mm1", "tandem"] {
            let f = fluid(name);
            let report = stability_probe(&f, &unit_directions(f.num_classes()), 50.0).unwrap();
            match report.verdict {
                StabilityVerdict::Stable { tau } => assert!((tau - 2.0).abs() < 1e-9, "{name}: {tau}"),
                v => panic!("{name}: {v:?}"),
            }
        }
    }

    #[test]
    fn rybko_stolyar_unstable_diverges() {
        let f = fluid("rybko_stolyar_unstable");
        let report = stability_probe(&f, &unit_directions(4), 100.0).unwrap();
        assert!(matches!(report.verdict, StabilityVerdict::Diverging { slope } if slope > 0.0));
    }

    #[test]
    fn rejects_non_unit_direction() {
        assert!(stability_probe(&fluid("mm1"), &[vec![2.0]], 10.0).is_err());
        assert!(stability_probe(&fluid("mm1"), &[], 10.0).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let f = fluid("mm1");
        assert_eq!(lipschitz_bound(&f), 1.5);
        let traj = fluid_trajectory(&f, &[1.0], 10.0).unwrap();
        let (worst, ok) = lipschitz_check(&traj, 1.5);
        assert!(ok);
        assert_eq!(worst, 0.5);
        let drain = FluidSpec::new(
            vec![0.0],
            vec![3.0],
            vec![vec![0.0]],
            vec![0],
            super::super::FluidDiscipline::WorkConserving,
        );
        assert_eq!(lipschitz_bound(&drain), 3.0);
        let traj = fluid_trajectory(&drain, &[1.0], 1.0).unwrap();
        assert_eq!(lipschitz_check(&traj, 3.0), (3.0, true));
    }
}
