use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::candidate::{fluid_drift_check, Envelope, LyapunovCandidate};
use super::lp::{Cmp, Lp, LpOutcome};
use crate::error::LyapunovError;
use crate::fluid::{all_priority_solutions, fluid_trajectory, regime_rates, unit_directions, FluidSpec, RegimePattern};

/// Pattern enumeration is exponential in the number of classes.
pub const MAX_ENUMERATED_CLASSES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCertificate {
    /// Weights, normalized to sum to one.
    pub xi: Vec<f64>,
    /// Guaranteed decrease `min -xi . qdot` over all enumerated drifts.
    pub gamma: f64,
    pub candidate: LyapunovCandidate,
    pub patterns: usize,
    pub drift_vectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertificateOutcome {
    Feasible(LinearCertificate),
    /// No weights work for the enumerated drifts (for priority networks this
    /// does not prove instability: the family is restricted).
    Infeasible {
        best_gamma: f64,
        reason: String,
    },
}

impl CertificateOutcome {
    pub fn certificate(&self) -> Option<&LinearCertificate> {
        match self {
            CertificateOutcome::Feasible(c) => Some(c),
            CertificateOutcome::Infeasible { .. } => None,
        }
    }
}

/// Every drift `qdot` the fluid model can follow in some pattern with
/// nonzero fluid. Static priority contributes all fixed points of the rate
/// map; proportional splits contribute the vertices of the capacity
/// simplex at each busy station, whose hull contains every split.
pub fn enumerate_drifts(spec: &FluidSpec) -> Result<(usize, Vec<Vec<f64>>), LyapunovError> {
    let k = spec.num_classes();
    if k > MAX_ENUMERATED_CLASSES {
        return Err(LyapunovError::EnumerationOverflow(k));
    }
    let mut drifts: Vec<Vec<f64>> = Vec::new();
    let mut push = |d: Vec<f64>| {
        if !drifts
            .iter()
            .any(|e| e.iter().zip(&d).all(|(a, b)| (a - b).abs() <= 1e-12))
        {
            drifts.push(d);
        }
    };
    let mut patterns = 0;
    for mask in 1u32..(1u32 << k) {
        let pattern = RegimePattern {
            nonempty: (0..k).map(|c| mask & (1 << c) != 0).collect(),
        };
        patterns += 1;
        if spec.discipline.is_proportional() {
            // one nonempty class per busy station takes the whole capacity
            let choices: Vec<Vec<usize>> = (0..spec.num_stations())
                .map(|j| {
                    let full: Vec<usize> = spec
                        .classes_at(j)
                        .iter()
                        .copied()
                        .filter(|&c| pattern.nonempty[c])
                        .collect();
                    if full.is_empty() {
                        vec![usize::MAX]
                    } else {
                        full
                    }
                })
                .collect();
            let mut idx = vec![0usize; choices.len()];
            loop {
                let mut weights = vec![0.0; k];
                for (j, opts) in choices.iter().enumerate() {
                    if opts[idx[j]] != usize::MAX {
                        weights[opts[idx[j]]] = 1.0;
                    }
                }
                let rates = regime_rates(spec, &pattern, &weights, None)?;
                push(spec.drift(&rates));
                let mut j = 0;
                while j < idx.len() {
                    idx[j] += 1;
                    if idx[j] < choices[j].len() {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == idx.len() {
                    break;
                }
            }
        } else {
            for rates in all_priority_solutions(spec, &pattern) {
                push(spec.drift(&rates));
            }
        }
    }
    Ok((patterns, drifts))
}

/// Solves `lp` over the rows generated from `drifts`, adding the most
/// violated one until none is violated.
fn solve_generated(base: &Lp, drifts: &[Vec<f64>], row_of: impl Fn(&[f64]) -> (Vec<f64>, f64)) -> LpOutcome {
    let mut lp = base.clone();
    let mut used = vec![false; drifts.len()];
    // seed with a few rows to keep the first solve bounded
    for (i, d) in drifts.iter().enumerate().take(8) {
        let (row, rhs) = row_of(d);
        lp.add(row, Cmp::Le, rhs);
        used[i] = true;
    }
    loop {
        let outcome = lp.maximize();
        let LpOutcome::Optimal { x, .. } = &outcome else {
            return outcome;
        };
        let mut worst: Option<(usize, f64)> = None;
        for (i, d) in drifts.iter().enumerate() {
            if used[i] {
                continue;
            }
            let (row, rhs) = row_of(d);
            let lhs: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            let excess = lhs - rhs;
            if excess > 1e-12 && worst.is_none_or(|(_, e)| excess > e) {
                worst = Some((i, excess));
            }
        }
        match worst {
            None => return outcome,
            Some((i, _)) => {
                let (row, rhs) = row_of(&drifts[i]);
                lp.add(row, Cmp::Le, rhs);
                used[i] = true;
            }
        }
    }
}

/// Looks for weights `xi > 0`, `sum xi = 1`, with `xi . qdot <= -gamma < 0`
/// for every enumerated drift. On success the candidate is `(xi . q)^2` with
/// `w3(s) = gamma xi_min s`, re-checked on trajectories from every
/// coordinate direction.
pub fn synthesize_linear_certificate(spec: &FluidSpec) -> Result<CertificateOutcome, LyapunovError> {
    let k = spec.num_classes();
    let (patterns, drifts) = enumerate_drifts(spec)?;
    let big = drifts.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max) + 1.0;

    // stage one: maximize gamma; variables xi and g = gamma + big >= 0
    let mut base = Lp::new({
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        c
    });
    base.add((0..=k).map(|i| if i < k { 1.0 } else { 0.0 }).collect(), Cmp::Eq, 1.0);
    base.add(
        (0..=k).map(|i| if i < k { 0.0 } else { 1.0 }).collect(),
        Cmp::Le,
        2.0 * big,
    );
    let stage1 = solve_generated(&base, &drifts, |d| {
        let mut row = d.to_vec();
        row.push(1.0);
        (row, big)
    });
    let best_gamma = match stage1 {
        LpOutcome::Optimal { value, .. } => value - big,
        _ => {
            return Ok(CertificateOutcome::Infeasible {
                best_gamma: f64::NEG_INFINITY,
                reason: "stage one program has no optimum".into(),
            })
        }
    };
    if best_gamma <= 1e-9 {
        return Ok(CertificateOutcome::Infeasible {
            best_gamma,
            reason: format!("no weights give a uniform decrease (best gamma {best_gamma:.3e})"),
        });
    }

    // stage two: keep half the best decrease, push the weights off zero
    let target = 0.5 * best_gamma;
    let mut base = Lp::new({
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        c
    });
    base.add((0..=k).map(|i| if i < k { 1.0 } else { 0.0 }).collect(), Cmp::Eq, 1.0);
    for c in 0..k {
        let mut row = vec![0.0; k + 1];
        row[c] = -1.0;
        row[k] = 1.0;
        base.add(row, Cmp::Le, 0.0);
    }
    let stage2 = solve_generated(&base, &drifts, |d| {
        let mut row = d.to_vec();
        row.push(0.0);
        (row, -target)
    });
    let xi = match stage2 {
        LpOutcome::Optimal { x, value } if value > 1e-12 => x[..k].to_vec(),
        _ => {
            return Ok(CertificateOutcome::Infeasible {
                best_gamma,
                reason: "every decreasing weight vector has a zero entry".into(),
            })
        }
    };
    let gamma = drifts
        .iter()
        .map(|d| -d.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let xi_min = xi.iter().copied().fold(f64::INFINITY, f64::min);
    let xi_max = xi.iter().copied().fold(0.0, f64::max);
    let w3 = Envelope::new(gamma * xi_min, 1.0)?;
    let candidate = LyapunovCandidate::linear_squared(xi.clone(), w3)?;

    // recheck on integrated trajectories; xi . Q falls at rate gamma at least
    let horizon = 2.0 * xi_max / gamma + 1.0;
    for d in unit_directions(k) {
        let traj = fluid_trajectory(spec, &d, horizon)?;
        let report = fluid_drift_check(&candidate, &w3, &traj, 1e-9);
        if !report.passed {
            return Ok(CertificateOutcome::Infeasible {
                best_gamma,
                reason: format!("weights fail the trajectory check from {d:?}: {report:?}"),
            });
        }
    }
    Ok(CertificateOutcome::Feasible(LinearCertificate {
        xi,
        gamma,
        candidate,
        patterns,
        drift_vectors: drifts.len(),
    }))
}

/// `n` directions drawn uniformly from the unit simplex.
pub fn random_unit_directions(k: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|x| x / total).collect()
        })
        .collect()
}
