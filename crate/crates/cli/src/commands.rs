use std::path::PathBuf;

use serde::Deserialize;
use serde_json::{json, Value};

use mcqn::error::{FluidError, LyapunovError, ScalingError, SimError};
use mcqn::fluid::{
    fluid_trajectory, lipschitz_bound, lipschitz_check, stability_probe, unit_directions, verify_fluid_solution,
    FluidSpec, FluidTrajectory, StabilityVerdict,
};
use mcqn::lyapunov::{
    calibrate, fluid_drift_check, foster_drift_estimate, foster_w, random_unit_directions, return_time_check,
    sandwich_check, supermartingale_probe, synthesize_linear_certificate, BoundVerdict, CertificateOutcome,
    LyapunovCandidate, DEFAULT_CONTRACTION,
};
use mcqn::network::{effective_arrival_rates, spectral_radius, traffic_intensity, Discipline, ValidatedSpec};
use mcqn::scaling::{convergence_experiment, make_scaling_sequence, ResidualRule};
use mcqn::sim::{checked_options, simulate_with, Horizon, SimOptions, SimState};

use crate::config::ExperimentConfig;
use crate::CliError;

pub enum Artifact {
    Csv(&'static str, String),
    Json(&'static str, Value),
}

/// What a command produced. `report` becomes `<command>.json`.
pub struct Outcome {
    pub passed: bool,
    pub summary: Vec<String>,
    pub report: Value,
    pub artifacts: Vec<Artifact>,
}

/// Parameter problems are configuration errors, everything else is a
/// runtime failure.
pub fn classify(e: impl Into<mcqn::Error>) -> CliError {
    use mcqn::Error as E;
    fn sim(e: SimError) -> CliError {
        match e {
            SimError::Parameter(_) | SimError::InitialState(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
    fn fluid(e: FluidError) -> CliError {
        match e {
            FluidError::UnsupportedDiscipline(_) | FluidError::Argument(_) | FluidError::Malformed(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
    match e.into() {
        E::Spec(e) => CliError::Config(e.to_string()),
        E::Sim(e) => sim(e),
        E::Fluid(e) => fluid(e),
        E::Scaling(ScalingError::Sim(e)) => sim(e),
        E::Scaling(ScalingError::Fluid(e)) => fluid(e),
        E::Scaling(e @ ScalingError::Certificate(_)) => CliError::Runtime(e.to_string()),
        E::Scaling(e) => CliError::Config(e.to_string()),
        E::Lyapunov(LyapunovError::Sim(e)) => sim(e),
        E::Lyapunov(LyapunovError::Fluid(e)) => fluid(e),
        E::Lyapunov(e) => CliError::Config(e.to_string()),
    }
}

fn fluid_spec(spec: &ValidatedSpec) -> Result<FluidSpec, CliError> {
    FluidSpec::from_network(spec).map_err(classify)
}

fn check_line(name: &str, passed: bool, detail: String) -> String {
    format!("{name}: {} ({detail})", if passed { "ok" } else { "violated" })
}

fn initial_state(spec: &ValidatedSpec, q0: Option<Vec<usize>>, seed: u64) -> Result<SimState, CliError> {
    let q0 = q0.unwrap_or_else(|| vec![0; spec.num_classes()]);
    if q0.len() != spec.num_classes() {
        return Err(CliError::Config(format!(
            "q0 has {} entries for {} classes",
            q0.len(),
            spec.num_classes()
        )));
    }
    Ok(SimState::with_queue_lengths(spec, &q0, seed))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    #[serde(default)]
    q0: Option<Vec<usize>>,
    #[serde(default)]
    horizon_events: Option<u64>,
    #[serde(default)]
    horizon_time: Option<f64>,
    /// Re-check the state invariants after every event.
    #[serde(default)]
    checked: bool,
}

pub fn simulate(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: SimulateParams = config.params()?;
    let spec = config.network()?;
    let seed = config.require_seed()?;
    let horizon = match (p.horizon_events, p.horizon_time) {
        (Some(n), None) => Horizon::Events(n),
        (None, Some(t)) => Horizon::Time(t),
        _ => {
            return Err(CliError::Config(
                "set exactly one of horizon_events, horizon_time".into(),
            ))
        }
    };
    let x0 = initial_state(spec, p.q0, seed)?;
    let options = if p.checked {
        checked_options()
    } else {
        SimOptions::default()
    };
    let (path, summary) = match simulate_with(spec, x0, horizon, seed, options) {
        Ok(r) => r,
        Err(e @ SimError::Invariant { .. }) => {
            return Ok(Outcome {
                passed: false,
                summary: vec![format!("state invariants violated: {e}")],
                report: json!({ "invariant_violation": e.to_string() }),
                artifacts: vec![],
            })
        }
        Err(e) => return Err(classify(e)),
    };

    // time-averaged queue lengths over the recorded path
    let k = spec.num_classes();
    let mut area = vec![0.0; k];
    for i in 0..path.len().saturating_sub(1) {
        let dt = path.times[i + 1] - path.times[i];
        for (a, &n) in area.iter_mut().zip(path.q(i)) {
            *a += n as f64 * dt;
        }
    }
    let span = path.times.last().copied().unwrap_or(0.0) - path.times[0];
    let averages: Vec<f64> = area.iter().map(|a| if span > 0.0 { a / span } else { 0.0 }).collect();
    let last = path.len() - 1;
    let mut summary_lines = vec![
        format!(
            "{} events over [0, {:.6}]: {} arrivals, {} departures{}",
            summary.events,
            summary.end_time,
            summary.arrivals,
            summary.exits,
            if summary.truncated { " (truncated)" } else { "" }
        ),
        format!("final queue lengths {:?}", path.q(last)),
        format!("time-averaged queue lengths {averages:.4?}"),
    ];
    if p.checked {
        summary_lines.push("state invariants: ok (checked after every event)".into());
    }
    Ok(Outcome {
        passed: true,
        summary: summary_lines,
        report: json!({
            "run": summary,
            "checked": p.checked,
            "final_queue_lengths": path.q(last),
            "time_average": averages,
        }),
        artifacts: vec![Artifact::Csv("path.csv", path.to_csv())],
    })
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluidParams {
    q0: Vec<f64>,
    horizon: f64,
    #[serde(default = "default_tol")]
    tol: f64,
}

fn verification_lines(report: &mcqn::fluid::FluidVerification) -> Vec<String> {
    report
        .checks
        .iter()
        .map(|c| check_line(&c.name, c.passed, format!("max residual {:.1e}", c.max_residual)))
        .collect()
}

pub fn fluid(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: FluidParams = config.params()?;
    let f = fluid_spec(config.network()?)?;
    let traj = fluid_trajectory(&f, &p.q0, p.horizon).map_err(classify)?;
    let verification = verify_fluid_solution(&traj, &f, p.tol);
    let bound = lipschitz_bound(&f);
    let (worst_slope, lipschitz_ok) = lipschitz_check(&traj, bound);

    let mut summary = vec![match traj.emptying_time() {
        Some(t) => format!("empty at t={t:?}"),
        None => format!("not empty by t={:?}, |Q| = {:.6}", p.horizon, traj.norm_at(p.horizon)),
    }];
    summary.push(format!("{} breakpoints", traj.times.len()));
    summary.extend(verification_lines(&verification));
    summary.push(check_line(
        "Lipschitz bound",
        lipschitz_ok,
        format!("largest slope {worst_slope:.4} against {bound:.4}"),
    ));
    Ok(Outcome {
        passed: verification.passed && lipschitz_ok,
        summary,
        report: json!({
            "emptying_time": traj.emptying_time(),
            "breakpoints": traj.times.len(),
            "verification": verification,
            "lipschitz": { "bound": bound, "largest_slope": worst_slope, "passed": lipschitz_ok },
        }),
        artifacts: vec![
            Artifact::Csv("trajectory.csv", traj.to_csv(&f)),
            Artifact::Json("trajectory.json", serde_json::to_value(&traj).expect("serializes")),
        ],
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    trajectory: PathBuf,
    #[serde(default = "default_tol")]
    tol: f64,
}

pub fn verify(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: VerifyParams = config.params()?;
    let f = fluid_spec(config.network()?)?;
    let path = config.resolve(&p.trajectory);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let traj = FluidTrajectory::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if traj.num_classes() != f.num_classes() {
        return Err(CliError::Config(format!(
            "trajectory has {} classes, network {}",
            traj.num_classes(),
            f.num_classes()
        )));
    }
    let verification = verify_fluid_solution(&traj, &f, p.tol);
    let mut summary = vec![format!(
        "{} breakpoints on [0, {:?}], tolerance {:.1e}",
        traj.times.len(),
        traj.end_time(),
        p.tol
    )];
    summary.extend(verification_lines(&verification));
    let findings: Vec<String> = verification
        .failures()
        .iter()
        .map(|name| format!("{name} violated"))
        .collect();
    Ok(Outcome {
        passed: verification.passed,
        summary,
        report: json!({ "verification": verification, "findings": findings }),
        artifacts: vec![],
    })
}

fn default_t_max() -> f64 {
    3.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalingParams {
    q_dir: Vec<f64>,
    schedule: Vec<f64>,
    #[serde(default = "default_t_max")]
    t_max: f64,
    #[serde(default)]
    rule: Option<ResidualRule>,
    /// Turn "distances decrease along the schedule" into a pass/fail check.
    #[serde(default)]
    expect_decreasing: bool,
}

pub fn scaling(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: ScalingParams = config.params()?;
    let spec = config.network()?;
    let seed = config.require_seed()?;
    let seeds = config.replications.unwrap_or(100);
    let seq = make_scaling_sequence(spec, &p.q_dir, &p.schedule, p.rule.unwrap_or(ResidualRule::Fresh), seed)
        .map_err(classify)?;
    let table = convergence_experiment(spec, &seq, p.t_max, seeds, seed).map_err(classify)?;
    let mut summary: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "r = {:>10}: mean distance {:.5} [{:.5}, {:.5}] over {} seeds{}",
                r.r_n,
                r.mean_dist,
                r.ci_low,
                r.ci_high,
                r.seed_count,
                if r.truncated_runs > 0 {
                    format!(", {} truncated", r.truncated_runs)
                } else {
                    String::new()
                }
            )
        })
        .collect();
    summary.push(format!(
        "log-log slope {:.3}, strictly decreasing: {}",
        table.trend.log_log_slope, table.trend.strictly_decreasing
    ));
    let passed = !p.expect_decreasing || table.trend.strictly_decreasing;
    if p.expect_decreasing {
        summary.push(check_line("decreasing distances", passed, "expected by config".into()));
    }
    Ok(Outcome {
        passed,
        summary,
        report: json!({ "sequence": seq, "table": table }),
        artifacts: vec![Artifact::Csv("convergence.csv", table.to_csv())],
    })
}

/// A candidate inline or as a path to a candidate JSON file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CandidateRef {
    Path(PathBuf),
    Inline(Value),
}

fn load_candidate(config: &ExperimentConfig, r: &CandidateRef) -> Result<LyapunovCandidate, CliError> {
    let text = match r {
        CandidateRef::Inline(v) => v.to_string(),
        CandidateRef::Path(p) => {
            let path = config.resolve(p);
            std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
    };
    LyapunovCandidate::from_json(&text).map_err(classify)
}

fn default_directions() -> usize {
    20
}

fn default_radii() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0, 10.0, 100.0]
}

fn default_horizon() -> f64 {
    20.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovCheckParams {
    candidate: CandidateRef,
    #[serde(default = "default_directions")]
    directions: usize,
    #[serde(default = "default_radii")]
    radii: Vec<f64>,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "default_tol")]
    tol: f64,
}

pub fn lyapunov_check(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: LyapunovCheckParams = config.params()?;
    let f = fluid_spec(config.network()?)?;
    let seed = config.require_seed()?;
    let v = load_candidate(config, &p.candidate)?;
    if v.num_classes() != f.num_classes() {
        return Err(CliError::Config(
            "candidate and network differ in the number of classes".into(),
        ));
    }
    let dirs = random_unit_directions(f.num_classes(), p.directions, seed);
    let grid: Vec<Vec<f64>> = dirs
        .iter()
        .chain(&unit_directions(f.num_classes()))
        .flat_map(|d| p.radii.iter().map(move |r| d.iter().map(|x| x * r).collect()))
        .collect();
    let sandwich = sandwich_check(&v, &grid).map_err(classify)?;
    let mut drift = Vec::new();
    for d in &dirs {
        let traj = fluid_trajectory(&f, d, p.horizon).map_err(classify)?;
        drift.push(fluid_drift_check(&v, &v.w3, &traj, p.tol));
    }
    let drift_ok = drift.iter().all(|r| r.passed);
    let worst = drift.iter().map(|r| r.worst_slack).fold(f64::INFINITY, f64::min);
    let summary = vec![
        check_line(
            "sandwich bounds w1(|q|) <= V(q) <= w2(|q|)",
            sandwich.passed,
            format!(
                "{} points, margins {:.3e} / {:.3e}",
                sandwich.points, sandwich.lower_margin, sandwich.upper_margin
            ),
        ),
        check_line(
            "fluid drift V(Q(t)) - V(Q(s)) <= -int w3(|Q|)",
            drift_ok,
            format!("{} trajectories, worst slack {worst:.3e}", drift.len()),
        ),
    ];
    Ok(Outcome {
        passed: sandwich.passed && drift_ok,
        summary,
        report: json!({ "candidate": v, "sandwich": sandwich, "drift": drift }),
        artifacts: vec![],
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesizeParams {}

pub fn synthesize(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let _: SynthesizeParams = config.params()?;
    let f = fluid_spec(config.network()?)?;
    let outcome = synthesize_linear_certificate(&f).map_err(classify)?;
    let (passed, summary, artifacts) = match &outcome {
        CertificateOutcome::Feasible(c) => (
            true,
            vec![
                format!("certificate found: xi = {:?}, gamma = {:.6}", c.xi, c.gamma),
                format!(
                    "{} regime patterns, {} distinct drift vectors",
                    c.patterns, c.drift_vectors
                ),
            ],
            vec![Artifact::Json(
                "candidate.json",
                serde_json::to_value(&c.candidate).expect("serializes"),
            )],
        ),
        CertificateOutcome::Infeasible { best_gamma, reason } => (
            false,
            vec![format!("no linear certificate (best gamma {best_gamma:.3e}): {reason}")],
            vec![],
        ),
    };
    Ok(Outcome {
        passed,
        summary,
        report: json!({ "outcome": outcome }),
        artifacts,
    })
}

fn default_delta() -> f64 {
    0.1
}

fn default_steps() -> usize {
    10
}

fn default_levels() -> Vec<usize> {
    vec![2, 4, 8, 16, 32, 64]
}

fn default_return_horizon() -> f64 {
    1e5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FosterParams {
    candidate: CandidateRef,
    q0: Vec<usize>,
    #[serde(default)]
    c: Option<f64>,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(default = "default_levels")]
    calibration_levels: Vec<usize>,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "default_steps")]
    steps: usize,
    #[serde(default = "default_return_horizon")]
    return_horizon: f64,
}

pub fn foster(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: FosterParams = config.params()?;
    let spec = config.network()?;
    let seed = config.require_seed()?;
    let reps = config.replications();
    let v = load_candidate(config, &p.candidate)?;
    let x = initial_state(spec, Some(p.q0.clone()), seed)?;

    let mut summary = Vec::new();
    let calibration = if p.c.is_none() || p.epsilon.is_none() || p.kappa.is_none() {
        let total: usize = p.q0.iter().sum();
        if total == 0 {
            return Err(CliError::Config(
                "calibration needs a nonempty q0 to set the direction".into(),
            ));
        }
        let dir: Vec<f64> = p.q0.iter().map(|&n| n as f64 / total as f64).collect();
        let cal =
            calibrate(spec, &v, &dir, &p.calibration_levels, DEFAULT_CONTRACTION, reps, seed).map_err(classify)?;
        summary.push(format!(
            "calibrated c = {:.4}, epsilon = {:.3}, kappa = {:.4}",
            cal.c, cal.epsilon, cal.kappa
        ));
        Some(cal)
    } else {
        None
    };
    let pick = |given: Option<f64>, f: fn(&mcqn::lyapunov::Calibration) -> f64| {
        given.unwrap_or_else(|| f(calibration.as_ref().expect("calibrated")))
    };
    let c = pick(p.c, |cal| cal.c);
    let eps = pick(p.epsilon, |cal| cal.epsilon);
    let kappa = pick(p.kappa, |cal| cal.kappa);

    let drift = foster_drift_estimate(spec, &x, &v, c, reps, seed).map_err(classify)?;
    let martingale = supermartingale_probe(spec, &x, &v, c, eps, kappa, p.steps, reps, seed).map_err(classify)?;
    let ret = return_time_check(spec, &x, &v, eps, kappa, p.delta, reps, seed, p.return_horizon).map_err(classify)?;

    summary.push(format!(
        "W(x) = {:.4}; E[W(X(c W(x)))] / W(x) = {:.4} [{:.4}, {:.4}]",
        foster_w(&x, &v),
        drift.ratio.mean,
        drift.ratio.low,
        drift.ratio.high
    ));
    summary.push(check_line(
        "supermartingale E[M(min(n, N))] nonincreasing",
        martingale.nonincreasing,
        format!(
            "means {}",
            martingale
                .steps
                .iter()
                .map(|s| format!("{:.3}", s.mean.mean))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    ));
    let return_ok = ret.verdict != BoundVerdict::Violated;
    let detail = match &ret.estimate.estimate {
        Some(ci) => format!(
            "E[tau] {:.4} [{:.4}, {:.4}] vs bound {:.4}, {} of {} returned",
            ci.mean, ci.low, ci.high, ret.bound, ret.estimate.reached, ret.estimate.replications
        ),
        None => format!("no replication returned within {:?}", p.return_horizon),
    };
    summary.push(check_line(
        &format!("return-time bound ({:?})", ret.verdict).to_lowercase(),
        return_ok,
        detail,
    ));
    Ok(Outcome {
        passed: martingale.nonincreasing && return_ok,
        summary,
        report: json!({
            "calibration": calibration,
            "parameters": { "c": c, "epsilon": eps, "kappa": kappa, "delta": p.delta, "replications": reps },
            "drift": drift,
            "supermartingale": martingale,
            "return_time": ret,
        }),
        artifacts: vec![],
    })
}

fn default_tau_cap() -> f64 {
    100.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportParams {
    #[serde(default = "default_tau_cap")]
    tau_cap: f64,
}

pub fn report(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: ReportParams = config.params()?;
    let spec = config.network()?;
    let lambda = effective_arrival_rates(spec);
    let rho = traffic_intensity(spec);
    let radius = spectral_radius(spec.routing()).map_err(classify)?;
    let mut summary = vec![
        format!(
            "{} classes at {} stations, discipline {}",
            spec.num_classes(),
            spec.num_stations(),
            spec.discipline().name()
        ),
        format!("effective arrival rates {lambda:.4?}"),
        format!("traffic intensity {rho:.4?}, routing spectral radius {radius:.4}"),
    ];
    summary.extend(spec.warnings().iter().map(|w| format!("warning: {}", w.message)));
    let mut report = json!({
        "classes": spec.num_classes(),
        "stations": spec.num_stations(),
        "discipline": spec.discipline().name(),
        "effective_arrival_rates": lambda,
        "traffic_intensity": rho,
        "spectral_radius": radius,
        "warnings": spec.warnings(),
    });
    if matches!(spec.discipline(), Discipline::Fifo) {
        summary.push("fluid model not integrated for FIFO".into());
    } else {
        let f = fluid_spec(spec)?;
        let probe = stability_probe(&f, &unit_directions(f.num_classes()), p.tau_cap).map_err(classify)?;
        summary.push(match probe.verdict {
            StabilityVerdict::Stable { tau } => format!("fluid model stable, drains within {tau:?} |Q(0)|"),
            StabilityVerdict::Diverging { slope } => format!("fluid model diverging, late slope {slope:.4}"),
            StabilityVerdict::Inconclusive => "fluid stability inconclusive".into(),
        });
        report["stability"] = serde_json::to_value(&probe).expect("serializes");
        match synthesize_linear_certificate(&f) {
            Ok(out) => {
                summary.push(match &out {
                    CertificateOutcome::Feasible(c) => format!("linear certificate xi = {:?}", c.xi),
                    CertificateOutcome::Infeasible { .. } => "no linear certificate".into(),
                });
                report["certificate"] = serde_json::to_value(&out).expect("serializes");
            }
            Err(LyapunovError::EnumerationOverflow(k)) => {
                summary.push(format!("certificate search skipped for {k} classes"));
            }
            Err(e) => return Err(classify(e)),
        }
    }
    Ok(Outcome {
        passed: true,
        summary,
        report,
        artifacts: vec![],
    })
}
