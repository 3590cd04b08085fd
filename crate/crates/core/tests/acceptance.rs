//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are printed even
//! when everything passes; the exit status is nonzero if any criterion fails.

use std::ops::ControlFlow;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mcqn::fluid::{
    concatenate, fluid_trajectory, scale, shift, stability_probe, unit_directions, verify_fluid_solution, FluidSpec,
    FluidTrajectory, StabilityVerdict,
};
use mcqn::lyapunov::{
    calibrate, fluid_drift_check, foster_drift_estimate, foster_w, random_unit_directions, return_time_check,
    supermartingale_probe, synthesize_linear_certificate, BoundVerdict, Envelope, LyapunovCandidate,
};
use mcqn::network::traffic_intensity;
use mcqn::presets;
use mcqn::rng::replication_seed;
use mcqn::scaling::{convergence_experiment, make_scaling_sequence, ResidualRule};
use mcqn::sim::{checked_options, simulate, simulate_with, time_average_queue, Horizon, SimState, Simulator};
use mcqn::stats::{least_squares, MeanCi};
use mcqn::{validate_spec, Discipline, ValidatedSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fluid(spec: &ValidatedSpec) -> FluidSpec {
    FluidSpec::from_network(spec).expect("fluid projection")
}

fn q_squared() -> LyapunovCandidate {
    LyapunovCandidate::linear_squared(vec![1.0], Envelope::new(1.0, 1.0).unwrap()).unwrap()
}

fn stationary_mean() -> Outcome {
    let spec = presets::mm1();
    let rho = spec.alpha()[0] / spec.mu()[0];
    let oracle = rho / (1.0 - rho);
    let mut means = Vec::new();
    for s in 0..10 {
        let avg = time_average_queue(&spec, SimState::empty(&spec, s), Horizon::Events(1_000_000), 1000 + s)
            .map_err(|e| e.to_string())?;
        ensure(!avg.truncated, || format!("seed {s} truncated"))?;
        ensure((avg.total - oracle).abs() <= 0.05, || {
            format!("seed {s}: time average {:.4} vs {oracle}", avg.total)
        })?;
        means.push(avg.total);
    }
    let ci = MeanCi::from_samples(&means);
    ensure((ci.mean - oracle).abs() <= 0.05, || format!("mean {:.4}", ci.mean))?;
    Ok(format!(
        "mean over 10 seeds {:.4} (oracle {oracle}), per-seed range within 0.05",
        ci.mean
    ))
}

fn fluid_exactness() -> Outcome {
    let f = fluid(&presets::mm1());
    let traj = fluid_trajectory(&f, &[1.0], 10.0).map_err(|e| e.to_string())?;
    let empty = traj.emptying_time().ok_or("never empties")?;
    ensure((empty - 2.0).abs() <= 1e-9, || format!("empties at {empty}"))?;
    for i in 0..=100 {
        let t = i as f64 * 0.1;
        let exact = (1.0 - 0.5 * t).max(0.0);
        ensure((traj.q_at(t)[0] - exact).abs() <= 1e-9, || format!("Q({t}) off"))?;
    }
    let report = verify_fluid_solution(&traj, &f, 1e-9);
    ensure(report.passed, || format!("{:?}", report.failures()))?;
    let worst = report.checks.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    Ok(format!("empties at {empty}, largest residual {worst:.1e}"))
}

fn operator_invariance() -> Outcome {
    let mut checked = 0;
    for name in ["mm1", "tandem", "single_station_priority", "rybko_stolyar_stable"] {
        let f = fluid(&presets::preset(name).unwrap());
        let k = f.num_classes();
        let mut starts = unit_directions(k);
        starts.push(vec![1.0 / k as f64; k]);
        for q0 in starts {
            let traj = fluid_trajectory(&f, &q0, 20.0).map_err(|e| e.to_string())?;
            let mut verify = |label: String, t: &FluidTrajectory| {
                let r = verify_fluid_solution(t, &f, 1e-9);
                checked += 1;
                ensure(r.passed, || format!("{name} {q0:?} {label}: {:?}", r.failures()))
            };
            verify("original".into(), &traj)?;
            for r in [0.5, 2.0, 10.0] {
                verify(format!("scale {r}"), &scale(&traj, r).unwrap())?;
            }
            for &s in &traj.times {
                verify(format!("shift {s}"), &shift(&traj, s).unwrap())?;
                let tail = fluid_trajectory(&f, &traj.q_at(s), 10.0).map_err(|e| e.to_string())?;
                let joined = concatenate(&traj, &tail, s).map_err(|e| e.to_string())?;
                verify(format!("concatenate at {s}"), &joined)?;
            }
        }
    }
    Ok(format!("{checked} transformed trajectories verified at 1e-9"))
}

fn instability() -> Outcome {
    let spec = presets::rybko_stolyar_unstable();
    let rho = traffic_intensity(&spec);
    ensure(rho.iter().all(|&r| r < 1.0 && (r - 0.7).abs() < 1e-12), || {
        format!("rho {rho:?}")
    })?;
    let report = stability_probe(&fluid(&spec), &[vec![1.0, 0.0, 0.0, 0.0]], 100.0).map_err(|e| e.to_string())?;
    let slope = match report.verdict {
        StabilityVerdict::Diverging { slope } if slope > 0.0 => slope,
        v => return Err(format!("fluid verdict {v:?}")),
    };
    // simulated |q| sampled every 1000 events
    let x0 = SimState::with_queue_lengths(&spec, &[10_000, 0, 0, 0], 1);
    let mut sim = Simulator::new(&spec, x0, 42).map_err(|e| e.to_string())?;
    let (mut ts, mut ns) = (Vec::new(), Vec::new());
    let mut count = 0u64;
    sim.run(Horizon::Events(1_000_000), |seg| {
        if count.is_multiple_of(1000) {
            ts.push(seg.start);
            ns.push(seg.state.total_customers() as f64);
        }
        count += 1;
        ControlFlow::Continue(())
    })
    .map_err(|e| e.to_string())?;
    let fit = least_squares(&ts, &ns);
    ensure(fit.slope > 0.0 && fit.r_squared > 0.9, || {
        format!("simulated slope {:.4}, R^2 {:.3}", fit.slope, fit.r_squared)
    })?;
    Ok(format!(
        "rho = {rho:?}; fluid slope {slope:.4}; simulated slope {:.4} per unit time, R^2 {:.3}, |q| {} -> {}",
        fit.slope,
        fit.r_squared,
        ns[0],
        ns.last().unwrap()
    ))
}

fn stability_and_certificate() -> Outcome {
    let mut notes = Vec::new();
    for name in ["mm1", "tandem"] {
        let f = fluid(&presets::preset(name).unwrap());
        let k = f.num_classes();
        let report = stability_probe(&f, &unit_directions(k), 50.0).map_err(|e| e.to_string())?;
        match report.verdict {
            StabilityVerdict::Stable { tau } if (tau - 2.0).abs() <= 1e-9 => {}
            v => return Err(format!("{name}: {v:?}")),
        }
        let out = synthesize_linear_certificate(&f).map_err(|e| e.to_string())?;
        let cert = out.certificate().ok_or_else(|| format!("{name}: {out:?}"))?;
        let mut worst = f64::INFINITY;
        for d in random_unit_directions(k, 20, 2024) {
            let traj = fluid_trajectory(&f, &d, 20.0).map_err(|e| e.to_string())?;
            let r = fluid_drift_check(&cert.candidate, &cert.candidate.w3, &traj, 1e-9);
            ensure(r.worst_slack >= 0.0, || format!("{name} from {d:?}: {r:?}"))?;
            worst = worst.min(r.worst_slack);
        }
        notes.push(format!(
            "{name}: tau 2, xi {:?}, gamma {:.3}, min slack {worst:.2e}",
            cert.xi, cert.gamma
        ));
    }
    Ok(notes.join("; "))
}

fn scaling_convergence() -> Outcome {
    let spec = presets::mm1();
    let seq =
        make_scaling_sequence(&spec, &[1.0], &[1e2, 1e3, 1e4], ResidualRule::Fresh, 6).map_err(|e| e.to_string())?;
    let table = convergence_experiment(&spec, &seq, 3.0, 100, 6).map_err(|e| e.to_string())?;
    let means: Vec<f64> = table.rows.iter().map(|r| r.mean_dist).collect();
    ensure(table.trend.strictly_decreasing, || format!("means {means:?}"))?;
    ensure(*means.last().unwrap() < 0.05, || {
        format!("final mean {}", means.last().unwrap())
    })?;
    Ok(format!(
        "mean distances {:?}, log-log slope {:.2}",
        means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
        table.trend.log_log_slope
    ))
}

/// Independent estimate of `E[W(X(2 W(x)))] / W(x)` for `V = q^2`: plain
/// recorded paths, W read off the final record by hand.
fn drift_ratio_oracle(spec: &ValidatedSpec, x: &SimState, reps: u64) -> f64 {
    let w_x = x.total_customers() as f64 + x.u().iter().sum::<f64>() + x.v().iter().sum::<f64>();
    let horizon = 2.0 * w_x;
    let mut total = 0.0;
    for r in 0..reps {
        let path = simulate(spec, x.clone(), Horizon::Time(horizon), replication_seed(99, r)).unwrap();
        let last = path.len() - 1;
        let age = horizon - path.times[last];
        let u: f64 = path.u(last).iter().map(|&u| if u > 0.0 { u - age } else { 0.0 }).sum();
        let v: f64 = path.v(last).iter().zip(path.z(last)).map(|(v, z)| v - z * age).sum();
        total += path.total(last) as f64 + u + v;
    }
    total / reps as f64 / w_x
}

fn foster_drift() -> Outcome {
    let spec = presets::mm1();
    let v = q_squared();
    let x = SimState::with_queue_lengths(&spec, &[100], 7);
    let oracle = drift_ratio_oracle(&spec, &x, 10_000);
    ensure(oracle <= 0.6, || format!("oracle ratio {oracle}"))?;
    let est = foster_drift_estimate(&spec, &x, &v, 2.0, 1000, 11).map_err(|e| e.to_string())?;
    ensure(est.ratio.high <= 0.6, || format!("ratio CI {:?}", est.ratio))?;
    ensure((est.ratio.mean - oracle).abs() <= 3.0 * est.ratio.half_width, || {
        format!("estimate {} disagrees with oracle {oracle}", est.ratio.mean)
    })?;
    let cal = calibrate(&spec, &v, &[1.0], &[2, 4, 8, 16, 32, 64], 0.5, 1000, 12).map_err(|e| e.to_string())?;
    let probe =
        supermartingale_probe(&spec, &x, &v, cal.c, cal.epsilon, cal.kappa, 10, 1000, 13).map_err(|e| e.to_string())?;
    ensure(probe.nonincreasing, || format!("steps {:?}", probe.steps))?;
    let means: Vec<String> = probe.steps.iter().map(|s| format!("{:.1}", s.mean.mean)).collect();
    Ok(format!(
        "ratio {:.3} (CI high {:.3}, 10^4-run oracle {oracle:.3}); calibrated c {}, eps {}, kappa {:.2}; E[M] {}",
        est.ratio.mean,
        est.ratio.high,
        cal.c,
        cal.epsilon,
        cal.kappa,
        means.join(" ")
    ))
}

fn return_time() -> Outcome {
    let spec = presets::mm1();
    let v = q_squared();
    let cal = calibrate(&spec, &v, &[1.0], &[2, 4, 8, 16, 32, 64], 0.5, 1000, 12).map_err(|e| e.to_string())?;
    let x = SimState::with_queue_lengths(&spec, &[50], 8);
    let report =
        return_time_check(&spec, &x, &v, cal.epsilon, cal.kappa, 0.1, 1000, 14, 1e5).map_err(|e| e.to_string())?;
    let ci = report.estimate.estimate.ok_or("no replication returned")?;
    ensure(report.verdict == BoundVerdict::Respected, || {
        format!("{:?}: CI high {} vs bound {}", report.verdict, ci.high, report.bound)
    })?;
    Ok(format!(
        "W(x) {:.2}, kappa {:.2}, E[tau] {:.2} (CI high {:.2}) <= bound {:.2}",
        foster_w(&x, &v),
        cal.kappa,
        ci.mean,
        ci.high,
        report.bound
    ))
}

fn with_discipline(spec: &ValidatedSpec, d: &Discipline) -> ValidatedSpec {
    let mut raw = spec.raw().clone();
    raw.discipline = d.clone();
    validate_spec(raw).expect("valid variant")
}

fn invariant_suites() -> Outcome {
    let mut runs = 0;
    for spec in presets::all() {
        let k = spec.num_classes();
        // ranks by class index within each station
        let ranks: Vec<u32> = (0..k).map(|c| c as u32).collect();
        for d in [
            Discipline::Fifo,
            Discipline::StaticPriority { ranks },
            Discipline::Hlpps,
            Discipline::WorkConserving,
        ] {
            let variant = with_discipline(&spec, &d);
            let q0: Vec<usize> = (0..k).map(|c| 3 + c).collect();
            let x0 = SimState::with_queue_lengths(&variant, &q0, 5);
            let (a, _) = simulate_with(&variant, x0.clone(), Horizon::Events(100_000), 77, checked_options())
                .map_err(|e| format!("{} under {}: {e}", spec.raw().num_classes(), d.name()))?;
            let (b, _) = simulate_with(&variant, x0, Horizon::Events(100_000), 77, checked_options())
                .map_err(|e| e.to_string())?;
            ensure(a.num_events() == 100_000, || "short run".into())?;
            ensure(a.to_csv() == b.to_csv(), || format!("rerun differs under {}", d.name()))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} checked 10^5-event runs, byte-identical reruns"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("M/M/1 stationary mean", stationary_mean, Duration::from_secs(60)),
        ("fluid exactness", fluid_exactness, Duration::from_secs(1)),
        ("operator invariance", operator_invariance, Duration::from_secs(10)),
        ("instability counterexample", instability, Duration::from_secs(300)),
        (
            "stability and certificate",
            stability_and_certificate,
            Duration::from_secs(30),
        ),
        ("scaling convergence", scaling_convergence, Duration::from_secs(600)),
        ("Foster drift", foster_drift, Duration::from_secs(300)),
        ("return-time bound", return_time, Duration::from_secs(300)),
        ("invariant suites", invariant_suites, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.1?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("criterion {} [{name}]: PASS ({elapsed:.2?}) {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({elapsed:.2?}) {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
