use mcqn::error::FluidError;
use mcqn::fluid::{
    concatenate, fluid_trajectory, lipschitz_bound, lipschitz_check, scale, shift, verify_fluid_solution, FluidSpec,
};
use mcqn::{presets, validate_spec, Discipline};
use proptest::prelude::*;

const FLUID_PRESETS: [&str; 5] = [
    "mm1",
    "tandem",
    "single_station_priority",
    "rybko_stolyar_stable",
    "hlpps",
];

fn fluid(name: &str) -> FluidSpec {
    if name == "hlpps" {
        // the stable four-class network under head-of-line proportional sharing
        let mut raw = presets::rybko_stolyar_stable().raw().clone();
        raw.discipline = Discipline::Hlpps;
        return FluidSpec::from_network(&validate_spec(raw).unwrap()).unwrap();
    }
    FluidSpec::from_network(&presets::preset(name).unwrap()).unwrap()
}

fn start(k: usize, raw: &[f64]) -> Vec<f64> {
    let q: Vec<f64> = raw[..k].to_vec();
    let total: f64 = q.iter().sum();
    q.into_iter().map(|x| x / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transformed_trajectories_verify(
        which in 0..FLUID_PRESETS.len(),
        raw in prop::collection::vec(0.01f64..1.0, 4),
        r in prop::sample::select(vec![0.5, 2.0, 10.0]),
        cut in 0.0f64..1.0,
    ) {
        let f = fluid(FLUID_PRESETS[which]);
        let q0 = start(f.num_classes(), &raw);
        let traj = fluid_trajectory(&f, &q0, 15.0).unwrap();
        prop_assert!(verify_fluid_solution(&traj, &f, 1e-9).passed);
        prop_assert!(verify_fluid_solution(&scale(&traj, r).unwrap(), &f, 1e-9).passed);

        let b = traj.times[((traj.times.len() - 1) as f64 * cut) as usize];
        prop_assert!(verify_fluid_solution(&shift(&traj, b).unwrap(), &f, 1e-9).passed);
        let tail = fluid_trajectory(&f, &traj.q_at(b), 5.0).unwrap();
        let joined = concatenate(&traj, &tail, b).unwrap();
        prop_assert!(verify_fluid_solution(&joined, &f, 1e-9).passed);
        prop_assert!((joined.end_time() - (b + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn slopes_respect_the_lipschitz_bound(
        which in 0..FLUID_PRESETS.len(),
        raw in prop::collection::vec(0.01f64..1.0, 4),
        size in 0.1f64..50.0,
    ) {
        let f = fluid(FLUID_PRESETS[which]);
        let q0: Vec<f64> = start(f.num_classes(), &raw).into_iter().map(|x| x * size).collect();
        let traj = fluid_trajectory(&f, &q0, 4.0 * size).unwrap();
        let (worst, ok) = lipschitz_check(&traj, lipschitz_bound(&f));
        prop_assert!(ok, "slope {} above {}", worst, lipschitz_bound(&f));
    }

    #[test]
    fn drained_stable_networks_stay_empty(
        which in 0..FLUID_PRESETS.len(),
        raw in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        let f = fluid(FLUID_PRESETS[which]);
        let q0 = start(f.num_classes(), &raw);
        let traj = fluid_trajectory(&f, &q0, 50.0).unwrap();
        let tau = traj.emptying_time().expect("stable preset drains");
        for t in [tau, tau + 1.0, 49.0] {
            prop_assert!(traj.q_at(t).iter().all(|&x| x == 0.0));
        }
        let last = traj.num_segments() - 1;
        prop_assert!(traj.slope(last).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn workload_matches_queue_at_breakpoints(
        which in 0..FLUID_PRESETS.len(),
        raw in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        let f = fluid(FLUID_PRESETS[which]);
        let q0 = start(f.num_classes(), &raw);
        let traj = fluid_trajectory(&f, &q0, 10.0).unwrap();
        // hand oracle: W_j = sum over classes at j of Q_k / mu_k
        for (i, q) in traj.q.iter().enumerate() {
            for (j, w) in f.workload(q).into_iter().enumerate() {
                let hand: f64 = f.classes_at(j).iter().map(|&c| q[c] / f.mu[c]).sum();
                prop_assert!((w - hand).abs() <= 1e-9, "breakpoint {}", i);
            }
        }
    }
}

#[test]
fn mm1_lipschitz_example() {
    let f = fluid("mm1");
    assert_eq!(lipschitz_bound(&f), 1.5);
    let traj = fluid_trajectory(&f, &[1.0], 10.0).unwrap();
    let (worst, ok) = lipschitz_check(&traj, 1.5);
    assert!(ok);
    assert!((worst - 0.5).abs() < 1e-12);
}

#[test]
fn fifo_is_not_integrated() {
    let mut raw = presets::tandem().raw().clone();
    raw.discipline = Discipline::Fifo;
    let spec = validate_spec(raw).unwrap();
    assert!(matches!(
        FluidSpec::from_network(&spec),
        Err(FluidError::UnsupportedDiscipline(_))
    ));
}

#[test]
fn concatenation_reproduces_mm1_solution() {
    let f = fluid("mm1");
    let whole = fluid_trajectory(&f, &[1.0], 2.0).unwrap();
    let head = fluid_trajectory(&f, &[1.0], 1.0).unwrap();
    let tail = fluid_trajectory(&f, &[0.5], 1.0).unwrap();
    let joined = concatenate(&head, &tail, 1.0).unwrap();
    for i in 0..=40 {
        let t = i as f64 * 0.05;
        assert!((joined.q_at(t)[0] - whole.q_at(t)[0]).abs() < 1e-12);
    }
    let off = fluid_trajectory(&f, &[0.6], 1.0).unwrap();
    assert!(matches!(
        concatenate(&head, &off, 1.0),
        Err(FluidError::EndpointMismatch(_))
    ));
}
