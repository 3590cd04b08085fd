use mcqn::netfile::{network_to_json, parse_network};
use mcqn::presets;
use mcqn::sim::{
    checked_options, estimate_return_time, occupation_fraction, simulate, simulate_with, Horizon, PredicateSet,
    SimState,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_hold_after_every_event(
        which in 0..presets::PRESET_NAMES.len(),
        q in prop::collection::vec(0usize..20, 4),
        seed in any::<u64>(),
    ) {
        let spec = presets::preset(presets::PRESET_NAMES[which]).unwrap();
        let x0 = SimState::with_queue_lengths(&spec, &q[..spec.num_classes()], seed);
        let (path, summary) = simulate_with(&spec, x0, Horizon::Events(2000), seed, checked_options()).unwrap();
        prop_assert_eq!(summary.events, 2000);
        prop_assert!(path.times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn same_seed_same_path(which in 0..presets::PRESET_NAMES.len(), seed in any::<u64>()) {
        let spec = presets::preset(presets::PRESET_NAMES[which]).unwrap();
        let x0 = SimState::with_queue_lengths(&spec, &vec![2; spec.num_classes()], seed);
        let a = simulate(&spec, x0.clone(), Horizon::Events(500), seed).unwrap();
        let b = simulate(&spec, x0, Horizon::Events(500), seed).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
    }
}

#[test]
fn no_arrivals_no_events() {
    let mut raw = presets::mm1().raw().clone();
    raw.arrival_rates = vec![0.0];
    raw.arrival_distributions = vec![None];
    let spec = mcqn::validate_spec(raw).unwrap();
    let path = simulate(&spec, SimState::empty(&spec, 0), Horizon::Time(100.0), 0).unwrap();
    assert_eq!(path.num_events(), 0);
    assert!((0..path.len()).all(|i| path.total(i) == 0));
}

#[test]
fn busy_period_from_ten_customers() {
    // oracle: mean drain time q0 / (mu - alpha) = 10 / 0.5
    let spec = presets::mm1();
    let x0 = SimState::with_queue_lengths(&spec, &[10], 3);
    let est = estimate_return_time(&spec, &PredicateSet::Empty, &x0, 0.0, 1000, 17, Horizon::Time(1e5)).unwrap();
    assert_eq!(est.not_reached, 0);
    let mean = est.estimate.unwrap().mean;
    assert!((mean - 20.0).abs() <= 2.0, "{mean}");
}

#[test]
fn idle_fraction_is_one_minus_load() {
    let spec = presets::mm1();
    let path = simulate(&spec, SimState::empty(&spec, 4), Horizon::Time(1e5), 4).unwrap();
    let idle = occupation_fraction(&path, &PredicateSet::Empty);
    assert!((idle - 0.5).abs() <= 0.02, "{idle}");
}

#[test]
fn unstable_network_rarely_returns() {
    let spec = presets::rybko_stolyar_unstable();
    let x0 = SimState::with_queue_lengths(&spec, &[200, 0, 200, 0], 5);
    let est = estimate_return_time(
        &spec,
        &PredicateSet::NormAtMost(1.0),
        &x0,
        0.0,
        50,
        8,
        Horizon::Time(2000.0),
    )
    .unwrap();
    assert!(
        est.not_reached > est.replications / 2,
        "{} of {}",
        est.not_reached,
        est.replications
    );
}

#[test]
fn network_files_round_trip() {
    for spec in presets::all() {
        let back = parse_network(&network_to_json(&spec)).unwrap();
        assert_eq!(back.raw(), spec.raw());
    }
}
