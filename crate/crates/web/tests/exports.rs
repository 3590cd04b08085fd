use mcqn_web::{fluid_path, preset_list, simulate_path, stability, MAX_POINTS};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn lists_every_preset() {
    let list = parse(&preset_list());
    assert_eq!(list.as_array().unwrap().len(), 5);
    assert_eq!(list[0]["name"], "mm1");
}

#[test]
fn mm1_fluid_drains_at_two() {
    let v = parse(&fluid_path("mm1", "[1]", 10.0).unwrap());
    assert_eq!(v["emptying_time"], 2.0);
    assert_eq!(v["verified"], true);
    assert!(fluid_path("mm1", "[1, 2]", 10.0).is_err());
    assert!(fluid_path("nope", "[1]", 10.0).is_err());
}

#[test]
fn simulated_path_is_thinned_and_reproducible() {
    let a = simulate_path("tandem", "[5, 0]", 100_000, 3).unwrap();
    assert_eq!(a, simulate_path("tandem", "[5, 0]", 100_000, 3).unwrap());
    let v = parse(&a);
    assert_eq!(v["events"], 100_000);
    assert!(v["times"].as_array().unwrap().len() <= MAX_POINTS + 2);
}

#[test]
fn stability_verdicts() {
    let v = parse(&stability("rybko_stolyar_unstable", 100.0).unwrap());
    assert!(v["verdict"].as_str().unwrap().starts_with("diverging"));
    assert_eq!(v["certificate"]["found"], false);
    let v = parse(&stability("tandem", 100.0).unwrap());
    assert!(v["verdict"].as_str().unwrap().starts_with("stable"));
    assert_eq!(v["certificate"]["found"], true);
}
