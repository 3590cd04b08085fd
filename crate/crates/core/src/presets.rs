//! Built-in networks.

use crate::error::SpecError;
use crate::network::{validate_spec, Discipline, NetworkSpec, ValidatedSpec};

pub const PRESET_NAMES: [&str; 5] = [
    "mm1",
    "tandem",
    "rybko_stolyar_stable",
    "rybko_stolyar_unstable",
    "single_station_priority",
];

pub fn preset(name: &str) -> Result<ValidatedSpec, SpecError> {
    match name {
        "mm1" => Ok(mm1()),
        "tandem" => Ok(tandem()),
        "rybko_stolyar_stable" => Ok(rybko_stolyar_stable()),
        "rybko_stolyar_unstable" => Ok(rybko_stolyar_unstable()),
        "single_station_priority" => Ok(single_station_priority()),
        other => Err(SpecError::UnknownPreset(other.to_string())),
    }
}

pub fn all() -> Vec<ValidatedSpec> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n).expect("preset names are known"))
        .collect()
}

fn build(raw: NetworkSpec) -> ValidatedSpec {
    validate_spec(raw).expect("presets are valid")
}

/// Single M/M/1 queue with load 0.5.
pub fn mm1() -> ValidatedSpec {
    build(NetworkSpec::exponential(
        &[0],
        vec![0.5],
        vec![1.0],
        vec![vec![0.0]],
        Discipline::WorkConserving,
    ))
}

/// Two exponential stations in series, arrival rate 0.5, unit service rates.
pub fn tandem() -> ValidatedSpec {
    build(NetworkSpec::exponential(
        &[0, 1],
        vec![0.5, 0.0],
        vec![1.0, 1.0],
        vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        Discipline::WorkConserving,
    ))
}

/// Two-station, four-class network with two routes `1 -> 2` and `3 -> 4`.
/// Station 1 serves classes 1 and 4 with priority to 4, station 2 serves
/// classes 2 and 3 with priority to 2.
fn rybko_stolyar(mean_service: [f64; 4]) -> ValidatedSpec {
    build(NetworkSpec::exponential(
        &[0, 1, 1, 0],
        vec![1.0, 0.0, 1.0, 0.0],
        mean_service.iter().map(|m| 1.0 / m).collect(),
        vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ],
        Discipline::StaticPriority {
            ranks: vec![1, 0, 1, 0],
        },
    ))
}

/// Mean services (0.1, 0.6, 0.1, 0.6): load 0.7 at both stations, yet the
/// two high-priority classes together need 1.2 units of capacity per unit
/// time and the network is unstable.
pub fn rybko_stolyar_unstable() -> ValidatedSpec {
    rybko_stolyar([0.1, 0.6, 0.1, 0.6])
}

/// Mean services (0.1, 0.3, 0.1, 0.3): load 0.4 at both stations.
pub fn rybko_stolyar_stable() -> ValidatedSpec {
    rybko_stolyar([0.1, 0.3, 0.1, 0.3])
}

/// Re-entrant line at a single station: class 1 (rate 0.4 arrivals, mean
/// service 1) feeds class 2 (mean service 0.5), which has preemptive
/// priority. Load 0.6.
pub fn single_station_priority() -> ValidatedSpec {
    build(NetworkSpec::exponential(
        &[0, 0],
        vec![0.4, 0.0],
        vec![1.0, 2.0],
        vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        Discipline::StaticPriority { ranks: vec![1, 0] },
    ))
}
