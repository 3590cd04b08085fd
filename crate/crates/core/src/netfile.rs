//! JSON network description.
//!
//! ```json
//! {
//!   "classes": [
//!     {"id": 1, "station": 1,
//!      "arrival": {"family": "exponential", "params": {"rate": 1.0}},
//!      "service": {"family": "exponential", "params": {"rate": 10.0}},
//!      "route": [{"to": 2, "prob": 1.0}]}
//!   ],
//!   "discipline": {"kind": "static_priority", "ranks": [1]}
//! }
//! ```
//!
//! Rates are the reciprocals of the distribution means. Route mass missing
//! from a row is the probability of leaving the network. Station labels are
//! arbitrary integers; stations are indexed in ascending label order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SpecError;
use crate::network::{validate_spec, Discipline, Distribution, NetworkSpec, ValidatedSpec};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassId {
    Num(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub to: ClassId,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub station: u64,
    #[serde(default)]
    pub arrival: Option<Distribution>,
    pub service: Distribution,
    #[serde(default)]
    pub route: Vec<RouteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub classes: Vec<ClassEntry>,
    pub discipline: Discipline,
}

impl NetworkFile {
    pub fn into_spec(self) -> Result<NetworkSpec, SpecError> {
        let k = self.classes.len();
        let mut index = BTreeMap::new();
        for (i, c) in self.classes.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(SpecError::Format(format!("duplicate class id {:?}", c.id)));
            }
        }
        let labels: Vec<u64> = {
            let mut l: Vec<u64> = self.classes.iter().map(|c| c.station).collect();
            l.sort_unstable();
            l.dedup();
            l
        };
        let mut constituency = vec![vec![0u8; k]; labels.len()];
        let mut routing = vec![vec![0.0; k]; k];
        for (i, c) in self.classes.iter().enumerate() {
            let s = labels.binary_search(&c.station).expect("label collected above");
            constituency[s][i] = 1;
            for r in &c.route {
                let to = *index
                    .get(&r.to)
                    .ok_or_else(|| SpecError::Format(format!("route to unknown class {:?}", r.to)))?;
                routing[i][to] += r.prob;
            }
        }
        Ok(NetworkSpec {
            constituency,
            arrival_rates: self
                .classes
                .iter()
                .map(|c| c.arrival.as_ref().map_or(0.0, |d| 1.0 / d.mean()))
                .collect(),
            service_rates: self.classes.iter().map(|c| 1.0 / c.service.mean()).collect(),
            routing,
            discipline: self.discipline,
            arrival_distributions: self.classes.iter().map(|c| c.arrival.clone()).collect(),
            service_distributions: self.classes.iter().map(|c| c.service.clone()).collect(),
        })
    }

    /// Classes are labelled `1..=K` and stations `1..=J`.
    pub fn from_spec(spec: &ValidatedSpec) -> Self {
        let raw = spec.raw();
        let classes = (0..spec.num_classes())
            .map(|k| ClassEntry {
                id: ClassId::Num(k as u64 + 1),
                station: spec.station_of(k) as u64 + 1,
                arrival: raw.arrival_distributions[k].clone(),
                service: raw.service_distributions[k].clone(),
                route: raw.routing[k]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(l, &p)| RouteEntry {
                        to: ClassId::Num(l as u64 + 1),
                        prob: p,
                    })
                    .collect(),
            })
            .collect();
        NetworkFile {
            classes,
            discipline: raw.discipline.clone(),
        }
    }
}

pub fn parse_network(json: &str) -> Result<ValidatedSpec, SpecError> {
    let file: NetworkFile = serde_json::from_str(json).map_err(|e| SpecError::Format(e.to_string()))?;
    validate_spec(file.into_spec()?)
}

pub fn network_to_json(spec: &ValidatedSpec) -> String {
    serde_json::to_string_pretty(&NetworkFile::from_spec(spec)).expect("network file serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn parses_documented_example() {
        let json = r#"{
            "classes": [
                {"id": "a", "station": 7,
                 "arrival": {"family": "exponential", "params": {"rate": 0.5}},
                 "service": {"family": "exponential", "params": {"rate": 1.0}},
                 "route": [{"to": "b", "prob": 1.0}]},
                {"id": "b", "station": 9, "arrival": null,
                 "service": {"family": "gamma", "params": {"shape": 2.0, "scale": 0.5}}}
            ],
            "discipline": {"kind": "hlpps"}
        }"#;
        let spec = parse_network(json).unwrap();
        assert_eq!(spec.num_classes(), 2);
        assert_eq!(spec.num_stations(), 2);
        assert_eq!(spec.routing()[0], vec![0.0, 1.0]);
        assert_eq!(spec.alpha(), &[0.5, 0.0]);
        assert_eq!(spec.mu(), &[1.0, 1.0]);
        assert_eq!(spec.station_map(), &[0, 1]);
    }

    #[test]
    fn presets_survive_a_file_round_trip() {
        for spec in presets::all() {
            let json = network_to_json(&spec);
            let back = parse_network(&json).unwrap();
            assert_eq!(back.station_map(), spec.station_map());
            assert_eq!(back.routing(), spec.routing());
            assert_eq!(back.discipline(), spec.discipline());
            for (a, b) in back.mu().iter().zip(spec.mu()) {
                assert!((a - b).abs() < 1e-12 * b);
            }
        }
    }

    #[test]
    fn unknown_route_target_is_an_error() {
        let json = r#"{"classes": [{"id": 1, "station": 1,
            "service": {"family": "deterministic", "params": {"value": 1.0}},
            "route": [{"to": 5, "prob": 0.5}]}],
            "discipline": {"kind": "fifo"}}"#;
        assert!(matches!(parse_network(json), Err(SpecError::Format(_))));
    }
}
