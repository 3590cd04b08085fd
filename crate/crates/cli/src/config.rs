//! Experiment configuration: one flat JSON object per invocation.
//!
//! The network is given by exactly one of `preset`, `network` (inline network
//! file) or `network_file` (path relative to the config). `seed` and
//! `replications` are shared by every command; all other keys belong to the
//! command and unknown ones are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use mcqn::netfile::{parse_network, NetworkFile};
use mcqn::network::{validate_spec, ValidatedSpec};
use mcqn::presets;

use crate::CliError;

const SHARED_KEYS: [&str; 5] = ["preset", "network", "network_file", "seed", "replications"];

pub const DEFAULT_REPLICATIONS: usize = 1000;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Directory relative paths in the config resolve against.
    pub base: PathBuf,
    pub network: Option<ValidatedSpec>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    params: Map<String, Value>,
    /// Hex SHA-256 of the effective config (file plus command-line overrides).
    pub hash: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, overrides).map_err(|e| match e {
            CliError::Config(m) => config_err(path, m),
            other => other,
        })
    }

    pub fn parse(text: &str, base: PathBuf, overrides: Overrides) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        if let Some(seed) = overrides.seed {
            map.insert("seed".into(), seed.into());
        }
        if let Some(n) = overrides.replications {
            map.insert("replications".into(), n.into());
        }
        // serde_json maps are sorted, so this is canonical
        let hash = Sha256::digest(serde_json::to_vec(&map).expect("json serializes"))
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();

        let seed = match map.get("seed") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or("seed must be a nonnegative integer").map_err(cfg)?),
        };
        let replications = match map.get("replications") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64() {
                Some(n) if n >= 2 => Some(n as usize),
                _ => return Err(cfg("replications must be an integer of at least 2")),
            },
        };
        let network = load_network(&map, &base)?;
        for key in SHARED_KEYS {
            map.remove(key);
        }
        Ok(ExperimentConfig {
            base,
            network,
            seed,
            replications,
            params: map,
            hash,
        })
    }

    pub fn network(&self) -> Result<&ValidatedSpec, CliError> {
        self.network
            .as_ref()
            .ok_or_else(|| cfg("a network is required: set `preset`, `network` or `network_file`"))
    }

    /// Stochastic commands refuse to pick a seed themselves.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| cfg("a seed is required: set `seed` or pass --seed"))
    }

    pub fn replications(&self) -> usize {
        self.replications.unwrap_or(DEFAULT_REPLICATIONS)
    }

    /// Command parameters; unknown keys are errors.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(Value::Object(self.params.clone())).map_err(|e| cfg(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn load_network(map: &Map<String, Value>, base: &Path) -> Result<Option<ValidatedSpec>, CliError> {
    let given: Vec<&str> = ["preset", "network", "network_file"]
        .into_iter()
        .filter(|k| map.get(*k).is_some_and(|v| !v.is_null()))
        .collect();
    if given.len() > 1 {
        return Err(cfg(format!("give only one of {}", given.join(", "))));
    }
    let spec = match given.first().copied() {
        None => return Ok(None),
        Some("preset") => {
            let name = map["preset"].as_str().ok_or_else(|| cfg("preset must be a string"))?;
            presets::preset(name).map_err(|e| cfg(e.to_string()))?
        }
        Some("network") => {
            let file: NetworkFile =
                serde_json::from_value(map["network"].clone()).map_err(|e| cfg(format!("network: {e}")))?;
            let raw = file.into_spec().map_err(|e| cfg(e.to_string()))?;
            validate_spec(raw).map_err(|e| cfg(e.to_string()))?
        }
        Some(_) => {
            let rel = map["network_file"]
                .as_str()
                .ok_or_else(|| cfg("network_file must be a path"))?;
            let path = base.join(rel);
            let text = std::fs::read_to_string(&path).map_err(|e| config_err(&path, e))?;
            parse_network(&text).map_err(|e| config_err(&path, e))?
        }
    };
    Ok(Some(spec))
}

/// Provenance stamped into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub version: &'static str,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Provenance {
            config_sha256: config.hash.clone(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn comment(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# mcqn {} config_sha256={} seed={seed}",
            self.version, self.config_sha256
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::parse(text, PathBuf::new(), Overrides::default())
    }

    #[test]
    fn shared_keys_are_split_off() {
        let c = parse(r#"{"preset": "mm1", "seed": 3, "q0": [1], "horizon": 10}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.network().unwrap().num_classes(), 1);
        assert_eq!(c.params.len(), 2);
    }

    #[test]
    fn overrides_change_the_hash() {
        let text = r#"{"preset": "mm1", "seed": 3}"#;
        let a = parse(text).unwrap();
        let b = ExperimentConfig::parse(
            text,
            PathBuf::new(),
            Overrides {
                seed: Some(4),
                replications: None,
            },
        )
        .unwrap();
        assert_eq!(b.seed, Some(4));
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, parse(r#"{"seed": 3, "preset": "mm1"}"#).unwrap().hash);
    }

    #[test]
    fn bad_configs() {
        assert!(matches!(parse("[1]"), Err(CliError::Config(_))));
        assert!(matches!(parse(r#"{"preset": "nope"}"#), Err(CliError::Config(_))));
        assert!(matches!(
            parse(r#"{"preset": "mm1", "network_file": "x"}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(parse(r#"{"seed": -1}"#), Err(CliError::Config(_))));
        assert!(matches!(parse(r#"{"replications": 1}"#), Err(CliError::Config(_))));
        assert!(parse("{}").unwrap().require_seed().is_err());
    }
}
