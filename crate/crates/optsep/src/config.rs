//! Run configuration: JSON schema, `--set key=value` overrides, resolved
//! snapshots, and the run-directory manifest. The resolved snapshot plus
//! single-threaded mode reproduces a run bit for bit.

use crate::approx::{Activation, Architecture};
use crate::envs::{Env, FourRooms, PointMass};
use crate::optioncritic::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown environment '{0}' (expected 'four_rooms' or 'point_mass')")]
    UnknownEnv(String),
    #[error("bad override '{0}' (expected key=value)")]
    BadOverride(String),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// "four_rooms" or "point_mass".
    pub name: String,
    pub max_episode_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "four_rooms".to_string(),
            max_episode_steps: 500,
        }
    }
}

/// Full run description. Unknown keys are rejected on parse; training
/// defaults follow the discrete-action recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    /// Episodes rolled out by `eval` and by the distance/latent analyses.
    pub eval_episodes: usize,
    pub histogram_bins: usize,
    pub curve_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            hidden: vec![64, 64],
            eval_episodes: 20,
            histogram_bins: 20,
            curve_window: 200,
        }
    }
}

impl RunConfig {
    /// Point-mass recipe: continuous-action learning rate and entropy
    /// coefficient, shorter episodes.
    pub fn point_mass_defaults() -> Self {
        Self {
            env: EnvConfig {
                name: "point_mass".to_string(),
                max_episode_steps: 200,
            },
            train: TrainConfig::continuous_defaults(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The fully-resolved snapshot, all defaults materialized.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Dotted keys address nested fields
    /// ("train.lr", "env.name"); bare keys that name a training field
    /// resolve into `train.` for convenience. Values parse as JSON first
    /// and fall back to strings.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        let mut value = serde_json::to_value(&*self)?;
        let train_keys: Vec<String> = value["train"]
            .as_object()
            .expect("train is an object")
            .keys()
            .cloned()
            .collect();
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(ov.clone()))?;
            let path: Vec<&str> = if key.contains('.') {
                key.split('.').collect()
            } else if train_keys.iter().any(|k| k == key) {
                vec!["train", key]
            } else if value.get(key).is_some() {
                vec![key]
            } else {
                return Err(ConfigError::UnknownKey(key.to_string()));
            };
            let parsed: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let (last, parents) = path.split_last().expect("path is nonempty");
            let mut slot = &mut value;
            for seg in parents {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(*seg))
                    .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            }
            let obj = slot
                .as_object_mut()
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            if !obj.contains_key(*last) {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            obj.insert(last.to_string(), parsed);
        }
        *self = serde_json::from_value(value)?;
        Ok(())
    }

    pub fn make_env(&self) -> Result<Box<dyn Env>, ConfigError> {
        match self.env.name.as_str() {
            "four_rooms" => Ok(Box::new(FourRooms::new(self.env.max_episode_steps))),
            "point_mass" => Ok(Box::new(PointMass::new(self.env.max_episode_steps))),
            other => Err(ConfigError::UnknownEnv(other.to_string())),
        }
    }

    pub fn architecture(&self) -> Result<Architecture, ConfigError> {
        let spec = self.make_env()?.spec();
        Ok(Architecture {
            input_dim: spec.observation_dim,
            hidden: self.hidden.clone(),
            activation: Activation::Tanh,
            num_options: self.train.num_options,
            action_spec: spec.action_spec,
        })
    }

    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json_pretty().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Run-directory manifest. No timestamps: re-runs must be byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Manifest {
    pub fn for_config(cfg: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.train.seed,
            config_sha256: cfg.sha256_hex(),
        }
    }
}
