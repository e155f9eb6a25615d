//! Run configuration: a TOML file with a `schema_version`, overridden by
//! command-line flags, and snapshotted next to every output as canonical
//! JSON (sorted keys).

use std::path::{Path, PathBuf};

use almdp::alm::AlmConfig;
use almdp::baseline::FirstOrderConfig;
use almdp::data::TeacherConfig;
use almdp::{Activation, NetworkSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Seeds data generation, initialization and shuffling; the `seed`
    /// fields of `[data]` and `[baseline]` are overwritten with it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: TeacherConfig,
    pub network: NetworkConfig,
    pub alm: AlmConfig,
    pub baseline: FirstOrderConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: TeacherConfig::default(),
            network: NetworkConfig::default(),
            alm: AlmConfig::default(),
            baseline: FirstOrderConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

/// Student architecture; input and output widths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub weight_reg: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![20, 5],
            hidden_activation: Activation::Softplus,
            output_activation: Activation::Identity,
            weight_reg: 0.1,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input_dim: usize, output_dim: usize, samples: usize) -> Result<NetworkSpec, CliError> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(output_dim);
        Ok(NetworkSpec::with_output_activation(
            dims,
            self.hidden_activation,
            self.output_activation,
            samples,
            self.weight_reg,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub input_dims: Vec<usize>,
    pub noise_levels: Vec<f64>,
    pub samples: usize,
    pub repetitions: usize,
    /// Worker threads; cells run in parallel, each solver single-threaded.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            input_dims: vec![5, 10],
            noise_levels: vec![0.0, 0.2],
            samples: 100,
            repetitions: 3,
            workers: 1,
        }
    }
}

impl RunConfig {
    /// Defaults, or the given file on top of them.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Propagates the seed and checks every section.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.data.seed = self.seed;
        self.baseline.seed = self.seed;
        self.data.validate()?;
        self.alm.validate()?;
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(CliError::Config(format!("network.hidden must be nonempty and positive, got {:?}", self.network.hidden)));
        }
        if !(self.network.weight_reg > 0.0) {
            return Err(CliError::Config(format!("network.weight_reg must be positive, got {}", self.network.weight_reg)));
        }
        let b = &self.benchmark;
        if b.input_dims.is_empty() || b.noise_levels.is_empty() || b.samples == 0 || b.repetitions == 0 || b.workers == 0 {
            return Err(CliError::Config("benchmark grid, samples, repetitions and workers must be nonempty/positive".into()));
        }
        Ok(self)
    }

    pub fn snapshot(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("config serializes"))
    }
}

/// Pretty JSON with object keys sorted, newline-terminated.
pub fn canonical_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&sorted(v)).expect("value serializes");
    s.push('\n');
    s
}

fn sorted(v: &Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = serde_json::Map::new();
            for k in keys {
                out.insert(k.clone(), sorted(&map[k]));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::parse(
            "schema_version = 1\nseed = 9\n[alm]\neps = 1e-7\nbeta0 = 0.5\n[network]\nhidden = [8, 4]\nhidden_activation = \"tanh\"\n",
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(cfg.alm.eps, 1e-7);
        assert_eq!(cfg.alm.beta0, Some(0.5));
        assert_eq!(cfg.alm.gamma, 0.5);
        assert_eq!(cfg.network.hidden, vec![8, 4]);
        assert_eq!(cfg.network.hidden_activation, Activation::Tanh);
        assert_eq!(cfg.data.seed, 9);
        assert_eq!(cfg.baseline.seed, 9);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(RunConfig::parse("bogus = 1\n").is_err());
        assert!(RunConfig::parse("[alm]\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("schema_version = 2\n").is_err());
        assert!(RunConfig::parse("[network]\nhidden_activation = \"relu\"\n").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let cfg = RunConfig::parse("[alm]\ngamma = 1.5\n").unwrap();
        assert!(matches!(cfg.resolve(), Err(CliError::Config(_))));
    }

    #[test]
    fn snapshot_is_sorted_and_stable() {
        let snap = RunConfig::default().snapshot();
        assert_eq!(snap, RunConfig::default().snapshot());
        let v: Value = serde_json::from_str(&snap).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut sorted_keys = keys.clone();
        sorted_keys.sort();
        assert_eq!(keys, sorted_keys);
        assert!(snap.find("\"alm\"").unwrap() < snap.find("\"baseline\"").unwrap());
    }
}
