//! Experiment configuration: a flat `key = value` file with dotted section
//! keys (a TOML subset), e.g. `oracle.feedback_quality = 0.75`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::ExperimentError;
use crate::envs::{EnvId, GridConfig};
use crate::eval::EVAL_SEEDS;
use crate::oracle::OracleConfig;
use crate::tamer::{TrainerConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "one")]
    pub feedback_frequency: f64,
    #[serde(default = "one")]
    pub feedback_quality: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            feedback_frequency: 1.0,
            feedback_quality: 1.0,
        }
    }
}

/// Trainer overrides; anything left out takes the environment default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub episodes: Option<usize>,
    pub max_steps: Option<u32>,
    pub buffer_capacity: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub replay_interval: Option<u64>,
    pub learning_rate: Option<f64>,
    pub trunk_hidden: Option<Vec<usize>>,
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint_interval: Option<u64>,
    /// Checkpoint grid length in env steps.
    pub horizon: Option<u64>,
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub view_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    /// Variant whose counterfactual form the session accepts.
    #[serde(default = "default_serve_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub feedback_timeout_ms: u64,
    /// Evaluation reports are sent every this many env steps; 0 disables them.
    #[serde(default)]
    pub eval_interval: u64,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
}

fn default_serve_variant() -> Variant {
    Variant::Cfa
}

fn default_timeout() -> u64 {
    10_000
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("sessions")
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            variant: default_serve_variant(),
            seed: 0,
            feedback_timeout_ms: default_timeout(),
            eval_interval: 0,
            data_dir: default_data_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub variants: Vec<Variant>,
    pub seeds: SeedSpec,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub serve: ServeSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Independent seeds for the parts of one (variant, seed) cell. The trainer
/// seed is the cell seed itself, so variants sharing a seed start from the
/// same network and the same episode sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub trainer: u64,
    pub oracle: u64,
    pub bank: u64,
}

pub fn cell_seeds(seed: u64) -> CellSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    CellSeeds {
        trainer: seed,
        oracle: rng.gen(),
        bank: rng.gen(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.variants.is_empty() {
            return bad("variants must not be empty".into());
        }
        if self.variants.iter().collect::<BTreeSet<_>>().len() != self.variants.len() {
            return bad("variants must be distinct".into());
        }
        let seeds = self.seeds.seeds();
        if seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.eval.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return bad("eval.seeds must not be empty".into());
        }
        self.oracle_config(self.variants[0], 0)
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.env == EnvId::GridWorld {
            let g = self.grid_config();
            if g.width < 3 || g.height < 3 || g.view_size == 0 || g.view_size % 2 == 0 {
                return bad("grid needs width, height >= 3 and an odd view_size".into());
            }
        }
        self.trainer_config(self.variants[0], 0)
            .validate()
            .map_err(ExperimentError::Config)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.seeds()
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        self.eval.seeds.clone().unwrap_or_else(|| EVAL_SEEDS.to_vec())
    }

    pub fn grid_config(&self) -> GridConfig {
        let d = GridConfig::default();
        GridConfig {
            width: self.grid.width.unwrap_or(d.width),
            height: self.grid.height.unwrap_or(d.height),
            view_size: self.grid.view_size.unwrap_or(d.view_size),
        }
    }

    /// Fully resolved trainer settings for one cell.
    pub fn trainer_config(&self, variant: Variant, seed: u64) -> TrainerConfig {
        let mut c = TrainerConfig::for_env(self.env, variant, seed);
        let t = &self.trainer;
        if self.env == EnvId::GridWorld {
            c.max_steps = self.grid_config().max_steps();
        }
        c.episodes = t.episodes.unwrap_or(c.episodes);
        c.max_steps = t.max_steps.unwrap_or(c.max_steps);
        c.buffer_capacity = t.buffer_capacity.unwrap_or(c.buffer_capacity);
        c.minibatch_size = t.minibatch_size.unwrap_or(c.minibatch_size);
        c.replay_interval = t.replay_interval.unwrap_or(c.replay_interval);
        if let Some(lr) = t.learning_rate {
            c.model.adam.step_size = lr;
        }
        if let Some(h) = &t.trunk_hidden {
            c.model.trunk_hidden = h.clone();
        }
        c.model.embed_dim = t.embed_dim.unwrap_or(c.model.embed_dim);
        c.checkpoint_interval = self.eval.checkpoint_interval.unwrap_or(c.checkpoint_interval);
        let cadence = c.checkpoint_interval.max(1);
        let budget = c.episodes as u64 * c.max_steps as u64;
        c.horizon = Some(self.eval.horizon.unwrap_or(budget.div_ceil(cadence) * cadence));
        c
    }

    pub fn oracle_config(&self, variant: Variant, oracle_seed: u64) -> OracleConfig {
        OracleConfig {
            feedback_frequency: self.oracle.feedback_frequency,
            feedback_quality: self.oracle.feedback_quality,
            variant,
            seed: oracle_seed,
        }
    }

    /// SHA-256 over the canonical JSON of the config, output path excluded,
    /// plus the artifact version.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serialises");
        let digest = Sha256::digest(format!("{}\n{json}", crate::VERSION).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
