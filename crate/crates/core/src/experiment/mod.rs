//! Batch experiments: every (variant, seed) cell of a config trained against
//! the synthetic oracle, written out as `runs.csv` plus a manifest.

pub mod config;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub use config::{cell_seeds, CellSeeds, ExperimentConfig, SeedSpec};
pub use report::{read_runs, run_stats, write_report, RUNS_HEADER};

use crate::envs::{calibrate_norms, CalibrationError, Env, EnvId, Norms, RANDOM_EPISODES};
use crate::eval::{EvalError, Evaluator, RunRecord};
use crate::oracle::{build_state_bank, ExpertPolicy, Oracle, OracleError, StateBank, BANK_EPISODES};
use crate::tamer::{run_training, TrainError, TrainingLog, TrainingRun, Variant};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: row {row}, column `{column}`: {message}")]
    Schema {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl ExperimentError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Random and expert norms for the configured environment, measured on its
/// evaluation seeds.
pub fn calibrate(config: &ExperimentConfig) -> Result<Norms, ExperimentError> {
    let mut env = Env::with_grid(config.env, config.grid_config());
    let expert = ExpertPolicy::new(config.env);
    Ok(calibrate_norms(
        &mut env,
        |s| expert.act(s),
        RANDOM_EPISODES,
        &config.eval_seeds(),
    )?)
}

/// Norms plus the two gate measurements: the expert's normalised score on
/// each eval seed and the random policy's expected normalised score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub env: EnvId,
    pub norms: Norms,
    pub eval_seeds: Vec<u64>,
    pub expert_scores: Vec<f64>,
    pub random_score: f64,
}

/// Independent action streams per eval seed behind `random_score`.
pub const RANDOM_CHECK_STREAMS: usize = 100;

pub fn calibration_report(config: &ExperimentConfig) -> Result<CalibrationReport, ExperimentError> {
    let norms = calibrate(config)?;
    let ev = evaluator(config, norms);
    let expert = ExpertPolicy::new(config.env);
    Ok(CalibrationReport {
        env: config.env,
        norms,
        eval_seeds: ev.seeds.clone(),
        expert_scores: ev.per_seed_with(|_, s, _| expert.act(s))?,
        random_score: ev.random_policy_score(RANDOM_CHECK_STREAMS)?,
    })
}

/// The settings every config for `env` starts from.
pub fn default_config(env: EnvId) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("env = \"{env}\"\nvariants = [\"vanilla\"]\nseeds = [0]\n"))
        .expect("default config is valid")
}

pub fn evaluator(config: &ExperimentConfig, norms: Norms) -> Evaluator {
    Evaluator {
        env: config.env,
        grid: config.grid_config(),
        seeds: config.eval_seeds(),
        norms,
    }
}

/// Everything needed to train one cell. Built the same way for batch runs
/// and for interactive sessions, so a scripted session reproduces a batch
/// cell exactly.
pub struct CellSetup {
    pub run: TrainingRun,
    pub oracle: Oracle,
}

pub fn setup_cell(
    config: &ExperimentConfig,
    norms: Norms,
    variant: Variant,
    seed: u64,
) -> Result<CellSetup, ExperimentError> {
    let seeds = cell_seeds(seed);
    let bank = build_bank(config, seeds.bank)?;
    let oracle = Oracle::new(config.oracle_config(variant, seeds.oracle), Arc::new(bank))?;
    let run = training_run(config, norms, variant, seed)?;
    Ok(CellSetup { run, oracle })
}

/// The learner side of a cell on its own, for sessions where a person gives
/// the feedback.
pub fn training_run(
    config: &ExperimentConfig,
    norms: Norms,
    variant: Variant,
    seed: u64,
) -> Result<TrainingRun, ExperimentError> {
    Ok(TrainingRun::new(
        config.trainer_config(variant, cell_seeds(seed).trainer),
        Env::with_grid(config.env, config.grid_config()),
        Some(evaluator(config, norms)),
    )?)
}

pub fn build_bank(config: &ExperimentConfig, bank_seed: u64) -> Result<StateBank, ExperimentError> {
    Ok(build_state_bank(
        config.env,
        config.grid_config(),
        BANK_EPISODES,
        bank_seed,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub variant: Variant,
    pub seed: u64,
    /// The full log, or the partial log and error message of a failed run.
    pub log: TrainingLog,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn record(&self, env: EnvId) -> RunRecord {
        RunRecord {
            env,
            variant: self.variant,
            seed: self.seed,
            checkpoints: self.log.checkpoints.clone(),
        }
    }
}

pub fn run_cell(config: &ExperimentConfig, norms: Norms, variant: Variant, seed: u64) -> CellOutcome {
    let outcome = |log, error| CellOutcome {
        variant,
        seed,
        log,
        error,
    };
    let CellSetup { run, mut oracle } = match setup_cell(config, norms, variant, seed) {
        Ok(s) => s,
        Err(e) => return outcome(TrainingLog::default(), Some(e.to_string())),
    };
    let cfg = run.config().clone();
    let evaluator = run.evaluator().cloned();
    let env = run.env().clone();
    match run_training(cfg, env, evaluator, &mut oracle) {
        Ok(log) => outcome(log, None),
        Err(aborted) => outcome(aborted.log, Some(aborted.error.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub norms: Norms,
    /// Cells in config order: variants outermost, then seeds.
    pub cells: Vec<CellOutcome>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| !c.is_ok())
    }

    pub fn records(&self, env: EnvId) -> Vec<RunRecord> {
        self.cells
            .iter()
            .filter(|c| c.is_ok())
            .map(|c| c.record(env))
            .collect()
    }
}

/// Calibrates, then trains every cell in parallel. A failing cell does not
/// stop the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate()?;
    let norms = calibrate(config)?;
    let grid: Vec<(Variant, u64)> = config
        .variants
        .iter()
        .flat_map(|&v| config.seed_list().into_iter().map(move |s| (v, s)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(v, s)| {
            let cell = run_cell(config, norms, v, s);
            match &cell.error {
                None => log::info!("{}/{v} seed {s}: {} steps", config.env, cell.log.total_steps),
                Some(e) => log::error!("{}/{v} seed {s} failed: {e}", config.env),
            }
            cell
        })
        .collect();
    Ok(ExperimentOutcome { norms, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub variant: Variant,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub total_steps: u64,
    pub feedback_count: u64,
    pub cf_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOutput {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub norms: Norms,
    pub cells: Vec<ManifestCell>,
    pub outputs: Vec<ManifestOutput>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Renders the rows of successful cells. Floats use the shortest form that
/// parses back to the same value.
pub fn runs_csv(env: EnvId, cells: &[CellOutcome]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for cell in cells.iter().filter(|c| c.is_ok()) {
        for c in &cell.log.checkpoints {
            out.push_str(&format!(
                "{env},{},{},{},{:?},{},{}\n",
                cell.variant, cell.seed, c.env_steps, c.score, c.feedback_count, c.cf_count
            ));
        }
    }
    out
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<ManifestOutput, ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(ManifestOutput {
        file: name.to_string(),
        sha256: sha256_hex(bytes),
    })
}

/// Writes `runs.csv`, `norms.json`, optional per-cell logs and
/// `manifest.json` into `dir`.
pub fn write_outputs(
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
    with_logs: bool,
) -> Result<Manifest, ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut outputs = vec![
        write(dir, "runs.csv", runs_csv(config.env, &outcome.cells).as_bytes())?,
        write(
            dir,
            "norms.json",
            serde_json::to_string_pretty(&outcome.norms)
                .expect("norms serialise")
                .as_bytes(),
        )?,
    ];
    if with_logs {
        let logs = dir.join("logs");
        fs::create_dir_all(&logs).map_err(|e| ExperimentError::io(&logs, e))?;
        for cell in &outcome.cells {
            let name = format!("logs/{}-{}.json", cell.variant, cell.seed);
            outputs.push(write(dir, &name, cell.log.to_json().as_bytes())?);
        }
    }
    let cells = outcome
        .cells
        .iter()
        .map(|c| ManifestCell {
            variant: c.variant,
            seed: c.seed,
            status: if c.is_ok() { "ok" } else { "failed" }.into(),
            error: c.error.clone(),
            total_steps: c.log.total_steps,
            feedback_count: c.log.feedback_count,
            cf_count: c.log.cf_count,
        })
        .collect();
    let manifest = Manifest {
        version: crate::VERSION.into(),
        config_hash: config.hash(),
        config: config.clone(),
        norms: outcome.norms,
        cells,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    let path = dir.join("manifest.json");
    fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(manifest)
}
