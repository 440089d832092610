//! `cftamer`: run experiment grids, aggregate them, host live sessions.
//!
//! Exit status: 0 ok, 1 usage or bad config, 2 a cell (or calibration gate)
//! failed, 3 I/O or unreadable input.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use cftamer::envs::EnvId;
use cftamer::experiment::{
    calibrate, calibration_report, default_config, run_experiment, run_stats, write_outputs,
    ExperimentConfig, ExperimentError,
};
use cftamer::tamer::Variant;
use cftamer_session::{serve, ServeSettings};

#[derive(Parser)]
#[command(name = "cftamer", version, about = "TAMER with counterfactual feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (variant, seed) cell of a config against the synthetic oracle.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write each cell's full training log under `logs/`.
        #[arg(long)]
        logs: bool,
    },
    /// Aggregate `<dir>/runs.csv` into curves, gaps and POI tables.
    Stats {
        dir: PathBuf,
        /// Only compare these two variants, e.g. `cfa,vanilla`.
        #[arg(long, value_name = "A,B")]
        compare: Option<String>,
    },
    /// Host live training sessions over WebSocket.
    Serve {
        config: PathBuf,
        #[arg(long)]
        port: u16,
    },
    /// Measure the random and expert norms of an environment.
    Calibrate { env: String },
}

/// Failures that map to a specific exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Cells(usize),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Cells(n) => write!(f, "{n} cell(s) failed; see manifest.json"),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => 1,
                Failure::Cells(_) => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            return match e {
                ExperimentError::Config(_) => 1,
                ExperimentError::Calibration(_)
                | ExperimentError::Oracle(_)
                | ExperimentError::Train(_) => 2,
                ExperimentError::Io { .. } | ExperimentError::Schema { .. } | ExperimentError::Eval(_) => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    3
}

fn parse_pair(s: &str) -> Result<(Variant, Variant)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        bail!(Failure::Usage(format!("--compare expects `a,b`, got `{s}`")));
    };
    let parse = |v: &str| v.parse::<Variant>().map_err(Failure::Usage);
    Ok((parse(a)?, parse(b)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, logs } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output = out;
            }
            let outcome = run_experiment(&cfg)?;
            let manifest = write_outputs(&cfg, &outcome, &cfg.output, logs)?;
            println!(
                "{} cells -> {} (config {})",
                manifest.cells.len(),
                cfg.output.display(),
                &manifest.config_hash[..12]
            );
            let failed = outcome.failures().count();
            if failed > 0 {
                bail!(Failure::Cells(failed));
            }
        }
        Command::Stats { dir, compare } => {
            let pair = compare.as_deref().map(parse_pair).transpose()?;
            let report = run_stats(&dir, pair)?;
            for g in &report.gaps {
                println!(
                    "{:<12} {:<13} gap {:.4} [{:.4}, {:.4}] n={}",
                    g.env, g.variant, g.iqm_gap, g.ci_low, g.ci_high, g.n
                );
            }
            for p in &report.poi {
                println!(
                    "{:<12} P({} > {}) = {:.3} [{:.3}, {:.3}]",
                    p.env, p.variant_x, p.variant_y, p.poi, p.ci_low, p.ci_high
                );
            }
        }
        Command::Serve { config, port } => {
            let cfg = ExperimentConfig::load(&config)?;
            let norms = calibrate(&cfg)?;
            let settings = ServeSettings::new(cfg, norms);
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
                    .await
                    .with_context(|| format!("binding port {port}"))?;
                log::info!("serving on {}", listener.local_addr()?);
                serve(listener, settings, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
                .context("server stopped")
            })?;
        }
        Command::Calibrate { env } => {
            let id: EnvId = env.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
            let report = calibration_report(&default_config(id))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
