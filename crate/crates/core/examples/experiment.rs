//! A small experiment grid written to disk and aggregated, the library
//! equivalent of `cftamer run` followed by `cftamer stats`.
//!
//! ```text
//! cargo run --release --example experiment [output-dir]
//! ```

use cftamer::experiment::{run_experiment, run_stats, write_outputs, ExperimentConfig};
use cftamer::tamer::Variant;

const CONFIG: &str = r#"
env = "gridworld"
variants = ["vanilla", "cfa", "random_extra"]
seeds = { start = 0, count = 3 }
oracle.feedback_quality = 0.9
trainer.episodes = 30
"#;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "results/example".into());
    let config = ExperimentConfig::parse(CONFIG).expect("config");
    let outcome = run_experiment(&config).expect("experiment");
    let manifest = write_outputs(&config, &outcome, dir.as_ref(), false).expect("write");
    println!("config {} -> {dir}", manifest.config_hash);
    for out in &manifest.outputs {
        println!("  {:<12} {}", out.file, &out.sha256[..16]);
    }

    let report = run_stats(dir.as_ref(), Some((Variant::Cfa, Variant::Vanilla))).expect("stats");
    for g in &report.gaps {
        println!("{:<13} gap {:.3} [{:.3}, {:.3}]", g.variant, g.iqm_gap, g.ci_low, g.ci_high);
    }
    for p in &report.poi {
        println!("P({} > {}) = {:.2}", p.variant_x, p.variant_y, p.poi);
    }
}
