//! Train one H-model against the synthetic oracle and print its learning
//! curve next to vanilla TAMER on the same seed.
//!
//! ```text
//! cargo run --release --example train_with_oracle -- [variant] [seed]
//! ```

use cftamer::envs::EnvId;
use cftamer::eval::optimality_gap;
use cftamer::experiment::{calibrate, default_config, run_cell};
use cftamer::tamer::Variant;

fn main() {
    let variant: Variant = std::env::args().nth(1).as_deref().unwrap_or("cfa").parse().expect("variant");
    let seed: u64 = std::env::args().nth(2).map_or(0, |s| s.parse().expect("seed"));

    let mut config = default_config(EnvId::GridWorld);
    config.trainer.episodes = Some(100);
    let norms = calibrate(&config).expect("calibration");

    for v in [Variant::Vanilla, variant] {
        let cell = run_cell(&config, norms, v, seed);
        let log = &cell.log;
        let scores: Vec<f64> = log.checkpoints.iter().map(|c| c.score).collect();
        let curve: Vec<String> = scores.iter().step_by(4).map(|s| format!("{s:.2}")).collect();
        println!(
            "{v:<12} steps {:6}  feedback {:6}  counterfactuals {:5}  gap {:.3}",
            log.total_steps,
            log.feedback_count,
            log.cf_count,
            optimality_gap(&scores).expect("checkpoints")
        );
        println!("             {}", curve.join(" "));
    }
}
