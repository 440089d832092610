//! Measure the random and expert returns that map raw returns onto the
//! normalized score, and show the per-seed expert scores behind the gate.
//!
//! ```text
//! cargo run --release --example calibrate [gridworld|cartpole|mountaincar]
//! ```

use cftamer::envs::EnvId;
use cftamer::experiment::{calibration_report, default_config};

fn main() {
    let envs: Vec<EnvId> = match std::env::args().nth(1) {
        Some(name) => vec![name.parse().expect("unknown environment")],
        None => EnvId::ALL.to_vec(),
    };
    for env in envs {
        let r = calibration_report(&default_config(env)).expect("calibration");
        let worst = r.expert_scores.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{env:<12} R_random {:9.3}  R_expert {:9.3}  expert min/seed {worst:.3}  random {:+.3}",
            r.norms.random, r.norms.expert, r.random_score
        );
    }
}
