//! The aggregate statistics on hand-made runs: IQM, optimality gap,
//! probability of improvement and their bootstrap intervals.
//!
//! ```text
//! cargo run --example metrics
//! ```

use cftamer::eval::{
    bootstrap_ci, iqm, optimality_gap, paired_difference_ci, poi_ci, BootstrapConfig,
};

fn main() {
    // Ten seeds each, three checkpoints per run.
    let curves_a: Vec<[f64; 3]> = (0..10).map(|i| [0.1, 0.6 + 0.02 * i as f64, 1.0]).collect();
    let curves_b: Vec<[f64; 3]> = (0..10).map(|i| [0.0, 0.4 + 0.03 * i as f64, 0.9]).collect();
    let gaps = |curves: &[[f64; 3]]| -> Vec<f64> {
        curves.iter().map(|c| optimality_gap(c).unwrap()).collect()
    };
    let (a, b) = (gaps(&curves_a), gaps(&curves_b));
    let cfg = BootstrapConfig::with_seed(0);

    for (name, g) in [("a", &a), ("b", &b)] {
        let s = bootstrap_ci(g, iqm, &cfg).unwrap();
        println!("IQM gap {name}: {:.4} [{:.4}, {:.4}]", s.point, s.ci_low, s.ci_high);
    }
    let d = paired_difference_ci(&a, &b, iqm, &cfg).unwrap();
    println!("paired difference a - b: {:.4} [{:.4}, {:.4}]", d.point, d.ci_low, d.ci_high);
    let p = poi_ci("a", &a, "b", &b, &cfg).unwrap();
    println!("P(a better than b) = {:.3} [{:.3}, {:.3}]", p.poi, p.ci_low, p.ci_high);
}
