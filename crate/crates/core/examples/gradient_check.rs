//! Compare the analytic gradient of the full counterfactual loss with
//! central differences on a few parameters.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cftamer::envs::Observation;
use cftamer::tamer::{CfTarget, Counterfactual, FeedbackEvent, HModel, ModelConfig, Signal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = ModelConfig { trunk_hidden: vec![6, 5], embed_dim: 4, ..ModelConfig::for_env(cftamer::envs::EnvId::CartPole) };
    let model = HModel::new(4, 3, config, &mut rng).expect("model");
    let obs = |rng: &mut ChaCha8Rng| Observation((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let s = obs(&mut rng);
    let event = FeedbackEvent::with_counterfactual(
        Signal::Negative,
        s,
        1,
        Counterfactual { f_cf: Signal::Positive, target: CfTarget::Action { action: 2 } },
        true,
    );

    let (loss, grads) = model.loss_and_gradients(&event).expect("loss");
    println!("loss {loss:?}");
    let analytic = grads.values();
    let params = model.parameters();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(params.len());
    for (i, &p) in params.iter().enumerate() {
        probe.set_parameter(i, p + h);
        let up = probe.loss_and_gradients(&event).unwrap().0.total();
        probe.set_parameter(i, p - h);
        let down = probe.loss_and_gradients(&event).unwrap().0.total();
        probe.set_parameter(i, p);
        numeric.push((up - down) / (2.0 * h));
    }

    // Unused heads and inactive ReLU units get exactly zero; show the largest.
    let mut order: Vec<usize> = (0..params.len()).collect();
    order.sort_by(|&a, &b| analytic[b].abs().total_cmp(&analytic[a].abs()));
    for &i in order.iter().take(8) {
        println!("param {i:4}  analytic {:+.8}  numeric {:+.8}", analytic[i], numeric[i]);
    }
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max);
    let zero = analytic.iter().filter(|g| **g == 0.0).count();
    println!("{} parameters, {zero} untouched, worst relative error {worst:.2e}", params.len());
}
