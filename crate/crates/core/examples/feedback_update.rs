//! One feedback event of each kind applied to a fresh H-model: how the
//! predicted values of the fact and the counterfactual move.
//!
//! ```text
//! cargo run --example feedback_update
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cftamer::envs::{Env, EnvId, Environment};
use cftamer::tamer::{
    apply_feedback, CfTarget, Counterfactual, FeedbackEvent, HModel, ModelConfig, ReplayBuffer, Signal,
};

fn main() {
    let id = EnvId::GridWorld;
    let mut env = Env::new(id);
    let s = env.reset(3);
    let other = env.reset(4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fresh = HModel::new(s.len(), id.action_count(), ModelConfig::for_env(id), &mut rng).expect("model");

    let events = [
        ("plain -1 on forward", FeedbackEvent::plain(Signal::Negative, s.clone(), 2)),
        (
            "-1 on forward, +1 on turn_left",
            FeedbackEvent::with_counterfactual(
                Signal::Negative,
                s.clone(),
                2,
                Counterfactual { f_cf: Signal::Positive, target: CfTarget::Action { action: 0 } },
                true,
            ),
        ),
        (
            "-1 on forward, +1 on forward elsewhere",
            FeedbackEvent::with_counterfactual(
                Signal::Negative,
                s.clone(),
                2,
                Counterfactual { f_cf: Signal::Positive, target: CfTarget::State { state: other.clone() } },
                true,
            ),
        ),
    ];

    for (label, event) in events {
        let mut model = fresh.clone();
        let mut buffer = ReplayBuffer::new(10);
        let (cf_s, cf_a) = event.cf_pair().map(|(o, a)| (o.clone(), a)).unwrap_or((s.clone(), 2));
        let before = (model.h_values(&s).unwrap()[2], model.h_values(&cf_s).unwrap()[cf_a]);
        let mut last = None;
        for _ in 0..50 {
            last = Some(apply_feedback(&mut model, &mut buffer, event.clone()).expect("update"));
        }
        let after = (model.h_values(&s).unwrap()[2], model.h_values(&cf_s).unwrap()[cf_a]);
        println!("{label}");
        println!("    H(s, a)     {:+.3} -> {:+.3}", before.0, after.0);
        if event.cf.is_some() {
            println!("    H(cf pair)  {:+.3} -> {:+.3}", before.1, after.1);
        }
        println!("    final loss  {:?}", last.expect("ran"));
    }
}
