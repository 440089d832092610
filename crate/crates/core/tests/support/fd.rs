//! Central finite differences over every H-model parameter.

use cftamer::envs::Observation;
use cftamer::tamer::{CfTarget, Counterfactual, FeedbackEvent, HModel, ModelConfig, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so parameters whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;
/// Samples with a ReLU pre-activation or cosine closer than this to a kink
/// are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

pub struct Case {
    pub model: HModel,
    pub event: FeedbackEvent,
}

fn obs(rng: &mut ChaCha8Rng, n: usize) -> Observation {
    Observation((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn sign(rng: &mut ChaCha8Rng) -> Signal {
    if rng.gen_bool(0.5) {
        Signal::Positive
    } else {
        Signal::Negative
    }
}

/// A random small model with one random event. `form` 0 is plain feedback,
/// 1 a counterfactual action, 2 a counterfactual state, 3 an unrelated
/// sample with the contrastive term off.
pub fn random_case(rng: &mut ChaCha8Rng, form: usize) -> Case {
    let obs_len = rng.gen_range(2..7);
    let n_actions = rng.gen_range(2..5);
    let config = ModelConfig {
        trunk_hidden: (0..rng.gen_range(1..3)).map(|_| rng.gen_range(3..9)).collect(),
        embed_dim: rng.gen_range(2..7),
        ..ModelConfig::default()
    };
    let mut model = HModel::new(obs_len, n_actions, config, rng).unwrap();
    // Random non-zero biases keep units away from the all-zero corner.
    for i in 0..model.parameters().len() {
        let v = model.parameters()[i] + rng.gen_range(-0.3..0.3);
        model.set_parameter(i, v);
    }
    let f = sign(rng);
    let state = obs(rng, obs_len);
    let action = rng.gen_range(0..n_actions);
    let cf = |target| Counterfactual {
        f_cf: f.flipped(),
        target,
    };
    let event = match form {
        0 => FeedbackEvent::plain(f, state, action),
        1 => {
            let a_cf = (action + rng.gen_range(1..n_actions)) % n_actions;
            FeedbackEvent::with_counterfactual(f, state, action, cf(CfTarget::Action { action: a_cf }), true)
        }
        2 => {
            let s_cf = obs(rng, obs_len);
            FeedbackEvent::with_counterfactual(f, state, action, cf(CfTarget::State { state: s_cf }), true)
        }
        _ => {
            let target = CfTarget::Sample {
                state: obs(rng, obs_len),
                action: rng.gen_range(0..n_actions),
            };
            FeedbackEvent::with_counterfactual(f, state, action, cf(target), false)
        }
    };
    Case { model, event }
}

/// Whether every pre-activation on the event's paths, and the cosine, sit
/// at least `KINK_MARGIN` from a kink.
pub fn away_from_kinks(case: &Case) -> bool {
    let m = &case.model;
    let mut pairs = vec![(case.event.state.clone(), case.event.action)];
    if let Some((s, a)) = case.event.cf_pair() {
        pairs.push((s.clone(), a));
    }
    let mut embeddings = Vec::new();
    for (s, a) in &pairs {
        let (t, tc) = m.trunk().forward(s.as_slice()).unwrap();
        let (_, hc) = m.heads()[*a].forward(&t).unwrap();
        let trunk_ok = (0..m.trunk().layers().len())
            .all(|k| tc.pre_activation(k).iter().all(|z| z.abs() > KINK_MARGIN));
        let head_ok = hc.pre_activation(0).iter().all(|z| z.abs() > KINK_MARGIN);
        if !trunk_ok || !head_ok {
            return false;
        }
        embeddings.push(hc.layer_output(0).to_vec());
    }
    if case.event.contrastive_enabled && embeddings.len() == 2 {
        let (u, v) = (&embeddings[0], &embeddings[1]);
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nu <= 1e-6 || nv <= 1e-6 || (dot / (nu * nv)).abs() < KINK_MARGIN {
            return false;
        }
    }
    true
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_relative_error(case: &Case) -> f64 {
    let (_, grads) = case.model.loss_and_gradients(&case.event).unwrap();
    let analytic = grads.values();
    let params = case.model.parameters();
    assert_eq!(analytic.len(), params.len());
    let mut probe = case.model.clone();
    let mut worst: f64 = 0.0;
    for (i, &p) in params.iter().enumerate() {
        probe.set_parameter(i, p + STEP);
        let up = probe.loss_and_gradients(&case.event).unwrap().0.total();
        probe.set_parameter(i, p - STEP);
        let down = probe.loss_and_gradients(&case.event).unwrap().0.total();
        probe.set_parameter(i, p);
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(err);
    }
    worst
}

/// `n` kink-free random cases cycling through all event forms.
pub fn cases(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let case = random_case(&mut rng, out.len() % 4);
        if away_from_kinks(&case) {
            out.push(case);
        }
    }
    out
}
