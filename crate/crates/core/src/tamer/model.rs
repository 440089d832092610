//! The H-model: a shared trunk feeding one small head per action.
//!
//! Each head is `trunk_dim → embed_dim (ReLU) → 1 (linear)`. The head's hidden
//! activation is the embedding `E(s, a)` used by the contrastive term, so the
//! fact and a counterfactual action on the same state still get distinct
//! embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feedback::{CfTarget, FeedbackEvent};
use crate::envs::Observation;
use crate::nn::{
    adam_update, cosine_similarity, Activation, AdamConfig, ForwardCache, Gradients, Network,
    NnError, OptimizerState, NORM_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("action {action} out of range for {count} heads")]
    InvalidAction { action: usize, count: usize },
    #[error("malformed feedback event: {0}")]
    MalformedEvent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden widths of the shared trunk; the last entry is `trunk_dim`.
    pub trunk_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub adam: AdamConfig,
    /// Cosine terms with an embedding norm at or below this are skipped.
    pub norm_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            trunk_hidden: vec![64, 64],
            embed_dim: 32,
            adam: AdamConfig::default(),
            norm_floor: NORM_FLOOR,
        }
    }
}

impl ModelConfig {
    /// Trunk 64-64 for the grid, 32-32 for the physics tasks; embed 32.
    pub fn for_env(env: crate::envs::EnvId) -> Self {
        let width = match env {
            crate::envs::EnvId::GridWorld => 64,
            _ => 32,
        };
        ModelConfig {
            trunk_hidden: vec![width, width],
            ..ModelConfig::default()
        }
    }
}

/// Gradients for every part of an [`HModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub trunk: Gradients,
    pub heads: Vec<Gradients>,
}

impl ModelGradients {
    pub fn zeros_like(model: &HModel) -> Self {
        ModelGradients {
            trunk: Gradients::zeros_like(&model.trunk),
            heads: model.heads.iter().map(Gradients::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGradients) {
        self.trunk.add_assign(&other.trunk);
        for (h, o) in self.heads.iter_mut().zip(&other.heads) {
            h.add_assign(o);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.trunk.scale(factor);
        self.heads.iter_mut().for_each(|h| h.scale(factor));
    }

    /// Trunk values followed by each head, in [`HModel::parameters`] order.
    pub fn values(&self) -> Vec<f64> {
        self.trunk
            .values()
            .chain(self.heads.iter().flat_map(|h| h.values()))
            .collect()
    }
}

/// Loss terms of one feedback event.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `(H(s, a) - f)²`.
    pub normal: f64,
    /// `(H(cf pair) - f_cf)²`, zero without a counterfactual.
    pub counterfactual: f64,
    /// `max(0, cos(E(s, a), E(cf pair)))`; `None` when disabled or skipped.
    pub contrastive: Option<f64>,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.normal + self.counterfactual + self.contrastive.unwrap_or(0.0)
    }
}

/// Hinge on cosine similarity: `max(0, cos(e_fact, e_cf))` and its partials.
///
/// Degenerate norms and the inactive region both give a zero loss with zero
/// gradients; the first element is `None` when the term was skipped.
pub fn contrastive_loss(
    e_fact: &[f64],
    e_cf: &[f64],
    norm_floor: f64,
) -> (Option<f64>, Vec<f64>, Vec<f64>) {
    match cosine_similarity(e_fact, e_cf, norm_floor) {
        Ok((cos, du, dv)) if cos > 0.0 => (Some(cos), du, dv),
        Ok(_) => (Some(0.0), vec![0.0; e_fact.len()], vec![0.0; e_cf.len()]),
        Err(_) => (None, vec![0.0; e_fact.len()], vec![0.0; e_cf.len()]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HModel {
    config: ModelConfig,
    trunk: Network,
    heads: Vec<Network>,
    trunk_opt: OptimizerState,
    head_opts: Vec<OptimizerState>,
}

impl HModel {
    pub fn new<R: Rng + ?Sized>(
        obs_len: usize,
        n_actions: usize,
        config: ModelConfig,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mut sizes = vec![obs_len];
        sizes.extend(&config.trunk_hidden);
        let trunk = Network::random(&sizes, Activation::Relu, rng)?;
        let trunk_dim = trunk.output_len();
        let heads = (0..n_actions)
            .map(|_| Network::random(&[trunk_dim, config.embed_dim, 1], Activation::Linear, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HModel::from_parts(config, trunk, heads))
    }

    /// Assembles a model from explicit networks with fresh optimiser state.
    pub fn from_parts(config: ModelConfig, trunk: Network, heads: Vec<Network>) -> Self {
        let trunk_opt = OptimizerState::new(&trunk, config.adam);
        let head_opts = heads
            .iter()
            .map(|h| OptimizerState::new(h, config.adam))
            .collect();
        HModel {
            config,
            trunk,
            heads,
            trunk_opt,
            head_opts,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn action_count(&self) -> usize {
        self.heads.len()
    }

    pub fn observation_len(&self) -> usize {
        self.trunk.input_len()
    }

    pub fn trunk(&self) -> &Network {
        &self.trunk
    }

    pub fn heads(&self) -> &[Network] {
        &self.heads
    }

    /// Trunk parameters followed by each head's, flat.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = self.trunk.parameters();
        for h in &self.heads {
            p.extend(h.parameters());
        }
        p
    }

    /// Overwrites one parameter in [`HModel::parameters`] order.
    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let n = self.trunk.parameter_count();
        if index < n {
            return self.trunk.set_parameter(index, value);
        }
        let mut i = index - n;
        for h in &mut self.heads {
            let c = h.parameter_count();
            if i < c {
                return h.set_parameter(i, value);
            }
            i -= c;
        }
        panic!("parameter index {index} out of range");
    }

    fn check_action(&self, action: usize) -> Result<(), ModelError> {
        if action >= self.heads.len() {
            return Err(ModelError::InvalidAction {
                action,
                count: self.heads.len(),
            });
        }
        Ok(())
    }

    /// `H(s, a)` for every action.
    pub fn h_values(&self, s: &Observation) -> Result<Vec<f64>, ModelError> {
        let t = self.trunk.predict(s.as_slice())?;
        self.heads
            .iter()
            .map(|h| Ok(h.predict(&t)?[0]))
            .collect()
    }

    /// `E(s, a)`: hidden activation of head `a` on the trunk features of `s`.
    pub fn embed(&self, s: &Observation, action: usize) -> Result<Vec<f64>, ModelError> {
        self.check_action(action)?;
        let t = self.trunk.predict(s.as_slice())?;
        let (_, cache) = self.heads[action].forward(&t)?;
        Ok(cache.layer_output(0).to_vec())
    }

    /// Greedy action; ties are broken uniformly with `rng`.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        s: &Observation,
        rng: &mut R,
    ) -> Result<usize, ModelError> {
        Ok(argmax_random_tie(&self.h_values(s)?, rng))
    }

    /// Loss of one event and the gradient of every parameter it touches.
    ///
    /// Without a counterfactual this is the plain squared error. With one, the
    /// counterfactual squared error and (if enabled) the cosine hinge between
    /// the two embeddings are added with unit weights.
    pub fn loss_and_gradients(
        &self,
        event: &FeedbackEvent,
    ) -> Result<(LossBreakdown, ModelGradients), ModelError> {
        event
            .validate(self.heads.len(), self.trunk.input_len())
            .map_err(ModelError::MalformedEvent)?;
        let mut grads = ModelGradients::zeros_like(self);
        let mut loss = LossBreakdown::default();

        let (fact_out, fact_trunk) = self.trunk.forward(event.state.as_slice())?;
        let (fact_h, fact_head) = self.heads[event.action].forward(&fact_out)?;
        let fact_residual = fact_h[0] - event.f.value();
        loss.normal = fact_residual * fact_residual;

        let Some((cf_state, cf_action)) = event.cf_pair() else {
            let dt = self.heads[event.action].backward_into(
                &fact_head,
                &[2.0 * fact_residual],
                &[],
                &mut grads.heads[event.action],
            )?;
            self.backward_trunk(&fact_trunk, &dt, &mut grads.trunk)?;
            return Ok((loss, grads));
        };
        let f_cf = event.cf.as_ref().map(|c| c.f_cf.value()).unwrap_or_default();

        let shared_state = matches!(
            event.cf.as_ref().map(|c| &c.target),
            Some(CfTarget::Action { .. })
        );
        let cf_trunk_pass: Option<(Vec<f64>, ForwardCache)> = if shared_state {
            None
        } else {
            Some(self.trunk.forward(cf_state.as_slice())?)
        };
        let cf_features = cf_trunk_pass.as_ref().map_or(&fact_out, |(o, _)| o);
        let (cf_h, cf_head) = self.heads[cf_action].forward(cf_features)?;
        let cf_residual = cf_h[0] - f_cf;
        loss.counterfactual = cf_residual * cf_residual;

        let (de_fact, de_cf) = if event.contrastive_enabled {
            let (term, du, dv) = contrastive_loss(
                fact_head.layer_output(0),
                cf_head.layer_output(0),
                self.config.norm_floor,
            );
            loss.contrastive = term;
            (du, dv)
        } else {
            let d = self.config.embed_dim;
            (vec![0.0; d], vec![0.0; d])
        };

        let dt_fact = self.heads[event.action].backward_into(
            &fact_head,
            &[2.0 * fact_residual],
            &[(0, &de_fact)],
            &mut grads.heads[event.action],
        )?;
        let dt_cf = self.heads[cf_action].backward_into(
            &cf_head,
            &[2.0 * cf_residual],
            &[(0, &de_cf)],
            &mut grads.heads[cf_action],
        )?;
        match &cf_trunk_pass {
            None => {
                let dt: Vec<f64> = dt_fact.iter().zip(&dt_cf).map(|(a, b)| a + b).collect();
                self.backward_trunk(&fact_trunk, &dt, &mut grads.trunk)?;
            }
            Some((_, cf_trunk)) => {
                self.backward_trunk(&fact_trunk, &dt_fact, &mut grads.trunk)?;
                self.backward_trunk(cf_trunk, &dt_cf, &mut grads.trunk)?;
            }
        }
        Ok((loss, grads))
    }

    fn backward_trunk(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<(), ModelError> {
        self.trunk.backward_into(cache, upstream, &[], grads)?;
        Ok(())
    }

    /// One optimiser step on every part of the model.
    pub fn apply_gradients(&mut self, grads: &ModelGradients) -> Result<(), ModelError> {
        // Check everything first so a bad head cannot leave a half-updated model.
        for g in std::iter::once(&grads.trunk).chain(&grads.heads) {
            if let Some(layer) = g.first_non_finite() {
                return Err(NnError::NonFiniteGradient { layer }.into());
            }
        }
        adam_update(&mut self.trunk, &grads.trunk, &mut self.trunk_opt)?;
        for ((head, opt), g) in self.heads.iter_mut().zip(&mut self.head_opts).zip(&grads.heads) {
            adam_update(head, g, opt)?;
        }
        Ok(())
    }
}

/// Index of the maximum; ties broken uniformly with `rng`. The RNG is only
/// consulted when there is an actual tie.
pub fn argmax_random_tie<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .map(|(i, _)| i)
        .collect();
    match ties.len() {
        0 => 0,
        1 => ties[0],
        n => ties[rng.gen_range(0..n)],
    }
}
