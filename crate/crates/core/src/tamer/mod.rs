//! TAMER with counterfactual feedback.
//!
//! The learner fits an H-model of trainer feedback and acts greedily on it.
//! Feedback events may carry a counterfactual pair, which adds a second
//! squared-error term and a cosine hinge pushing the two embeddings apart.

pub mod buffer;
pub mod feedback;
pub mod model;
pub mod trainer;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use buffer::ReplayBuffer;
pub use feedback::{
    CfDirection, CfKind, CfTarget, Counterfactual, FeedbackEvent, Signal, Variant,
};
pub use model::{contrastive_loss, HModel, LossBreakdown, ModelConfig, ModelError, ModelGradients};
pub use trainer::{
    run_training, Checkpoint, EventRecord, FeedbackError, FeedbackSource, PendingPair, Progress,
    TrainError, TrainingAborted, TrainingLog, TrainingRun,
};

use crate::envs::EnvId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub variant: Variant,
    /// Number of training episodes.
    pub episodes: usize,
    /// Per-episode step cap (further bounded by the environment's own limit).
    pub max_steps: u32,
    pub buffer_capacity: usize,
    pub minibatch_size: usize,
    /// A replay update runs every this many environment steps.
    pub replay_interval: u64,
    /// Evaluation cadence in environment steps.
    pub checkpoint_interval: u64,
    /// Length of the checkpoint grid in environment steps. Training stops
    /// here at the latest; a run that ends earlier carries its final policy's
    /// score through the remaining grid points.
    pub horizon: Option<u64>,
    pub seed: u64,
    pub model: ModelConfig,
}

impl TrainerConfig {
    pub fn for_env(env: EnvId, variant: Variant, seed: u64) -> Self {
        let (episodes, max_steps, checkpoint_interval) = match env {
            EnvId::GridWorld => (300, 256, 500),
            EnvId::CartPole => (100, 500, 1000),
            EnvId::MountainCar => (100, 200, 1000),
        };
        let horizon = (episodes as u64 * max_steps as u64).div_ceil(checkpoint_interval)
            * checkpoint_interval;
        TrainerConfig {
            variant,
            episodes,
            max_steps,
            buffer_capacity: 1000,
            minibatch_size: 16,
            replay_interval: 4,
            checkpoint_interval,
            horizon: Some(horizon),
            seed,
            model: ModelConfig::for_env(env),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("episodes", self.episodes as u64),
            ("max_steps", self.max_steps as u64),
            ("buffer_capacity", self.buffer_capacity as u64),
            ("minibatch_size", self.minibatch_size as u64),
            ("replay_interval", self.replay_interval),
            ("checkpoint_interval", self.checkpoint_interval),
            ("embed_dim", self.model.embed_dim as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if self.model.trunk_hidden.is_empty() || self.model.trunk_hidden.contains(&0) {
            return Err("trunk_hidden must list positive widths".into());
        }
        if let Some(h) = self.horizon {
            if h == 0 || h % self.checkpoint_interval != 0 {
                return Err("horizon must be a positive multiple of checkpoint_interval".into());
            }
        }
        Ok(())
    }
}

/// Immediate update on one event, which is then stored for replay.
pub fn apply_feedback(
    model: &mut HModel,
    buffer: &mut ReplayBuffer,
    event: FeedbackEvent,
) -> Result<LossBreakdown, ModelError> {
    let (loss, grads) = model.loss_and_gradients(&event)?;
    model.apply_gradients(&grads)?;
    buffer.push(event);
    Ok(loss)
}

/// One optimiser step on the mean gradient of a uniformly drawn minibatch
/// (with replacement). Returns the mean loss, or `None` on an empty buffer.
pub fn replay_update<R: Rng + ?Sized>(
    model: &mut HModel,
    buffer: &ReplayBuffer,
    minibatch_size: usize,
    rng: &mut R,
) -> Result<Option<f64>, ModelError> {
    if buffer.is_empty() || minibatch_size == 0 {
        return Ok(None);
    }
    let batch = buffer.sample(minibatch_size, rng);
    let mut total = ModelGradients::zeros_like(model);
    let mut loss = 0.0;
    for event in &batch {
        let (l, g) = model.loss_and_gradients(event)?;
        loss += l.total();
        total.add_assign(&g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    model.apply_gradients(&total)?;
    Ok(Some(loss / n))
}
