//! The interactive training loop as a resumable state machine.
//!
//! [`TrainingRun::advance`] steps the environment until the loop needs
//! feedback on the previous `(state, action)` pair; [`TrainingRun::submit_feedback`]
//! answers it. [`run_training`] drives that cycle from any [`FeedbackSource`],
//! and the interactive session drives it from socket messages, so both share
//! one implementation.
//!
//! Per environment step: observe `s_t`; gather feedback on `(s_{t-1}, a_{t-1})`
//! (none on an episode's first step); apply it; act greedily; step the
//! environment; replay every `replay_interval` steps; evaluate every
//! `checkpoint_interval` steps. The pair that ends an episode is still offered
//! for feedback once its outcome has been observed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feedback::{CfKind, CfTarget, FeedbackEvent, Signal, Variant};
use super::model::{HModel, ModelError};
use super::{apply_feedback, replay_update, ReplayBuffer, TrainerConfig};
use crate::envs::{Env, EnvError, EnvState, Environment, Observation};
use crate::eval::Evaluator;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct FeedbackError(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("feedback source failed: {0}")]
    Feedback(#[from] FeedbackError),
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error("no feedback is pending")]
    NotAwaitingFeedback,
    #[error("feedback does not refer to the pending pair (step {pending})")]
    MismatchedFeedback { pending: u64 },
    #[error("evaluation failed: {0}")]
    Eval(String),
}

/// Anything that can answer `gather_feedback(s_{t-1}, a_{t-1})`.
pub trait FeedbackSource {
    fn gather_feedback(
        &mut self,
        query: &PendingPair,
    ) -> Result<Option<FeedbackEvent>, FeedbackError>;
}

impl<F> FeedbackSource for F
where
    F: FnMut(&PendingPair) -> Option<FeedbackEvent>,
{
    fn gather_feedback(
        &mut self,
        query: &PendingPair,
    ) -> Result<Option<FeedbackEvent>, FeedbackError> {
        Ok(self(query))
    }
}

/// The previous step, awaiting feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingPair {
    /// Global environment step at which `action` was taken (1-based).
    pub step: u64,
    pub episode: usize,
    pub state: Observation,
    /// Hidden state before `action`; for oracles only.
    pub hidden: EnvState,
    pub action: usize,
    /// Whether `action` ended the episode.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Progress {
    AwaitingFeedback,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Stage {
    StartEpisode,
    Observe,
    Awaiting,
    Act,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: u64,
    pub episode: usize,
    pub f: Signal,
    pub action: usize,
    pub cf_kind: Option<CfKind>,
    pub f_cf: Option<Signal>,
    pub cf_action: Option<usize>,
    pub contrastive_enabled: bool,
    pub loss: f64,
}

impl EventRecord {
    fn from_event(step: u64, episode: usize, event: &FeedbackEvent, loss: f64) -> Self {
        let cf_action = event.cf.as_ref().and_then(|cf| match &cf.target {
            CfTarget::Action { action } | CfTarget::Sample { action, .. } => Some(*action),
            CfTarget::State { .. } => None,
        });
        EventRecord {
            step,
            episode,
            f: event.f,
            action: event.action,
            cf_kind: event.cf.as_ref().map(|cf| cf.target.kind()),
            f_cf: event.cf.as_ref().map(|cf| cf.f_cf),
            cf_action,
            contrastive_enabled: event.contrastive_enabled,
            loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub env_steps: u64,
    pub score: f64,
    pub feedback_count: u64,
    pub cf_count: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub events: Vec<EventRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub total_steps: u64,
    pub episodes_completed: usize,
    pub feedback_count: u64,
    pub cf_count: u64,
    pub replay_updates: u64,
}

impl TrainingLog {
    /// Canonical JSON form, used for byte-level determinism checks.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("training log serialises")
    }
}

/// A run that stopped early; `log` holds everything up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("training aborted after {} steps: {error}", log.total_steps)]
pub struct TrainingAborted {
    pub error: TrainError,
    pub log: TrainingLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun<E = Env> {
    config: TrainerConfig,
    env: E,
    evaluator: Option<Evaluator>,
    model: HModel,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    episode_rng: ChaCha8Rng,
    stage: Stage,
    episode: usize,
    episode_step: u32,
    episode_over: bool,
    total_steps: u64,
    current: Option<(Observation, EnvState)>,
    pending: Option<PendingPair>,
    log: TrainingLog,
}

impl<E: Environment> TrainingRun<E> {
    /// Sets up the model from `config.seed` and records the step-0 checkpoint
    /// when an evaluator is given.
    pub fn new(config: TrainerConfig, env: E, evaluator: Option<Evaluator>) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut episode_rng = ChaCha8Rng::seed_from_u64(config.seed);
        episode_rng.set_stream(1);
        let model = HModel::new(
            env.observation_len(),
            env.action_count(),
            config.model.clone(),
            &mut rng,
        )?;
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        let mut run = TrainingRun {
            config,
            env,
            evaluator,
            model,
            buffer,
            rng,
            episode_rng,
            stage: Stage::StartEpisode,
            episode: 0,
            episode_step: 0,
            episode_over: false,
            total_steps: 0,
            current: None,
            pending: None,
            log: TrainingLog::default(),
        };
        run.checkpoint()?;
        Ok(run)
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn model(&self) -> &HModel {
        &self.model
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn into_log(self) -> TrainingLog {
        self.log
    }

    pub fn evaluator(&self) -> Option<&Evaluator> {
        self.evaluator.as_ref()
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn is_finished(&self) -> bool {
        self.stage == Stage::Finished
    }

    /// The pair awaiting feedback, if the loop is blocked on one.
    pub fn pending(&self) -> Option<&PendingPair> {
        match self.stage {
            Stage::Awaiting => self.pending.as_ref(),
            _ => None,
        }
    }

    /// Current observation and hidden state, between steps.
    pub fn current(&self) -> Option<&(Observation, EnvState)> {
        self.current.as_ref()
    }

    fn horizon_reached(&self) -> bool {
        self.config.horizon.is_some_and(|h| self.total_steps >= h)
    }

    /// Runs the loop until feedback is needed or training is over.
    pub fn advance(&mut self) -> Result<Progress, TrainError> {
        loop {
            match self.stage {
                Stage::Finished => return Ok(Progress::Finished),
                Stage::Awaiting => return Ok(Progress::AwaitingFeedback),
                Stage::StartEpisode => {
                    if self.episode >= self.config.episodes || self.horizon_reached() {
                        self.finish()?;
                        continue;
                    }
                    let seed: u64 = self.episode_rng.gen();
                    let obs = self.env.reset(seed);
                    let hidden = self.env.state().cloned().ok_or(EnvError::NotReset)?;
                    self.current = Some((obs, hidden));
                    self.pending = None;
                    self.episode_step = 0;
                    self.episode_over = false;
                    self.stage = Stage::Observe;
                }
                Stage::Observe => {
                    self.stage = if self.pending.is_some() {
                        Stage::Awaiting
                    } else {
                        Stage::Act
                    };
                }
                Stage::Act => self.act()?,
            }
        }
    }

    fn act(&mut self) -> Result<(), TrainError> {
        let (obs, hidden) = self.current.take().ok_or(EnvError::NotReset)?;
        let action = self.model.select_action(&obs, &mut self.rng)?;
        let result = self.env.step(action)?;
        self.total_steps += 1;
        self.episode_step += 1;
        let terminal = result.done || self.episode_step >= self.config.max_steps;
        self.pending = Some(PendingPair {
            step: self.total_steps,
            episode: self.episode,
            state: obs,
            hidden,
            action,
            terminal,
        });
        self.current = Some((result.observation, result.info));
        self.episode_over = terminal;

        if self.total_steps % self.config.replay_interval == 0
            && replay_update(
                &mut self.model,
                &self.buffer,
                self.config.minibatch_size,
                &mut self.rng,
            )?
            .is_some()
        {
            self.log.replay_updates += 1;
        }
        if self.total_steps % self.config.checkpoint_interval == 0 {
            self.checkpoint()?;
        }
        self.log.total_steps = self.total_steps;
        self.stage = if self.horizon_reached() {
            self.finish()?;
            Stage::Finished
        } else {
            Stage::Observe
        };
        Ok(())
    }

    /// Answers the pending query. `None` means no feedback for this step.
    pub fn submit_feedback(&mut self, feedback: Option<FeedbackEvent>) -> Result<(), TrainError> {
        if self.stage != Stage::Awaiting {
            return Err(TrainError::NotAwaitingFeedback);
        }
        let pending = self.pending.take().ok_or(TrainError::NotAwaitingFeedback)?;
        if let Some(event) = feedback {
            if event.action != pending.action || event.state != pending.state {
                let step = pending.step;
                self.pending = Some(pending);
                return Err(TrainError::MismatchedFeedback { pending: step });
            }
            let record_base = (pending.step, pending.episode);
            let probe = event.clone();
            let loss = apply_feedback(&mut self.model, &mut self.buffer, event)?;
            self.log.feedback_count += 1;
            if probe.cf.is_some() {
                self.log.cf_count += 1;
            }
            self.log.events.push(EventRecord::from_event(
                record_base.0,
                record_base.1,
                &probe,
                loss.total(),
            ));
        }
        if self.episode_over {
            self.episode += 1;
            self.log.episodes_completed = self.episode;
            self.current = None;
            self.stage = Stage::StartEpisode;
        } else {
            self.stage = Stage::Act;
        }
        Ok(())
    }

    fn evaluate(&self) -> Result<Option<f64>, TrainError> {
        self.evaluator
            .as_ref()
            .map(|ev| ev.evaluate(&self.model))
            .transpose()
            .map_err(|e| TrainError::Eval(e.to_string()))
    }

    fn checkpoint(&mut self) -> Result<(), TrainError> {
        if let Some(score) = self.evaluate()? {
            self.log.checkpoints.push(Checkpoint {
                env_steps: self.total_steps,
                score,
                feedback_count: self.log.feedback_count,
                cf_count: self.log.cf_count,
            });
        }
        Ok(())
    }

    /// Ends training and fills the rest of the checkpoint grid with the final
    /// (frozen) policy's score.
    fn finish(&mut self) -> Result<(), TrainError> {
        self.stage = Stage::Finished;
        self.pending = None;
        let Some(horizon) = self.config.horizon else {
            return Ok(());
        };
        let cadence = self.config.checkpoint_interval;
        let last = self.log.checkpoints.last().map(|c| c.env_steps);
        let mut next = last.map_or(0, |s| s + cadence);
        if next > horizon {
            return Ok(());
        }
        let Some(score) = self.evaluate()? else {
            return Ok(());
        };
        while next <= horizon {
            self.log.checkpoints.push(Checkpoint {
                env_steps: next,
                score,
                feedback_count: self.log.feedback_count,
                cf_count: self.log.cf_count,
            });
            next += cadence;
        }
        Ok(())
    }
}

impl<E> TrainingRun<E> {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }
}

/// Executes the whole loop against `source`.
pub fn run_training<E: Environment, S: FeedbackSource>(
    config: TrainerConfig,
    env: E,
    evaluator: Option<Evaluator>,
    source: &mut S,
) -> Result<TrainingLog, TrainingAborted> {
    let mut run = TrainingRun::new(config, env, evaluator).map_err(|error| TrainingAborted {
        error,
        log: TrainingLog::default(),
    })?;
    loop {
        let step = (|| -> Result<bool, TrainError> {
            match run.advance()? {
                Progress::Finished => Ok(true),
                Progress::AwaitingFeedback => {
                    let query = run.pending().expect("pending while awaiting").clone();
                    let feedback = source.gather_feedback(&query)?;
                    run.submit_feedback(feedback)?;
                    Ok(false)
                }
            }
        })();
        match step {
            Ok(true) => return Ok(run.into_log()),
            Ok(false) => {}
            Err(error) => {
                return Err(TrainingAborted {
                    error,
                    log: run.into_log(),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvId, StepResult};
    use crate::tamer::ModelConfig;

    fn tiny_config(env: EnvId, variant: Variant) -> TrainerConfig {
        TrainerConfig {
            episodes: 3,
            horizon: None,
            model: ModelConfig {
                trunk_hidden: vec![8, 8],
                embed_dim: 4,
                ..ModelConfig::default()
            },
            ..TrainerConfig::for_env(env, variant, 7)
        }
    }

    fn always_positive(q: &PendingPair) -> Option<FeedbackEvent> {
        Some(FeedbackEvent::plain(Signal::Positive, q.state.clone(), q.action))
    }

    #[test]
    fn no_feedback_leaves_model_untouched() {
        let config = tiny_config(EnvId::CartPole, Variant::Vanilla);
        let mut run = TrainingRun::new(config.clone(), Env::new(EnvId::CartPole), None).unwrap();
        let initial = run.model().clone();
        let silent = |_: &PendingPair| None;
        while let Progress::AwaitingFeedback = run.advance().unwrap() {
            let q = run.pending().unwrap().clone();
            run.submit_feedback(silent(&q)).unwrap();
        }
        assert_eq!(run.model().parameters(), initial.parameters());
        assert_eq!(run.log().episodes_completed, 3);
        assert_eq!(run.log().feedback_count, 0);
    }

    #[test]
    fn every_step_is_offered_once_including_terminal() {
        let config = tiny_config(EnvId::MountainCar, Variant::Vanilla);
        let mut queries = Vec::new();
        let mut source = |q: &PendingPair| {
            queries.push((q.step, q.terminal));
            None
        };
        let log = run_training(config, Env::new(EnvId::MountainCar), None, &mut source).unwrap();
        assert_eq!(queries.len() as u64, log.total_steps);
        let steps: Vec<u64> = queries.iter().map(|q| q.0).collect();
        assert_eq!(steps, (1..=log.total_steps).collect::<Vec<_>>());
        assert_eq!(queries.iter().filter(|q| q.1).count(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        let config = tiny_config(EnvId::CartPole, Variant::Vanilla);
        let a = run_training(config.clone(), Env::new(EnvId::CartPole), None, &mut always_positive).unwrap();
        let b = run_training(config, Env::new(EnvId::CartPole), None, &mut always_positive).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.feedback_count > 0);
    }

    #[test]
    fn submit_outside_awaiting_is_rejected() {
        let config = tiny_config(EnvId::CartPole, Variant::Vanilla);
        let mut run = TrainingRun::new(config, Env::new(EnvId::CartPole), None).unwrap();
        assert_eq!(run.submit_feedback(None), Err(TrainError::NotAwaitingFeedback));
    }

    #[test]
    fn mismatched_feedback_is_rejected_and_query_kept() {
        let config = tiny_config(EnvId::CartPole, Variant::Vanilla);
        let mut run = TrainingRun::new(config, Env::new(EnvId::CartPole), None).unwrap();
        assert_eq!(run.advance().unwrap(), Progress::AwaitingFeedback);
        let q = run.pending().unwrap().clone();
        let wrong = FeedbackEvent::plain(Signal::Positive, q.state.clone(), 1 - q.action);
        assert!(matches!(
            run.submit_feedback(Some(wrong)),
            Err(TrainError::MismatchedFeedback { .. })
        ));
        assert_eq!(run.pending(), Some(&q));
    }

    #[test]
    fn failing_source_preserves_partial_log() {
        let config = tiny_config(EnvId::CartPole, Variant::Vanilla);
        struct FailAfter(u32);
        impl FeedbackSource for FailAfter {
            fn gather_feedback(
                &mut self,
                q: &PendingPair,
            ) -> Result<Option<FeedbackEvent>, FeedbackError> {
                if self.0 == 0 {
                    return Err(FeedbackError("trainer left".into()));
                }
                self.0 -= 1;
                Ok(always_positive(q))
            }
        }
        let err = run_training(config, Env::new(EnvId::CartPole), None, &mut FailAfter(5)).unwrap_err();
        assert_eq!(err.log.feedback_count, 5);
        assert!(matches!(err.error, TrainError::Feedback(_)));
    }

    /// Wraps an environment and replaces every reward with garbage.
    struct Poisoned(Env);

    impl Environment for Poisoned {
        fn id(&self) -> EnvId {
            self.0.id()
        }
        fn action_count(&self) -> usize {
            self.0.action_count()
        }
        fn observation_len(&self) -> usize {
            self.0.observation_len()
        }
        fn reset(&mut self, seed: u64) -> Observation {
            self.0.reset(seed)
        }
        fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
            let mut r = self.0.step(action)?;
            r.reward = f64::NAN;
            Ok(r)
        }
        fn state(&self) -> Option<&EnvState> {
            self.0.state()
        }
    }

    #[test]
    fn rewards_never_reach_the_learner() {
        let config = tiny_config(EnvId::GridWorld, Variant::Vanilla);
        let feedback = |q: &PendingPair| {
            let f = if q.action == 2 { Signal::Positive } else { Signal::Negative };
            Some(FeedbackEvent::plain(f, q.state.clone(), q.action))
        };
        let mut run_a = TrainingRun::new(config.clone(), Env::new(EnvId::GridWorld), None).unwrap();
        let mut run_b = TrainingRun::new(config, Poisoned(Env::new(EnvId::GridWorld)), None).unwrap();
        loop {
            let pa = run_a.advance().unwrap();
            let pb = run_b.advance().unwrap();
            assert_eq!(pa, pb);
            if pa == Progress::Finished {
                break;
            }
            let fa = feedback(run_a.pending().unwrap());
            let fb = feedback(run_b.pending().unwrap());
            run_a.submit_feedback(fa).unwrap();
            run_b.submit_feedback(fb).unwrap();
        }
        assert_eq!(run_a.model(), run_b.model());
    }
}
