//! Synthetic trainer: an exact expert per environment, noisy evaluative
//! feedback and counterfactual construction for every variant.
//!
//! RNG use per query is fixed: one frequency draw, one quality draw (plus a
//! uniform action when degraded), then whatever the counterfactual needs.
//! The learner's H values are never consulted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;
use thiserror::Error;

use crate::envs::cartpole::{PUSH_LEFT, PUSH_RIGHT};
use crate::envs::gridworld::FORWARD;
use crate::envs::mountaincar::{MountainCarState, COAST, GOAL_POSITION, LEFT, RIGHT};
use crate::envs::{Env, EnvError, EnvId, EnvState, Environment, GridConfig, Observation};
use crate::tamer::{
    CfTarget, Counterfactual, FeedbackError, FeedbackEvent, FeedbackSource, PendingPair, Signal,
    Variant,
};

/// Cartpole controller weights on `(x, x_dot, theta, theta_dot)`.
pub const CARTPOLE_WEIGHTS: [f64; 4] = [0.1, 0.3, 1.0, 0.3];
/// Expert episodes rolled out to fill a state bank.
pub const BANK_EPISODES: usize = 200;
/// Random-policy episodes tried when an action bucket is still empty.
const SUPPLEMENT_EPISODES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("goal is unreachable from the agent's position")]
    Unreachable,
    #[error("feedback {name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("no state found where the expert prefers action {0}")]
    EmptyBucket(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// First action of a shortest path (grid) or the closed-form controller
/// (physics tasks).
pub fn expert_action(state: &EnvState) -> Result<usize, OracleError> {
    match state {
        EnvState::Grid(g) => g
            .shortest_path()
            .map(|(_, a)| a)
            .ok_or(OracleError::Unreachable),
        EnvState::CartPole(s) => {
            let [wx, wxd, wt, wtd] = CARTPOLE_WEIGHTS;
            let u = wx * s.x + wxd * s.x_dot + wt * s.theta + wtd * s.theta_dot;
            Ok(if u > 0.0 { PUSH_RIGHT } else { PUSH_LEFT })
        }
        EnvState::MountainCar(s) => Ok(mountaincar_expert(s)),
    }
}

/// Energy pumping: accelerate in the direction of travel.
fn pump(s: &MountainCarState) -> usize {
    if s.velocity > 0.0 {
        RIGHT
    } else if s.velocity < 0.0 {
        LEFT
    } else {
        COAST
    }
}

/// Steps to the goal when taking `first` and pumping afterwards, capped at
/// one episode length.
fn steps_to_goal(s: &MountainCarState, first: usize) -> u32 {
    let mut s = MountainCarState {
        steps_taken: 0,
        ..*s
    };
    let mut action = first;
    loop {
        if s.position >= GOAL_POSITION {
            return s.steps_taken;
        }
        match s.step(action) {
            Ok(r) if !r.done => action = pump(&s),
            _ => return s.steps_taken + u32::from(s.position < GOAL_POSITION),
        }
    }
}

/// One-step lookahead over energy pumping: the action after which pumping
/// reaches the goal soonest, pumping itself winning ties.
pub fn mountaincar_expert(s: &MountainCarState) -> usize {
    let base = pump(s);
    let mut best = (steps_to_goal(s, base), base);
    for a in [LEFT, COAST, RIGHT] {
        let t = steps_to_goal(s, a);
        if t < best.0 {
            best = (t, a);
        }
    }
    best.1
}

/// Expert rule for one environment; a thin, deterministic wrapper around
/// [`expert_action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertPolicy {
    pub env: EnvId,
}

impl ExpertPolicy {
    pub fn new(env: EnvId) -> Self {
        ExpertPolicy { env }
    }

    pub fn action(&self, state: &EnvState) -> Result<usize, OracleError> {
        if state.env_id() != self.env {
            return Err(EnvError::WrongEnvironment {
                expected: self.env,
                found: state.env_id(),
            }
            .into());
        }
        expert_action(state)
    }

    /// Infallible form for rollouts over reachable states; falls back to
    /// moving forward if the planner ever fails.
    pub fn act(&self, state: &EnvState) -> usize {
        self.action(state).unwrap_or(FORWARD.min(self.env.action_count() - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub feedback_frequency: f64,
    pub feedback_quality: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl OracleConfig {
    pub fn perfect(variant: Variant, seed: u64) -> Self {
        OracleConfig {
            feedback_frequency: 1.0,
            feedback_quality: 1.0,
            variant,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        for (name, value) in [
            ("frequency", self.feedback_frequency),
            ("quality", self.feedback_quality),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(OracleError::Probability { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub observation: Observation,
    pub hidden: EnvState,
}

/// Expert-visited states indexed by the action the expert takes there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBank {
    buckets: Vec<Vec<BankEntry>>,
}

impl StateBank {
    pub fn action_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket(&self, action: usize) -> &[BankEntry] {
        &self.buckets[action]
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(entry, preferred action)` for every stored state.
    pub fn iter(&self) -> impl Iterator<Item = (&BankEntry, usize)> {
        self.buckets
            .iter()
            .enumerate()
            .flat_map(|(a, b)| b.iter().map(move |e| (e, a)))
    }

    fn nth(&self, mut k: usize, skip: Option<usize>) -> (&BankEntry, usize) {
        for (a, b) in self.buckets.iter().enumerate() {
            if Some(a) == skip {
                continue;
            }
            if k < b.len() {
                return (&b[k], a);
            }
            k -= b.len();
        }
        unreachable!("index within bank size")
    }

    /// Uniform entry from the whole bank.
    pub fn sample_any<R: Rng + ?Sized>(&self, rng: &mut R) -> (&BankEntry, usize) {
        self.nth(rng.gen_range(0..self.len()), None)
    }

    /// Uniform entry among states where the expert takes `action`; falls back
    /// to the whole bank if that bucket is empty.
    pub fn sample_bucket<R: Rng + ?Sized>(&self, action: usize, rng: &mut R) -> (&BankEntry, usize) {
        let b = &self.buckets[action];
        if b.is_empty() {
            log::warn!("state bank bucket {action} is empty; sampling from the whole bank");
            return self.sample_any(rng);
        }
        (&b[rng.gen_range(0..b.len())], action)
    }

    /// Uniform entry among states where the expert does not take `action`.
    pub fn sample_excluding<R: Rng + ?Sized>(
        &self,
        action: usize,
        rng: &mut R,
    ) -> (&BankEntry, usize) {
        let n = self.len() - self.buckets[action].len();
        if n == 0 {
            log::warn!("state bank holds only action {action}; sampling from the whole bank");
            return self.sample_any(rng);
        }
        self.nth(rng.gen_range(0..n), Some(action))
    }
}

/// Rolls out the expert for `n_episodes` seeded episodes and files every
/// distinct observation under the expert's action. Buckets the expert never
/// filled are topped up from random-policy states the expert would act on
/// with that action.
pub fn build_state_bank(
    env_id: EnvId,
    grid: GridConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<StateBank, OracleError> {
    let expert = ExpertPolicy::new(env_id);
    let mut env = Env::with_grid(env_id, grid);
    let n_actions = env.action_count();
    let mut buckets: Vec<Vec<BankEntry>> = vec![Vec::new(); n_actions];
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut record = |obs: &Observation, hidden: &EnvState, buckets: &mut Vec<Vec<BankEntry>>, only_empty: bool| -> Result<(), OracleError> {
        let a = expert.action(hidden)?;
        if only_empty && !buckets[a].is_empty() {
            return Ok(());
        }
        if seen.insert(obs.bits()) {
            buckets[a].push(BankEntry {
                observation: obs.clone(),
                hidden: hidden.clone(),
            });
        }
        Ok(())
    };

    for _ in 0..n_episodes {
        let mut obs = env.reset(rng.gen());
        loop {
            let hidden = env.state().cloned().ok_or(EnvError::NotReset)?;
            record(&obs, &hidden, &mut buckets, false)?;
            let r = env.step(expert.action(&hidden)?)?;
            if r.done {
                break;
            }
            obs = r.observation;
        }
    }

    let mut tries = 0;
    while buckets.iter().any(Vec::is_empty) && tries < SUPPLEMENT_EPISODES {
        tries += 1;
        let mut obs = env.reset(rng.gen());
        loop {
            let hidden = env.state().cloned().ok_or(EnvError::NotReset)?;
            record(&obs, &hidden, &mut buckets, true)?;
            let r = env.step(rng.gen_range(0..n_actions))?;
            if r.done {
                break;
            }
            obs = r.observation;
        }
    }
    if let Some(a) = buckets.iter().position(Vec::is_empty) {
        return Err(OracleError::EmptyBucket(a));
    }
    Ok(StateBank { buckets })
}

/// The oracle's working opinion of the best action: the expert's choice,
/// replaced by a uniform action with probability `1 - quality`. Returns
/// `(preferred, degraded)`.
pub fn preferred_action<R: Rng + ?Sized>(
    expert: usize,
    quality: f64,
    n_actions: usize,
    rng: &mut R,
) -> (usize, bool) {
    if rng.gen::<f64>() < quality {
        (expert, false)
    } else {
        (rng.gen_range(0..n_actions), true)
    }
}

/// Counterfactual for one event, or `None` where the variant attaches none.
/// Returns the triple and whether the contrastive term is enabled.
#[allow(clippy::too_many_arguments)]
pub fn construct_counterfactual<R: Rng + ?Sized>(
    variant: Variant,
    f: Signal,
    preferred: usize,
    degraded: bool,
    a_prev: usize,
    n_actions: usize,
    bank: &StateBank,
    rng: &mut R,
) -> Option<(Counterfactual, bool)> {
    let upward = |target| Counterfactual {
        f_cf: Signal::Positive,
        target,
    };
    let downward = |target| Counterfactual {
        f_cf: Signal::Negative,
        target,
    };
    match (variant, f) {
        (Variant::Vanilla, _) => None,
        (Variant::Cfa, Signal::Negative) => {
            Some((upward(CfTarget::Action { action: preferred }), true))
        }
        (Variant::Cfs, Signal::Negative) => {
            let (entry, _) = if degraded {
                bank.sample_any(rng)
            } else {
                bank.sample_bucket(a_prev, rng)
            };
            let state = entry.observation.clone();
            Some((upward(CfTarget::State { state }), true))
        }
        (Variant::CfaDown, Signal::Positive) => {
            if n_actions < 2 {
                return None;
            }
            let mut action = rng.gen_range(0..n_actions - 1);
            if action >= preferred {
                action += 1;
            }
            Some((downward(CfTarget::Action { action }), true))
        }
        (Variant::CfsDown, Signal::Positive) => {
            let (entry, _) = if degraded {
                bank.sample_any(rng)
            } else {
                bank.sample_excluding(a_prev, rng)
            };
            let state = entry.observation.clone();
            Some((downward(CfTarget::State { state }), true))
        }
        (Variant::RandomExtra, Signal::Negative) => {
            let (entry, action) = bank.sample_any(rng);
            let state = entry.observation.clone();
            Some((upward(CfTarget::Sample { state, action }), false))
        }
        _ => None,
    }
}

/// One oracle query on the previous pair.
pub fn gather_feedback<R: Rng + ?Sized>(
    config: &OracleConfig,
    bank: &StateBank,
    query: &PendingPair,
    rng: &mut R,
) -> Result<Option<FeedbackEvent>, OracleError> {
    if rng.gen::<f64>() >= config.feedback_frequency {
        return Ok(None);
    }
    let n_actions = query.hidden.env_id().action_count();
    let expert = expert_action(&query.hidden)?;
    let (preferred, degraded) = preferred_action(expert, config.feedback_quality, n_actions, rng);
    let f = if query.action == preferred {
        Signal::Positive
    } else {
        Signal::Negative
    };
    let cf = construct_counterfactual(
        config.variant,
        f,
        preferred,
        degraded,
        query.action,
        n_actions,
        bank,
        rng,
    );
    Ok(Some(match cf {
        Some((cf, contrastive)) => {
            FeedbackEvent::with_counterfactual(f, query.state.clone(), query.action, cf, contrastive)
        }
        None => FeedbackEvent::plain(f, query.state.clone(), query.action),
    }))
}

/// A stateful synthetic trainer for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    config: OracleConfig,
    bank: Arc<StateBank>,
    rng: ChaCha8Rng,
}

impl Oracle {
    pub fn new(config: OracleConfig, bank: Arc<StateBank>) -> Result<Self, OracleError> {
        config.validate()?;
        Ok(Oracle {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            bank,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn bank(&self) -> &StateBank {
        &self.bank
    }

    pub fn query(&mut self, query: &PendingPair) -> Result<Option<FeedbackEvent>, OracleError> {
        gather_feedback(&self.config, &self.bank, query, &mut self.rng)
    }
}

impl FeedbackSource for Oracle {
    fn gather_feedback(
        &mut self,
        query: &PendingPair,
    ) -> Result<Option<FeedbackEvent>, FeedbackError> {
        self.query(query).map_err(|e| FeedbackError(e.to_string()))
    }
}
