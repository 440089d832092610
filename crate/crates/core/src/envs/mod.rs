//! Episodic discrete-action environments and score normalisation.
//!
//! Environmental reward is only ever used by evaluation code; the learner sees
//! [`Observation`]s and nothing else.

pub mod cartpole;
pub mod gridworld;
pub mod mountaincar;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use cartpole::CartPoleState;
pub use gridworld::{Cell, Direction, GridConfig, GridRule, GridState};
pub use mountaincar::MountainCarState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action {action} is not one of the {count} available actions")]
    InvalidAction { action: usize, count: usize },
    #[error("episode is over; reset before stepping")]
    EpisodeOver,
    #[error("environment has not been reset")]
    NotReset,
    #[error("state belongs to {found} but the environment is {expected}")]
    WrongEnvironment { expected: EnvId, found: EnvId },
    #[error("invalid grid layout: {0}")]
    InvalidGrid(GridRule),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    GridWorld,
    CartPole,
    MountainCar,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::GridWorld, EnvId::CartPole, EnvId::MountainCar];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::GridWorld => "gridworld",
            EnvId::CartPole => "cartpole",
            EnvId::MountainCar => "mountaincar",
        }
    }

    pub fn action_names(self) -> &'static [&'static str] {
        match self {
            EnvId::GridWorld => &gridworld::ACTION_NAMES,
            EnvId::CartPole => &cartpole::ACTION_NAMES,
            EnvId::MountainCar => &mountaincar::ACTION_NAMES,
        }
    }

    pub fn action_count(self) -> usize {
        self.action_names().len()
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

/// What the learner sees of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bitwise identity, usable as a hash-set key.
    pub fn bits(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

/// Full hidden state of any environment. Visible to oracles, never to the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum EnvState {
    #[serde(rename = "gridworld")]
    Grid(GridState),
    CartPole(CartPoleState),
    MountainCar(MountainCarState),
}

impl EnvState {
    pub fn env_id(&self) -> EnvId {
        match self {
            EnvState::Grid(_) => EnvId::GridWorld,
            EnvState::CartPole(_) => EnvId::CartPole,
            EnvState::MountainCar(_) => EnvId::MountainCar,
        }
    }

    pub fn encode(&self) -> Observation {
        match self {
            EnvState::Grid(s) => s.encode(),
            EnvState::CartPole(s) => s.encode(),
            EnvState::MountainCar(s) => s.encode(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        match self {
            EnvState::Grid(s) => s.steps_taken,
            EnvState::CartPole(s) => s.steps_taken,
            EnvState::MountainCar(s) => s.steps_taken,
        }
    }
}

/// Free-function form of observation encoding.
pub fn encode_observation(state: &EnvState) -> Observation {
    state.encode()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: EnvState,
}

/// Minimal episodic interface the training loop is written against.
pub trait Environment {
    fn id(&self) -> EnvId;
    fn action_count(&self) -> usize;
    fn observation_len(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
    /// Hidden state of the current episode, if one has been started.
    fn state(&self) -> Option<&EnvState>;
}

/// Concrete environment for any [`EnvId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Env {
    id: EnvId,
    grid: GridConfig,
    state: Option<EnvState>,
    done: bool,
}

impl Env {
    pub fn new(id: EnvId) -> Self {
        Env::with_grid(id, GridConfig::default())
    }

    pub fn with_grid(id: EnvId, grid: GridConfig) -> Self {
        Env {
            id,
            grid,
            state: None,
            done: false,
        }
    }

    /// Resumes mid-episode from a hidden state.
    pub fn from_state(state: EnvState, done: bool) -> Result<Self, EnvError> {
        let grid = match &state {
            EnvState::Grid(g) => {
                g.validate().map_err(EnvError::InvalidGrid)?;
                GridConfig {
                    width: g.width,
                    height: g.height,
                    view_size: g.view_size,
                }
            }
            _ => GridConfig::default(),
        };
        Ok(Env {
            id: state.env_id(),
            grid,
            state: Some(state),
            done,
        })
    }

    pub fn grid_config(&self) -> GridConfig {
        self.grid
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn max_steps(&self) -> u32 {
        match self.id {
            EnvId::GridWorld => self.grid.max_steps(),
            EnvId::CartPole => cartpole::MAX_STEPS,
            EnvId::MountainCar => mountaincar::MAX_STEPS,
        }
    }

    /// A fresh initial state for `seed`, without touching `self`.
    pub fn initial_state(&self, seed: u64) -> EnvState {
        match self.id {
            EnvId::GridWorld => EnvState::Grid(GridState::random(&self.grid, seed)),
            EnvId::CartPole => EnvState::CartPole(CartPoleState::random(seed)),
            EnvId::MountainCar => EnvState::MountainCar(MountainCarState::random(seed)),
        }
    }
}

impl Environment for Env {
    fn id(&self) -> EnvId {
        self.id
    }

    fn action_count(&self) -> usize {
        self.id.action_count()
    }

    fn observation_len(&self) -> usize {
        match self.id {
            EnvId::GridWorld => self.grid.observation_len(),
            EnvId::CartPole => 4,
            EnvId::MountainCar => 2,
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let state = self.initial_state(seed);
        let obs = state.encode();
        self.state = Some(state);
        self.done = false;
        obs
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let result = match self.state.as_mut().ok_or(EnvError::NotReset)? {
            EnvState::Grid(s) => s.step(action)?,
            EnvState::CartPole(s) => s.step(action)?,
            EnvState::MountainCar(s) => s.step(action)?,
        };
        self.done = result.done;
        Ok(result)
    }

    fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }
}

/// Normalisation constants: mean raw return of the random and expert policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub random: f64,
    pub expert: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("degenerate norms for {env}: expert {expert} does not exceed random {random}")]
    Degenerate { env: EnvId, random: f64, expert: f64 },
    #[error("expert failed on {env} eval seed {seed}: return {ret} is no better than random {random}")]
    ExpertFailed {
        env: EnvId,
        seed: u64,
        ret: f64,
        random: f64,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl Norms {
    pub fn new(env: EnvId, random: f64, expert: f64) -> Result<Self, CalibrationError> {
        if !(expert > random) || !random.is_finite() || !expert.is_finite() {
            return Err(CalibrationError::Degenerate {
                env,
                random,
                expert,
            });
        }
        Ok(Norms { random, expert })
    }
}

/// `(raw - random) / (expert - random)`, deliberately unclamped.
pub fn normalized_score(raw_return: f64, norms: &Norms) -> f64 {
    (raw_return - norms.random) / (norms.expert - norms.random)
}

/// Plays one episode from `seed` with `policy(observation, hidden state)`.
/// Returns the raw (undiscounted) return.
pub fn run_episode<F>(env: &mut Env, seed: u64, mut policy: F) -> Result<f64, EnvError>
where
    F: FnMut(&Observation, &EnvState) -> usize,
{
    let mut obs = env.reset(seed);
    let mut total = 0.0;
    loop {
        let action = policy(&obs, env.state().ok_or(EnvError::NotReset)?);
        let r = env.step(action)?;
        total += r.reward;
        if r.done {
            return Ok(total);
        }
        obs = r.observation;
    }
}

/// Default number of seeded episodes averaged for the random-policy norm.
pub const RANDOM_EPISODES: usize = 1000;

/// Mean raw return of the uniform-random policy over `episodes` episodes.
/// Episode `i` starts from `start_seeds[i % len]` and draws its actions from
/// its own RNG stream, so the norm describes the same starts the evaluation
/// uses.
pub fn random_policy_return(
    env: &mut Env,
    episodes: usize,
    start_seeds: &[u64],
) -> Result<f64, EnvError> {
    let n = env.action_count();
    let mut total = 0.0;
    for i in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        rng.set_stream(1);
        let seed = start_seeds[i % start_seeds.len()];
        total += run_episode(env, seed, |_, _| rng.gen_range(0..n))?;
    }
    Ok(total / episodes as f64)
}

/// Computes `(R_random, R_expert)` for one environment.
pub fn calibrate_norms<F>(
    env: &mut Env,
    mut expert: F,
    random_episodes: usize,
    eval_seeds: &[u64],
) -> Result<Norms, CalibrationError>
where
    F: FnMut(&EnvState) -> usize,
{
    let random = random_policy_return(env, random_episodes, eval_seeds)?;
    let mut returns = Vec::with_capacity(eval_seeds.len());
    for &seed in eval_seeds {
        let ret = run_episode(env, seed, |_, s| expert(s))?;
        if ret <= random {
            return Err(CalibrationError::ExpertFailed {
                env: env.id(),
                seed,
                ret,
                random,
            });
        }
        returns.push(ret);
    }
    let expert = returns.iter().sum::<f64>() / returns.len() as f64;
    Norms::new(env.id(), random, expert)
}
