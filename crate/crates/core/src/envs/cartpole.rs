use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, Observation, StepResult};

pub const PUSH_LEFT: usize = 0;
pub const PUSH_RIGHT: usize = 1;
pub const ACTION_NAMES: [&str; 2] = ["push_left", "push_right"];

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const MAX_STEPS: u32 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub steps_taken: u32,
}

impl CartPoleState {
    /// Every component uniform in ±0.05.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.gen_range(-0.05..=0.05);
        CartPoleState {
            x: u(),
            x_dot: u(),
            theta: u(),
            theta_dot: u(),
            steps_taken: 0,
        }
    }

    pub fn encode(&self) -> Observation {
        Observation(vec![self.x, self.x_dot, self.theta, self.theta_dot])
    }

    pub fn failed(&self) -> bool {
        self.x.abs() > X_LIMIT || self.theta.abs() > THETA_LIMIT
    }

    /// Accelerations are computed from the pre-step state, then positions and
    /// velocities are advanced together from their pre-step values.
    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let force = match action {
            PUSH_LEFT => -FORCE,
            PUSH_RIGHT => FORCE,
            _ => {
                return Err(EnvError::InvalidAction {
                    action,
                    count: ACTION_NAMES.len(),
                })
            }
        };
        let total_mass = CART_MASS + POLE_MASS;
        let pole_mass_length = POLE_MASS * HALF_LENGTH;
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_mass_length * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

        let prev = *self;
        self.x = prev.x + DT * prev.x_dot;
        self.x_dot = prev.x_dot + DT * x_acc;
        self.theta = prev.theta + DT * prev.theta_dot;
        self.theta_dot = prev.theta_dot + DT * theta_acc;
        self.steps_taken += 1;

        Ok(StepResult {
            observation: self.encode(),
            reward: 1.0,
            done: self.failed() || self.steps_taken >= MAX_STEPS,
            info: super::EnvState::CartPole(*self),
        })
    }
}
