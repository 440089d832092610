use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, Observation, StepResult};

pub const LEFT: usize = 0;
pub const COAST: usize = 1;
pub const RIGHT: usize = 2;
pub const ACTION_NAMES: [&str; 3] = ["left", "coast", "right"];

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const MAX_STEPS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
    pub steps_taken: u32,
}

impl MountainCarState {
    /// Position uniform in [-0.6, -0.4], at rest.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MountainCarState {
            position: rng.gen_range(-0.6..=-0.4),
            velocity: 0.0,
            steps_taken: 0,
        }
    }

    pub fn encode(&self) -> Observation {
        Observation(vec![self.position, self.velocity])
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if action > RIGHT {
            return Err(EnvError::InvalidAction {
                action,
                count: ACTION_NAMES.len(),
            });
        }
        let push = action as f64 - 1.0;
        self.velocity += push * FORCE - GRAVITY * (3.0 * self.position).cos();
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
        self.position += self.velocity;
        self.position = self.position.clamp(MIN_POSITION, MAX_POSITION);
        if self.position == MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.steps_taken += 1;
        Ok(StepResult {
            observation: self.encode(),
            reward: -1.0,
            done: self.position >= GOAL_POSITION || self.steps_taken >= MAX_STEPS,
            info: super::EnvState::MountainCar(*self),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coasting_from_rest() {
        let mut s = MountainCarState {
            position: -0.5,
            velocity: 0.0,
            steps_taken: 0,
        };
        s.step(COAST).unwrap();
        let expected = -0.0025 * (-1.5f64).cos();
        assert!((s.velocity - expected).abs() < 1e-18);
        assert!((s.position - (-0.5 + expected)).abs() < 1e-15);
    }

    #[test]
    fn velocity_clamped() {
        let mut s = MountainCarState {
            position: -0.5,
            velocity: MAX_SPEED,
            steps_taken: 0,
        };
        s.step(RIGHT).unwrap();
        assert!(s.velocity <= MAX_SPEED);
    }

    #[test]
    fn energy_pumping_reaches_goal() {
        for seed in 0..20 {
            let mut s = MountainCarState::random(seed);
            let mut done = false;
            while !done {
                let a = if s.velocity > 0.0 {
                    RIGHT
                } else if s.velocity < 0.0 {
                    LEFT
                } else {
                    COAST
                };
                done = s.step(a).unwrap().done;
            }
            assert!(s.position >= GOAL_POSITION, "seed {seed}");
            assert!(s.steps_taken < MAX_STEPS);
        }
    }

    #[test]
    fn left_wall_stops_car() {
        let mut s = MountainCarState {
            position: -1.19,
            velocity: -0.05,
            steps_taken: 0,
        };
        s.step(LEFT).unwrap();
        assert_eq!(s.position, MIN_POSITION);
        assert_eq!(s.velocity, 0.0);
    }
}
