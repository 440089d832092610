//! MiniGrid-style empty room with a randomly placed goal.
//!
//! Coordinates are `(x, y)` with `x` to the right and `y` downwards; north is
//! `y - 1`. The agent sees a `view_size × view_size` window in front of it,
//! rotated into its own frame, with the agent at the bottom-center cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use super::{EnvError, Observation, StepResult};

pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;
pub const ACTION_NAMES: [&str; 3] = ["turn_left", "turn_right", "forward"];

/// One-hot channels per view cell.
pub const CHANNELS: usize = 4;
const CH_EMPTY: usize = 0;
const CH_WALL: usize = 1;
const CH_GOAL: usize = 2;
const CH_UNSEEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Empty,
    Wall,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn turn_left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    pub fn turn_right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    /// Unit step `(dx, dy)` when moving forward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub view_size: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 8,
            height: 8,
            view_size: 7,
        }
    }
}

impl GridConfig {
    pub fn max_steps(&self) -> u32 {
        (4 * self.width * self.height) as u32
    }

    pub fn observation_len(&self) -> usize {
        self.view_size * self.view_size * CHANNELS
    }
}

/// A rule of [`GridState::validate`] that a layout violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    Dimensions,
    BorderWalls,
    SingleGoal,
    GoalPosition,
    AgentOutOfBounds,
    AgentInWall,
    AgentOnGoal,
    StepBudget,
}

impl GridRule {
    pub fn name(self) -> &'static str {
        match self {
            GridRule::Dimensions => "dimensions",
            GridRule::BorderWalls => "border_walls",
            GridRule::SingleGoal => "single_goal",
            GridRule::GoalPosition => "goal_position",
            GridRule::AgentOutOfBounds => "agent_out_of_bounds",
            GridRule::AgentInWall => "agent_in_wall",
            GridRule::AgentOnGoal => "agent_on_goal",
            GridRule::StepBudget => "step_budget",
        }
    }
}

impl fmt::Display for GridRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub width: usize,
    pub height: usize,
    /// Row-major, `cells[y * width + x]`.
    pub cells: Vec<Cell>,
    pub agent_pos: (usize, usize),
    pub agent_dir: Direction,
    pub goal_pos: (usize, usize),
    pub steps_taken: u32,
    pub max_steps: u32,
    pub view_size: usize,
}

impl GridState {
    /// Fresh episode: border walls, goal and agent pose drawn from `seed`.
    pub fn random(config: &GridConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (config.width, config.height);
        let mut cells = vec![Cell::Empty; w * h];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    cells[y * w + x] = Cell::Wall;
                }
            }
        }
        let goal_pos = (rng.gen_range(1..w - 1), rng.gen_range(1..h - 1));
        cells[goal_pos.1 * w + goal_pos.0] = Cell::Goal;
        let agent_pos = loop {
            let p = (rng.gen_range(1..w - 1), rng.gen_range(1..h - 1));
            if p != goal_pos {
                break p;
            }
        };
        let agent_dir = Direction::ALL[rng.gen_range(0..4)];
        GridState {
            width: w,
            height: h,
            cells,
            agent_pos,
            agent_dir,
            goal_pos,
            steps_taken: 0,
            max_steps: config.max_steps(),
            view_size: config.view_size,
        }
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    /// Cell at signed coordinates, `None` outside the grid.
    pub fn cell_at(&self, x: i64, y: i64) -> Option<Cell> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.cell(x as usize, y as usize))
        }
    }

    pub fn validate(&self) -> Result<(), GridRule> {
        let (w, h) = (self.width, self.height);
        if w < 3 || h < 3 || self.cells.len() != w * h || self.view_size == 0 {
            return Err(GridRule::Dimensions);
        }
        for y in 0..h {
            for x in 0..w {
                let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
                if border && self.cell(x, y) != Cell::Wall {
                    return Err(GridRule::BorderWalls);
                }
            }
        }
        let goals: Vec<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Goal)
            .map(|(i, _)| i)
            .collect();
        if goals.len() != 1 {
            return Err(GridRule::SingleGoal);
        }
        if goals[0] != self.goal_pos.1 * w + self.goal_pos.0 || self.goal_pos.0 >= w {
            return Err(GridRule::GoalPosition);
        }
        let (ax, ay) = self.agent_pos;
        if ax >= w || ay >= h {
            return Err(GridRule::AgentOutOfBounds);
        }
        match self.cell(ax, ay) {
            Cell::Wall => return Err(GridRule::AgentInWall),
            Cell::Goal => return Err(GridRule::AgentOnGoal),
            Cell::Empty => {}
        }
        if self.steps_taken > self.max_steps {
            return Err(GridRule::StepBudget);
        }
        Ok(())
    }

    /// Egocentric one-hot view, flattened as `((row * view + col) * 4 + channel)`.
    /// Row 0 is farthest ahead; the agent sits at `(view / 2, view - 1)`.
    pub fn encode(&self) -> Observation {
        let v = self.view_size;
        let mut out = vec![0.0; v * v * CHANNELS];
        let (fx, fy) = self.agent_dir.delta();
        let (rx, ry) = self.agent_dir.turn_right().delta();
        let (ax, ay) = (self.agent_pos.0 as i64, self.agent_pos.1 as i64);
        let half = (v / 2) as i64;
        for row in 0..v {
            let ahead = (v - 1 - row) as i64;
            for col in 0..v {
                let side = col as i64 - half;
                let x = ax + fx * ahead + rx * side;
                let y = ay + fy * ahead + ry * side;
                let channel = match self.cell_at(x, y) {
                    None => CH_UNSEEN,
                    Some(Cell::Empty) => CH_EMPTY,
                    Some(Cell::Wall) => CH_WALL,
                    Some(Cell::Goal) => CH_GOAL,
                };
                out[(row * v + col) * CHANNELS + channel] = 1.0;
            }
        }
        Observation(out)
    }

    /// Flat index of the channel for the view cell directly ahead of the agent.
    pub fn ahead_index(view_size: usize, channel: Cell) -> usize {
        let ch = match channel {
            Cell::Empty => CH_EMPTY,
            Cell::Wall => CH_WALL,
            Cell::Goal => CH_GOAL,
        };
        ((view_size - 2) * view_size + view_size / 2) * CHANNELS + ch
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        match action {
            TURN_LEFT => self.agent_dir = self.agent_dir.turn_left(),
            TURN_RIGHT => self.agent_dir = self.agent_dir.turn_right(),
            FORWARD => {}
            _ => {
                return Err(EnvError::InvalidAction {
                    action,
                    count: ACTION_NAMES.len(),
                })
            }
        }
        self.steps_taken += 1;
        let mut reward = 0.0;
        let mut done = false;
        if action == FORWARD {
            let (dx, dy) = self.agent_dir.delta();
            let nx = self.agent_pos.0 as i64 + dx;
            let ny = self.agent_pos.1 as i64 + dy;
            match self.cell_at(nx, ny) {
                Some(Cell::Empty) => self.agent_pos = (nx as usize, ny as usize),
                Some(Cell::Goal) => {
                    self.agent_pos = (nx as usize, ny as usize);
                    reward = 1.0 - 0.9 * self.steps_taken as f64 / self.max_steps as f64;
                    done = true;
                }
                Some(Cell::Wall) | None => {}
            }
        }
        if !done && self.steps_taken >= self.max_steps {
            done = true;
        }
        Ok(StepResult {
            observation: self.encode(),
            reward,
            done,
            info: super::EnvState::Grid(self.clone()),
        })
    }

    /// Length of the shortest turn/forward action sequence reaching the goal,
    /// together with the first action of one such sequence. `None` if the goal
    /// cannot be reached.
    pub fn shortest_path(&self) -> Option<(u32, usize)> {
        use std::collections::VecDeque;
        let (w, h) = (self.width, self.height);
        let idx = |x: usize, y: usize, d: Direction| (y * w + x) * 4 + d.index();
        let mut first = vec![usize::MAX; w * h * 4];
        let mut dist = vec![u32::MAX; w * h * 4];
        let start = (self.agent_pos.0, self.agent_pos.1, self.agent_dir);
        dist[idx(start.0, start.1, start.2)] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some((x, y, d)) = queue.pop_front() {
            let here = idx(x, y, d);
            for action in [FORWARD, TURN_LEFT, TURN_RIGHT] {
                let (nx, ny, nd) = match action {
                    TURN_LEFT => (x, y, d.turn_left()),
                    TURN_RIGHT => (x, y, d.turn_right()),
                    _ => {
                        let (dx, dy) = d.delta();
                        let (tx, ty) = (x as i64 + dx, y as i64 + dy);
                        match self.cell_at(tx, ty) {
                            Some(Cell::Goal) => {
                                let f = if here == idx(start.0, start.1, start.2) {
                                    action
                                } else {
                                    first[here]
                                };
                                return Some((dist[here] + 1, f));
                            }
                            Some(Cell::Empty) => (tx as usize, ty as usize, d),
                            _ => continue,
                        }
                    }
                };
                let next = idx(nx, ny, nd);
                if dist[next] == u32::MAX {
                    dist[next] = dist[here] + 1;
                    first[next] = if here == idx(start.0, start.1, start.2) {
                        action
                    } else {
                        first[here]
                    };
                    queue.push_back((nx, ny, nd));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_room(w: usize, h: usize, agent: (usize, usize), dir: Direction, goal: (usize, usize)) -> GridState {
        let mut cells = vec![Cell::Empty; w * h];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    cells[y * w + x] = Cell::Wall;
                }
            }
        }
        cells[goal.1 * w + goal.0] = Cell::Goal;
        GridState {
            width: w,
            height: h,
            cells,
            agent_pos: agent,
            agent_dir: dir,
            goal_pos: goal,
            steps_taken: 0,
            max_steps: (4 * w * h) as u32,
            view_size: 7,
        }
    }

    #[test]
    fn forward_into_wall_is_blocked() {
        let mut s = open_room(8, 8, (1, 1), Direction::North, (5, 5));
        let r = s.step(FORWARD).unwrap();
        assert_eq!(s.agent_pos, (1, 1));
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn reaching_goal_pays_time_discounted_reward() {
        let mut s = open_room(8, 8, (3, 3), Direction::East, (4, 3));
        s.steps_taken = 10;
        let r = s.step(FORWARD).unwrap();
        assert!(r.done);
        let expected = 1.0 - 0.9 * 11.0 / 256.0;
        assert!((r.reward - expected).abs() < 1e-15);
        assert!(r.reward > 0.0);
    }

    #[test]
    fn four_left_turns_are_identity() {
        let mut s = open_room(8, 8, (3, 3), Direction::South, (5, 5));
        for _ in 0..4 {
            s.step(TURN_LEFT).unwrap();
        }
        assert_eq!(s.agent_dir, Direction::South);
        for d in Direction::ALL {
            assert_eq!(d.turn_left().turn_right(), d);
        }
    }

    #[test]
    fn timeout_ends_with_zero_reward() {
        let mut s = open_room(8, 8, (3, 3), Direction::South, (5, 5));
        s.steps_taken = s.max_steps - 1;
        let r = s.step(TURN_LEFT).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn unknown_action_rejected() {
        let mut s = open_room(8, 8, (3, 3), Direction::South, (5, 5));
        assert!(matches!(s.step(3), Err(EnvError::InvalidAction { action: 3, .. })));
    }

    #[test]
    fn facing_wall_sets_wall_channel_ahead() {
        let s = open_room(8, 8, (1, 1), Direction::West, (5, 5));
        let obs = s.encode();
        assert_eq!(obs.0[GridState::ahead_index(7, Cell::Wall)], 1.0);
        assert_eq!(obs.0[GridState::ahead_index(7, Cell::Empty)], 0.0);
    }

    #[test]
    fn encoding_is_one_hot_per_cell() {
        let s = GridState::random(&GridConfig::default(), 17);
        let obs = s.encode();
        assert_eq!(obs.0.len(), 7 * 7 * 4);
        for cell in obs.0.chunks(CHANNELS) {
            assert_eq!(cell.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn encoding_is_translation_invariant() {
        // Large room so the whole view stays inside the border in both layouts.
        let a = open_room(20, 20, (8, 12), Direction::North, (10, 9));
        let b = open_room(20, 20, (11, 14), Direction::North, (13, 11));
        assert_eq!(a.encode(), b.encode());
        let c = open_room(20, 20, (11, 14), Direction::East, (13, 11));
        assert_ne!(a.encode(), c.encode());
    }

    #[test]
    fn encoding_rotates_with_agent() {
        // Goal two cells east of an east-facing agent is seen straight ahead,
        // exactly as a goal two cells north of a north-facing agent.
        let east = open_room(20, 20, (8, 8), Direction::East, (10, 8));
        let north = open_room(20, 20, (8, 8), Direction::North, (8, 6));
        assert_eq!(east.encode(), north.encode());
    }

    #[test]
    fn shortest_path_first_actions() {
        let s = open_room(8, 8, (3, 3), Direction::East, (4, 3));
        assert_eq!(s.shortest_path(), Some((1, FORWARD)));
        let s = open_room(8, 8, (3, 3), Direction::North, (4, 3));
        assert_eq!(s.shortest_path(), Some((2, TURN_RIGHT)));
        let s = open_room(8, 8, (3, 3), Direction::South, (3, 1));
        let (len, _) = s.shortest_path().unwrap();
        assert_eq!(len, 4);
    }

    #[test]
    fn validate_names_violated_rule() {
        let mut s = open_room(8, 8, (3, 3), Direction::East, (4, 3));
        assert_eq!(s.validate(), Ok(()));
        s.agent_pos = (0, 3);
        assert_eq!(s.validate(), Err(GridRule::AgentInWall));
        let mut s = open_room(8, 8, (3, 3), Direction::East, (4, 3));
        s.cells[0] = Cell::Empty;
        assert_eq!(s.validate(), Err(GridRule::BorderWalls));
        let mut s = open_room(8, 8, (3, 3), Direction::East, (4, 3));
        s.cells[2 * 8 + 2] = Cell::Goal;
        assert_eq!(s.validate(), Err(GridRule::SingleGoal));
    }
}
