//! The classic 13x13 four-rooms gridworld.
//!
//! Four actions (up/down/left/right). With probability 1/3 the agent slips
//! to a uniformly random other direction. Moves into walls leave the agent
//! in place. Reaching the goal yields reward 1 and ends the episode;
//! everything else is reward 0. Observations are one-hot over walkable
//! cells.

use super::{Env, EnvAction, EnvError, EnvSpec, StepResult};
use crate::approx::ActionSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;

const LAYOUT: [&str; 13] = [
    "wwwwwwwwwwwww",
    "w     w     w",
    "w     w     w",
    "w           w",
    "w     w     w",
    "w     w     w",
    "ww wwww     w",
    "w     www www",
    "w     w     w",
    "w     w     w",
    "w           w",
    "w     w     w",
    "wwwwwwwwwwwww",
];

pub const SLIP_PROB: f64 = 1.0 / 3.0;

/// (row, col) deltas for up, down, left, right.
const MOVES: [(i32, i32); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

pub struct FourRooms {
    walkable: Vec<(usize, usize)>,
    cell_index: Vec<Vec<Option<usize>>>,
    start: (usize, usize),
    goal: (usize, usize),
    max_episode_steps: usize,
    agent: (usize, usize),
    steps: usize,
    finished: bool,
    rng: ChaCha20Rng,
}

impl FourRooms {
    pub fn new(max_episode_steps: usize) -> Self {
        let mut walkable = Vec::new();
        let mut cell_index = vec![vec![None; 13]; 13];
        for (r, row) in LAYOUT.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                if ch == ' ' {
                    cell_index[r][c] = Some(walkable.len());
                    walkable.push((r, c));
                }
            }
        }
        let mut env = Self {
            walkable,
            cell_index,
            start: (1, 1),   // top-left room
            goal: (11, 11),  // opposite corner room
            max_episode_steps,
            agent: (1, 1),
            steps: 0,
            finished: true,
            rng: ChaCha20Rng::seed_from_u64(0),
        };
        env.agent = env.start;
        env
    }

    pub fn num_cells(&self) -> usize {
        self.walkable.len()
    }

    pub fn agent_cell(&self) -> (usize, usize) {
        self.agent
    }

    fn one_hot(&self, cell: (usize, usize)) -> Vec<f64> {
        let mut obs = vec![0.0; self.walkable.len()];
        let idx = self.cell_index[cell.0][cell.1].expect("agent is on a walkable cell");
        obs[idx] = 1.0;
        obs
    }

    fn is_walkable(&self, r: i32, c: i32) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < 13
            && (c as usize) < 13
            && self.cell_index[r as usize][c as usize].is_some()
    }
}

impl Env for FourRooms {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: self.walkable.len(),
            action_spec: ActionSpec::Discrete(4),
            max_episode_steps: self.max_episode_steps,
            intrinsic_reward_names: Vec::new(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha20Rng::seed_from_u64(seed);
        self.agent = self.start;
        self.steps = 0;
        self.finished = false;
        self.one_hot(self.agent)
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let &EnvAction::Discrete(dir) = action else {
            return Err(EnvError::InvalidAction("expected a discrete action".into()));
        };
        if dir >= 4 {
            return Err(EnvError::InvalidAction(format!(
                "direction {dir} out of range 0..4"
            )));
        }
        let executed = if self.rng.gen::<f64>() < SLIP_PROB {
            // uniformly random among the three other directions
            let mut slip = self.rng.gen_range(0..3);
            if slip >= dir {
                slip += 1;
            }
            slip
        } else {
            dir
        };
        let (dr, dc) = MOVES[executed];
        let (nr, nc) = (self.agent.0 as i32 + dr, self.agent.1 as i32 + dc);
        if self.is_walkable(nr, nc) {
            self.agent = (nr as usize, nc as usize);
        }
        self.steps += 1;
        let done = self.agent == self.goal;
        let truncated = !done && self.steps >= self.max_episode_steps;
        self.finished = done || truncated;
        Ok(StepResult {
            obs: self.one_hot(self.agent),
            reward: if done { 1.0 } else { 0.0 },
            intrinsic: BTreeMap::new(),
            done,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_one_hot() {
        let mut env = FourRooms::new(500);
        let a = env.reset(5);
        let b = env.reset(5);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(a.iter().filter(|&&v| v == 0.0).count(), a.len() - 1);
    }

    #[test]
    fn layout_has_expected_structure() {
        let env = FourRooms::new(500);
        // 4 rooms of 25 cells plus 4 doorways
        assert_eq!(env.num_cells(), 104);
    }

    #[test]
    fn walls_block_movement() {
        let mut env = FourRooms::new(500);
        env.reset(0);
        // From (1,1), up and left both hit the outer wall. Slips can move the
        // agent, so force each executed direction by exhausting draws: instead
        // assert the agent never leaves walkable cells over a long random walk.
        for t in 0..5000 {
            let a = EnvAction::Discrete(t % 4);
            let r = env.step(&a).unwrap();
            let (row, col) = env.agent_cell();
            assert!(LAYOUT[row].as_bytes()[col] == b' ');
            if r.done || r.truncated {
                env.reset(t as u64);
            }
        }
    }

    #[test]
    fn identical_seed_and_actions_give_identical_trajectories() {
        let run = |seed: u64| {
            let mut env = FourRooms::new(300);
            let mut obs = vec![env.reset(seed)];
            for t in 0..200 {
                match env.step(&EnvAction::Discrete((t * 7 + 1) % 4)) {
                    Ok(r) => {
                        let finished = r.done || r.truncated;
                        obs.push(r.obs);
                        if finished {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
            obs
        };
        assert_eq!(run(12), run(12));
    }

    #[test]
    fn empirical_slip_frequency_near_one_third() {
        let mut env = FourRooms::new(usize::MAX);
        env.reset(77);
        // Use a cell where all four moves are distinguishable: (3, 3) is in
        // the open doorway row of the left rooms. Walk from the center of the
        // top-left room instead and count intended-direction moves.
        let mut intended_moves = 0usize;
        let mut total = 0usize;
        for _ in 0..100_000 {
            // reposition deterministically by resetting when displaced
            let before = env.agent_cell();
            let r = env.step(&EnvAction::Discrete(1)).unwrap(); // down
            let after = env.agent_cell();
            let moved_down = after.0 == before.0 + 1 && after.1 == before.1;
            // Only count steps where "down" and "slip" are distinguishable:
            // from cells where down is open and so is at least one other dir.
            if LAYOUT[before.0 + 1].as_bytes()[before.1] == b' ' {
                total += 1;
                if moved_down {
                    intended_moves += 1;
                }
            }
            if r.done || r.truncated || after.0 >= 11 {
                env.reset(after.0 as u64 * 31 + after.1 as u64);
            }
        }
        // Down succeeds when not slipping (2/3). A slip to a blocked
        // direction stays put, so estimate the slip rate from successful
        // down-moves only in rows where the cell below is open; slips that
        // happen to move down are impossible (slip excludes the intended
        // direction), so P(move down) = 2/3 exactly.
        let rate = intended_moves as f64 / total as f64;
        assert!(
            (rate - 2.0 / 3.0).abs() < 0.01,
            "intended-direction rate {rate}"
        );
    }
}
