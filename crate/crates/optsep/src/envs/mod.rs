//! Desk-scale episodic environments with a uniform interface.

mod four_rooms;
mod point_mass;

pub use four_rooms::FourRooms;
pub use point_mass::PointMass;

use crate::approx::ActionSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode already finished; call reset")]
    EpisodeFinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_spec: ActionSpec,
    pub max_episode_steps: usize,
    pub intrinsic_reward_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvAction {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// One environment transition. When intrinsic rewards are defined, `reward`
/// equals their sum. `done` marks a true terminal; `truncated` marks the
/// step-limit cutoff; the same cause never sets both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub intrinsic: BTreeMap<String, f64>,
    pub done: bool,
    pub truncated: bool,
}

pub trait Env: Send {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &EnvAction) -> Result<StepResult, EnvError>;
}

/// `sum_t gamma^t r_t`, accumulated backward for numerical symmetry with
/// the n-step recursion.
pub fn compute_discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_return_basics() {
        assert_eq!(compute_discounted_return(&[1.0], 0.5), 1.0);
        let v = compute_discounted_return(&[0.0, 0.0, 1.0], 0.99);
        assert!((v - 0.9801).abs() < 1e-12);
        assert_eq!(compute_discounted_return(&[], 0.9), 0.0);
    }

    #[test]
    fn discounted_return_matches_forward_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gamma: f64 = rng.gen_range(0.0..0.999);
            let forward: f64 = rewards
                .iter()
                .enumerate()
                .map(|(t, &r)| gamma.powi(t as i32) * r)
                .sum();
            let backward = compute_discounted_return(&rewards, gamma);
            assert!((forward - backward).abs() < 1e-10);
        }
    }
}
