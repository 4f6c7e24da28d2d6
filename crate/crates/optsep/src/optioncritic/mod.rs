//! Call-and-return option-critic agent with a synchronous multi-worker
//! advantage actor-critic trainer and the Hellinger-distance regularizer in
//! the loss.

mod eval;
mod loss;
mod rollout;
mod train;

pub use eval::{evaluate, EvalEpisode, EvalResult};
pub use loss::{compute_losses, loss_term_gradient, LossTerm};
pub use rollout::{collect_rollout, n_step_targets, Rollout, WorkerState};
pub use train::{train, EpisodeRecord, TrainStats, UpdateRecord};

use crate::approx::ApproxError;
use crate::distances::DistanceError;
use crate::envs::{EnvAction, EnvError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("parameters became non-finite at env step {step} (update {update})")]
    NonFiniteParams { step: u64, update: u64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log serialization: {0}")]
    Log(#[from] serde_json::Error),
}

/// Training hyperparameters. Defaults follow the discrete-action recipe;
/// [`TrainConfig::continuous_defaults`] switches the learning rate and
/// entropy coefficient to the continuous-action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub num_options: usize,
    pub epsilon: f64,
    pub workers: usize,
    pub n_steps: usize,
    pub total_steps: u64,
    pub lr: f64,
    pub rmsprop_smoothing: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub deliberation_cost: f64,
    pub hd_coef: f64,
    pub p_min: f64,
    pub reward_clip: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            num_options: 4,
            epsilon: 0.01,
            workers: 16,
            n_steps: 5,
            total_steps: 200_000,
            lr: 0.0007,
            rmsprop_smoothing: 0.99,
            value_coef: 0.5,
            entropy_coef: 0.01,
            deliberation_cost: 0.01,
            hd_coef: 0.007,
            p_min: 1e-4,
            reward_clip: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn continuous_defaults() -> Self {
        Self {
            lr: 0.0003,
            entropy_coef: 0.0001,
            ..Self::default()
        }
    }
}

/// One step of experience from a worker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub option: usize,
    pub action: EnvAction,
    pub log_prob: f64,
    /// Learning-target reward (sign of the raw reward when clipping is on).
    pub reward: f64,
    pub raw_reward: f64,
    pub intrinsic: BTreeMap<String, f64>,
    /// Termination probability of the active option at the next state.
    pub beta_next: f64,
    /// Q(s', .) snapshot used for bootstrap targets.
    pub q_next: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
    /// Q(s, .) snapshot at the decision state.
    pub q_omega_snapshot: Vec<f64>,
    /// True when the termination draw at s' ended the option.
    pub option_terminated: bool,
    /// True when the option was freshly selected at s.
    pub option_started: bool,
}

/// Epsilon-greedy policy over options; ties break toward the lowest index.
pub fn select_option(q_omega: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    debug_assert!(!q_omega.is_empty());
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_omega.len())
    } else {
        let mut best = 0;
        for (i, &q) in q_omega.iter().enumerate() {
            if q > q_omega[best] {
                best = i;
            }
        }
        best
    }
}

/// Bernoulli termination draw.
pub fn should_terminate(beta: f64, rng: &mut impl Rng) -> bool {
    rng.gen::<f64>() < beta
}

/// Option value upon arrival with deliberation cost:
/// `U = (1 - beta) Q(s', omega) + beta (V(s') - c)`, with
/// `V(s') = max_omega Q(s', omega)`.
pub fn option_value_upon_arrival(q_next: &[f64], beta: f64, omega: usize, c: f64) -> f64 {
    let v = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (1.0 - beta) * q_next[omega] + beta * (v - c)
}

/// Per-term scalar losses. Sign conventions: `total = policy +
/// value_coef * value + termination - entropy_coef * entropy -
/// hd_coef * hd_reg_value`; entropy and the hd-regularizer are maximized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub termination_loss: f64,
    pub entropy: f64,
    pub hd_reg_value: f64,
    pub total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn select_option_greedy_when_epsilon_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(select_option(&[0.1, 0.9, 0.3, 0.9], 0.0, &mut rng), 1);
        }
    }

    #[test]
    fn select_option_uniform_when_epsilon_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[select_option(&[3.0, 1.0, 2.0, 0.0], 1.0, &mut rng)] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn select_option_argmax_rate_matches_epsilon_arithmetic() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let epsilon = 0.01;
        let n = 1_000_000;
        let mut argmax = 0usize;
        for _ in 0..n {
            if select_option(&[0.0, 0.5, 0.2, -0.1], epsilon, &mut rng) == 1 {
                argmax += 1;
            }
        }
        // 1 - eps + eps/m = 0.9925
        let rate = argmax as f64 / n as f64;
        assert!((rate - 0.9925).abs() < 0.001, "argmax rate {rate}");
    }

    #[test]
    fn should_terminate_limits_and_frequency() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut fired = 0usize;
        for _ in 0..100_000 {
            if should_terminate(1e-5, &mut rng) {
                fired += 1;
            }
        }
        assert!((fired as f64 / 1e5) < 1e-4);
        for _ in 0..100 {
            assert!(should_terminate(1.0 - 1e-12, &mut rng));
        }
        let mut fired = 0usize;
        for _ in 0..100_000 {
            if should_terminate(0.3, &mut rng) {
                fired += 1;
            }
        }
        let rate = fired as f64 / 1e5;
        assert!((rate - 0.3).abs() < 0.01, "termination rate {rate}");
    }

    #[test]
    fn option_value_upon_arrival_cases() {
        let q = [1.0, 3.0];
        assert_eq!(option_value_upon_arrival(&q, 0.0, 0, 0.01), 1.0);
        assert!((option_value_upon_arrival(&q, 1.0, 0, 0.01) - 2.99).abs() < 1e-15);
        let u = option_value_upon_arrival(&q, 0.5, 0, 0.01);
        assert!((u - 1.995).abs() < 1e-15);
    }
}
