//! Greedy-over-options evaluation of a trained agent: the option selector
//! keeps its configured epsilon, the intra-option policy stays stochastic,
//! and everything is deterministic given the seed.

use super::rollout::sample_action;
use super::{select_option, should_terminate, TrainError};
use crate::approx::{forward, AgentParams};
use crate::envs::{Env, EnvAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One evaluation episode, step-aligned: `states[t]` is where `options[t]`
/// acted with `actions[t]` for `rewards[t]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub states: Vec<Vec<f64>>,
    pub options: Vec<usize>,
    pub actions: Vec<EnvAction>,
    pub rewards: Vec<f64>,
    pub intrinsics: Vec<BTreeMap<String, f64>>,
    pub return_raw: f64,
    pub length: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalResult {
    pub episodes: Vec<EvalEpisode>,
}

impl EvalResult {
    pub fn mean_return(&self) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        Some(self.episodes.iter().map(|e| e.return_raw).sum::<f64>() / self.episodes.len() as f64)
    }

    pub fn std_return(&self) -> Option<f64> {
        let mean = self.mean_return()?;
        let n = self.episodes.len() as f64;
        let var = self
            .episodes
            .iter()
            .map(|e| (e.return_raw - mean).powi(2))
            .sum::<f64>()
            / n;
        Some(var.sqrt())
    }

    /// All visited states with the option active there, in step order.
    pub fn visited(&self) -> Vec<(Vec<f64>, usize)> {
        self.episodes
            .iter()
            .flat_map(|e| e.states.iter().cloned().zip(e.options.iter().copied()))
            .collect()
    }
}

pub fn evaluate(
    params: &AgentParams,
    env: &mut dyn Env,
    episodes: usize,
    epsilon: f64,
    p_min: f64,
    seed: u64,
) -> Result<EvalResult, TrainError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut result = EvalResult::default();
    for _ in 0..episodes {
        let episode_seed = rng.gen::<u64>();
        let mut obs = env.reset(episode_seed);
        let mut episode = EvalEpisode {
            states: Vec::new(),
            options: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            intrinsics: Vec::new(),
            return_raw: 0.0,
            length: 0,
        };
        let mut active_option: Option<usize> = None;
        loop {
            let outputs = forward(params, &obs)?;
            let option = match active_option {
                Some(omega) => omega,
                None => {
                    let omega = select_option(&outputs.q_omega, epsilon, &mut rng);
                    active_option = Some(omega);
                    omega
                }
            };
            let (action, _) = sample_action(&outputs.policies[option], p_min, &mut rng)?;
            let step = env.step(&action)?;
            episode.states.push(obs);
            episode.options.push(option);
            episode.actions.push(action);
            episode.rewards.push(step.reward);
            episode.intrinsics.push(step.intrinsic);
            episode.return_raw += step.reward;
            episode.length += 1;
            if step.done || step.truncated {
                break;
            }
            let next_outputs = forward(params, &step.obs)?;
            if should_terminate(next_outputs.beta[option], &mut rng) {
                active_option = None;
            }
            obs = step.obs;
        }
        result.episodes.push(episode);
    }
    Ok(result)
}
