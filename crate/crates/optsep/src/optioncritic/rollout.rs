//! Synchronous rollout collection under call-and-return option execution,
//! and the n-step target recursion.

use super::{
    option_value_upon_arrival, select_option, should_terminate, TrainConfig, TrainError,
    Transition,
};
use crate::approx::{clamp_policy, forward, AgentParams, NetworkOutputs};
use crate::distances::ProbDist;
use crate::envs::{Env, EnvAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

/// A finished episode observed during collection.
#[derive(Debug, Clone)]
pub struct FinishedEpisode {
    pub return_raw: f64,
    pub return_clipped: f64,
    pub length: usize,
}

/// One worker's private environment, RNG stream, and option state. Worker
/// streams are independent, so parallel and sequential collection produce
/// identical rollouts.
pub struct WorkerState {
    pub env: Box<dyn Env>,
    obs: Vec<f64>,
    active_option: Option<usize>,
    rng: ChaCha20Rng,
    cached_outputs: Option<NetworkOutputs>,
    episode_return_raw: f64,
    episode_return_clipped: f64,
    episode_length: usize,
}

impl WorkerState {
    pub fn new(mut env: Box<dyn Env>, worker_seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(worker_seed);
        let episode_seed = rng.gen::<u64>();
        let obs = env.reset(episode_seed);
        Self {
            env,
            obs,
            active_option: None,
            rng,
            cached_outputs: None,
            episode_return_raw: 0.0,
            episode_return_clipped: 0.0,
            episode_length: 0,
        }
    }
}

/// Transitions collected by one worker, in step order.
#[derive(Debug, Clone, Default)]
pub struct WorkerRollout {
    pub transitions: Vec<Transition>,
    pub episodes: Vec<FinishedEpisode>,
}

/// A synchronous batch of `workers x n_steps` transitions.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub workers: Vec<WorkerRollout>,
}

impl Rollout {
    pub fn num_transitions(&self) -> usize {
        self.workers.iter().map(|w| w.transitions.len()).sum()
    }

    pub fn iter_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.workers.iter().flat_map(|w| w.transitions.iter())
    }
}

pub(super) fn sample_action(
    policy: &ProbDist,
    p_min: f64,
    rng: &mut ChaCha20Rng,
) -> Result<(EnvAction, f64), TrainError> {
    match policy {
        ProbDist::Categorical(dist) => {
            let clamped = clamp_policy(dist, p_min)?;
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let probs = clamped.probs();
            let mut chosen = probs.len() - 1;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            Ok((EnvAction::Discrete(chosen), probs[chosen].ln()))
        }
        ProbDist::DiagGaussian(dist) => {
            let mut action = Vec::with_capacity(dist.dim());
            let mut log_prob = 0.0;
            for j in 0..dist.dim() {
                let sigma = dist.log_std()[j].exp();
                // Box-Muller from the worker stream
                let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                let a = dist.mean()[j] + sigma * z;
                action.push(a);
                log_prob += -dist.log_std()[j]
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * z * z;
            }
            Ok((EnvAction::Continuous(action), log_prob))
        }
    }
}

/// Sign of the reward with `0 -> 0`, unlike `f64::signum`.
fn reward_sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn worker_collect(
    params: &AgentParams,
    worker: &mut WorkerState,
    n_steps: usize,
    cfg: &TrainConfig,
) -> Result<WorkerRollout, TrainError> {
    let mut out = WorkerRollout::default();
    for _ in 0..n_steps {
        let outputs = match worker.cached_outputs.take() {
            Some(cached) => cached,
            None => forward(params, &worker.obs)?,
        };
        let (option, option_started) = match worker.active_option {
            Some(omega) => (omega, false),
            None => {
                let omega = select_option(&outputs.q_omega, cfg.epsilon, &mut worker.rng);
                worker.active_option = Some(omega);
                (omega, true)
            }
        };
        let (action, log_prob) = sample_action(&outputs.policies[option], cfg.p_min, &mut worker.rng)?;
        let step = worker.env.step(&action)?;
        let raw_reward = step.reward;
        let clipped = reward_sign(raw_reward);
        let reward = if cfg.reward_clip { clipped } else { raw_reward };
        worker.episode_return_raw += raw_reward;
        worker.episode_return_clipped += clipped;
        worker.episode_length += 1;

        let next_outputs = forward(params, &step.obs)?;
        let beta_next = next_outputs.beta[option];
        let q_next = next_outputs.q_omega.clone();

        let mut option_terminated = false;
        if step.done || step.truncated {
            out.episodes.push(FinishedEpisode {
                return_raw: worker.episode_return_raw,
                return_clipped: worker.episode_return_clipped,
                length: worker.episode_length,
            });
            worker.episode_return_raw = 0.0;
            worker.episode_return_clipped = 0.0;
            worker.episode_length = 0;
            worker.active_option = None;
            let episode_seed = worker.rng.gen::<u64>();
            let reset_obs = worker.env.reset(episode_seed);
            out.transitions.push(Transition {
                obs: worker.obs.clone(),
                next_obs: step.obs.clone(),
                option,
                action,
                log_prob,
                reward,
                raw_reward,
                intrinsic: step.intrinsic,
                beta_next,
                q_next,
                done: step.done,
                truncated: step.truncated,
                q_omega_snapshot: outputs.q_omega.clone(),
                option_terminated: false,
                option_started,
            });
            worker.obs = reset_obs;
            worker.cached_outputs = None;
            continue;
        }
        if should_terminate(beta_next, &mut worker.rng) {
            worker.active_option = None;
            option_terminated = true;
        }
        out.transitions.push(Transition {
            obs: worker.obs.clone(),
            next_obs: step.obs.clone(),
            option,
            action,
            log_prob,
            reward,
            raw_reward,
            intrinsic: step.intrinsic,
            beta_next,
            q_next,
            done: false,
            truncated: false,
            q_omega_snapshot: outputs.q_omega.clone(),
            option_terminated,
            option_started,
        });
        worker.obs = step.obs;
        worker.cached_outputs = Some(next_outputs);
    }
    Ok(out)
}

/// Step every worker `n_steps` times against an immutable parameter
/// snapshot. `parallel` fans workers out over threads; results are
/// identical either way because each worker owns its RNG stream.
pub fn collect_rollout(
    params: &AgentParams,
    workers: &mut [WorkerState],
    n_steps: usize,
    cfg: &TrainConfig,
    parallel: bool,
) -> Result<Rollout, TrainError> {
    let results: Vec<Result<WorkerRollout, TrainError>> = if parallel {
        workers
            .par_iter_mut()
            .map(|w| worker_collect(params, w, n_steps, cfg))
            .collect()
    } else {
        workers
            .iter_mut()
            .map(|w| worker_collect(params, w, n_steps, cfg))
            .collect()
    };
    let mut rollout = Rollout::default();
    for r in results {
        rollout.workers.push(r?);
    }
    Ok(rollout)
}

/// Backward n-step recursion over each worker's transitions.
///
/// `G_t = r_t` at a true terminal; otherwise `G_t = r_t + gamma * G_{t+1}`
/// while the option segment continues, seeded with the arrival value
/// `U(omega, s')` at segment ends, truncations, and the rollout boundary.
pub fn n_step_targets(rollout: &Rollout, gamma: f64, c: f64) -> Vec<Vec<f64>> {
    rollout
        .workers
        .iter()
        .map(|w| {
            let n = w.transitions.len();
            let mut targets = vec![0.0; n];
            let mut next_target: Option<f64> = None;
            for t in (0..n).rev() {
                let tr = &w.transitions[t];
                let g = if tr.done {
                    tr.reward
                } else if tr.truncated || tr.option_terminated || next_target.is_none() {
                    tr.reward
                        + gamma * option_value_upon_arrival(&tr.q_next, tr.beta_next, tr.option, c)
                } else {
                    tr.reward + gamma * next_target.unwrap()
                };
                targets[t] = g;
                next_target = Some(g);
            }
            targets
        })
        .collect()
}
