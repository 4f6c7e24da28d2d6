//! The synchronous training loop: collect, compute targets and losses,
//! apply RMSprop, log.

use super::{
    collect_rollout, compute_losses, n_step_targets, Rollout, TrainConfig, TrainError, WorkerState,
};
use crate::approx::{init_params, rmsprop_step, AgentParams, Architecture, RmsPropState};
use crate::envs::Env;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One completed episode, as logged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub return_raw: f64,
    pub return_clipped: f64,
    pub length: usize,
}

/// One JSONL record per parameter update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: u64,
    pub step: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub termination_loss: f64,
    pub entropy: f64,
    pub hd_reg: f64,
    pub total_loss: f64,
    pub option_usage: Vec<u64>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Summary returned by [`train`] alongside the final parameters.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub updates: u64,
    pub env_steps: u64,
    pub episode_returns_raw: Vec<f64>,
    pub option_usage: Vec<u64>,
}

/// Run the full training loop. `make_env` builds one environment per
/// worker; `log_sink` receives one JSON line per update. Deterministic for
/// a fixed config; `parallel` only changes how workers are scheduled, not
/// the results.
pub fn train<F>(
    cfg: &TrainConfig,
    arch: &Architecture,
    make_env: F,
    log_sink: &mut dyn Write,
    parallel: bool,
) -> Result<(AgentParams, TrainStats), TrainError>
where
    F: Fn(usize) -> Box<dyn Env>,
{
    let mut params = init_params(arch, cfg.seed);
    let mut opt_state = RmsPropState::new(params.values().len());
    let mut workers: Vec<WorkerState> = (0..cfg.workers)
        .map(|w| {
            // distinct, deterministic stream per worker
            let worker_seed = cfg
                .seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add(w as u64 + 1);
            WorkerState::new(make_env(w), worker_seed)
        })
        .collect();

    let mut stats = TrainStats {
        option_usage: vec![0; cfg.num_options],
        ..TrainStats::default()
    };
    let mut update = 0u64;
    let mut env_steps = 0u64;
    while env_steps < cfg.total_steps {
        let rollout = collect_rollout(&params, &mut workers, cfg.n_steps, cfg, parallel)?;
        env_steps += rollout.num_transitions() as u64;
        let targets = n_step_targets(&rollout, cfg.gamma, cfg.deliberation_cost);
        let (breakdown, grad) = compute_losses(&params, &rollout, &targets, cfg)?;
        rmsprop_step(
            params.values_mut(),
            &grad,
            cfg.lr,
            cfg.rmsprop_smoothing,
            &mut opt_state,
        )?;
        update += 1;
        if !params.all_finite() {
            return Err(TrainError::NonFiniteParams {
                step: env_steps,
                update,
            });
        }
        let record = update_record(update, env_steps, &breakdown, &rollout, cfg.num_options);
        for e in &record.episodes {
            stats.episode_returns_raw.push(e.return_raw);
        }
        for (u, c) in stats.option_usage.iter_mut().zip(&record.option_usage) {
            *u += c;
        }
        serde_json::to_writer(&mut *log_sink, &record)?;
        log_sink.write_all(b"\n")?;
    }
    stats.updates = update;
    stats.env_steps = env_steps;
    Ok((params, stats))
}

fn update_record(
    update: u64,
    step: u64,
    breakdown: &super::LossBreakdown,
    rollout: &Rollout,
    num_options: usize,
) -> UpdateRecord {
    let mut option_usage = vec![0u64; num_options];
    let mut episodes = Vec::new();
    for w in &rollout.workers {
        for t in &w.transitions {
            option_usage[t.option] += 1;
        }
        for e in &w.episodes {
            episodes.push(EpisodeRecord {
                return_raw: e.return_raw,
                return_clipped: e.return_clipped,
                length: e.length,
            });
        }
    }
    UpdateRecord {
        update,
        step,
        policy_loss: breakdown.policy_loss,
        value_loss: breakdown.value_loss,
        termination_loss: breakdown.termination_loss,
        entropy: breakdown.entropy,
        hd_reg: breakdown.hd_reg_value,
        total_loss: breakdown.total,
        option_usage,
        episodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{ActionSpec, Activation};
    use crate::envs::FourRooms;

    fn arch(num_options: usize) -> Architecture {
        Architecture {
            input_dim: FourRooms::new(10).num_cells(),
            hidden: vec![16, 16],
            activation: Activation::Tanh,
            num_options,
            action_spec: ActionSpec::Discrete(4),
        }
    }

    #[test]
    fn zero_steps_is_a_noop_with_empty_log() {
        let cfg = TrainConfig {
            total_steps: 0,
            ..TrainConfig::default()
        };
        let mut log = Vec::new();
        let (params, stats) = train(
            &cfg,
            &arch(cfg.num_options),
            |_| Box::new(FourRooms::new(100)),
            &mut log,
            false,
        )
        .unwrap();
        assert!(log.is_empty());
        assert_eq!(stats.updates, 0);
        assert_eq!(params.values(), init_params(&arch(cfg.num_options), cfg.seed).values());
    }

    #[test]
    fn short_run_logs_valid_jsonl_and_stays_finite() {
        let cfg = TrainConfig {
            total_steps: 400,
            workers: 4,
            ..TrainConfig::default()
        };
        let mut log = Vec::new();
        let (params, stats) = train(
            &cfg,
            &arch(cfg.num_options),
            |_| Box::new(FourRooms::new(100)),
            &mut log,
            false,
        )
        .unwrap();
        assert!(params.all_finite());
        assert_eq!(stats.env_steps, 400);
        let text = String::from_utf8(log).unwrap();
        let records: Vec<UpdateRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(records.len() as u64, stats.updates);
        for r in &records {
            assert_eq!(r.option_usage.iter().sum::<u64>(), 20);
        }
    }

    #[test]
    fn identical_configs_produce_identical_logs() {
        let cfg = TrainConfig {
            total_steps: 300,
            workers: 3,
            ..TrainConfig::default()
        };
        let run = |parallel: bool| {
            let mut log = Vec::new();
            let (params, _) = train(
                &cfg,
                &arch(cfg.num_options),
                |_| Box::new(FourRooms::new(100)),
                &mut log,
                parallel,
            )
            .unwrap();
            (log, params.values().to_vec())
        };
        let (log_a, params_a) = run(false);
        let (log_b, params_b) = run(false);
        assert_eq!(log_a, log_b);
        assert_eq!(params_a, params_b);
        let (log_c, params_c) = run(true);
        assert_eq!(log_a, log_c);
        assert_eq!(params_a, params_c);
    }
}
