//! Command-line entry point: train, eval, analyze.
//!
//! Every run directory carries a resolved config snapshot and a manifest;
//! together with `--single-threaded` they reproduce a run byte for byte.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use optsep::analysis::{
    self, intrinsic_reward_histograms, learning_curve, option_usage_from_counts,
    pairwise_distance_report, AnalysisError,
};
use optsep::approx::{load_checkpoint, save_checkpoint, ActionSpec, CheckpointMeta};
use optsep::config::{Manifest, RunConfig};
use optsep::distances::DistanceKind;
use optsep::optioncritic::{evaluate, train, EvalEpisode, UpdateRecord};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "optsep",
    version,
    about = "Option-critic training with a Hellinger-distance regularizer that pushes option policies apart"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent and write a run directory.
    Train {
        /// JSON run config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set hd_coef=0 or --set train.lr=0.001.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Shorthand for --set train.seed=N.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory to create.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Collect rollouts sequentially; the determinism reference.
        #[arg(long)]
        single_threaded: bool,
    },
    /// Roll out a trained agent and write trajectories plus a summary.
    Eval {
        /// Run directory produced by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Episode count; defaults to the config's eval_episodes.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce analysis artifacts from a run directory.
    Analyze {
        /// Run directory holding the inputs for the chosen analysis.
        #[arg(long)]
        run: PathBuf,
        #[arg(value_enum)]
        which: Which,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Usage,
    Distance,
    Histograms,
    Latents,
    Curve,
}

fn log_level() -> u8 {
    match std::env::var("OPTSEP_LOG_LEVEL").as_deref() {
        Ok("quiet") | Ok("error") => 0,
        Ok("debug") => 2,
        _ => 1,
    }
}

fn info(msg: &str) {
    if log_level() >= 1 {
        eprintln!("{msg}");
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train {
            config,
            set,
            seed,
            out,
            single_threaded,
        } => cmd_train(config.as_deref(), &set, seed, &out, single_threaded),
        Cmd::Eval {
            run,
            episodes,
            seed,
            out,
        } => cmd_eval(&run, episodes, seed, out.as_deref()),
        Cmd::Analyze { run, which } => cmd_analyze(&run, which),
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn cmd_train(
    config: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    out: &Path,
    single_threaded: bool,
) -> Result<()> {
    let mut cfg = load_run_config(config)?;
    cfg.apply_overrides(overrides)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json_pretty())?;
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&Manifest::for_config(&cfg))?,
    )?;
    let arch = cfg.architecture()?;
    let mut log = std::io::BufWriter::new(fs::File::create(out.join("train_log.jsonl"))?);
    info(&format!(
        "training {} for {} steps (seed {})",
        cfg.env.name, cfg.train.total_steps, cfg.train.seed
    ));
    let make_env = |_w: usize| cfg.make_env().expect("env name already validated");
    let (params, stats) = train(&cfg.train, &arch, make_env, &mut log, !single_threaded)?;
    drop(log);
    save_checkpoint(
        &out.join("checkpoint.bin"),
        &params,
        &CheckpointMeta {
            seed: cfg.train.seed,
            step: stats.env_steps,
        },
    )?;
    info(&format!(
        "done: {} updates, {} episodes, run directory {}",
        stats.updates,
        stats.episode_returns_raw.len(),
        out.display()
    ));
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(AnalysisError::MissingInput(path.display().to_string()).into())
    }
}

fn cmd_eval(
    run: &Path,
    episodes: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(&require(run.join("config.json"))?)?;
    let (params, meta) = load_checkpoint(&require(run.join("checkpoint.bin"))?)?;
    let episodes = episodes.unwrap_or(cfg.eval_episodes);
    let seed = seed.unwrap_or(meta.seed);
    let mut env = cfg.make_env()?;
    let result = evaluate(
        &params,
        env.as_mut(),
        episodes,
        cfg.train.epsilon,
        cfg.train.p_min,
        seed,
    )?;
    let out = out.unwrap_or(run);
    fs::create_dir_all(out)?;
    let mut trajectories = String::new();
    for e in &result.episodes {
        writeln!(trajectories, "{}", serde_json::to_string(e)?)?;
    }
    fs::write(out.join("eval_trajectories.jsonl"), trajectories)?;
    let summary = serde_json::json!({
        "episodes": episodes,
        "seed": seed,
        "empty": result.episodes.is_empty(),
        "mean_return": result.mean_return(),
        "std_return": result.std_return(),
    });
    fs::write(
        out.join("eval_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    info(&format!(
        "eval: {} episodes, mean return {}",
        episodes,
        result
            .mean_return()
            .map_or("n/a (empty)".to_string(), |m| m.to_string())
    ));
    Ok(())
}

fn read_log(run: &Path) -> Result<Vec<UpdateRecord>> {
    let path = require(run.join("train_log.jsonl"))?;
    let text = fs::read_to_string(&path)?;
    text.lines()
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn read_trajectories(run: &Path) -> Result<Vec<EvalEpisode>> {
    let path = require(run.join("eval_trajectories.jsonl"))?;
    let text = fs::read_to_string(&path)?;
    text.lines()
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn cmd_analyze(run: &Path, which: Which) -> Result<()> {
    let cfg = RunConfig::load(&require(run.join("config.json"))?)?;
    match which {
        Which::Usage => {
            let records = read_log(run)?;
            let mut counts = vec![0u64; cfg.train.num_options];
            for r in &records {
                for (c, u) in counts.iter_mut().zip(&r.option_usage) {
                    *c += u;
                }
            }
            let table = option_usage_from_counts(&counts)?;
            fs::write(run.join("usage.json"), serde_json::to_string_pretty(&table)?)?;
            info(&format!("usage: {:?}", table.percentages));
        }
        Which::Distance => {
            let (params, _) = load_checkpoint(&require(run.join("checkpoint.bin"))?)?;
            let episodes = read_trajectories(run)?;
            let states: Vec<Vec<f64>> = episodes
                .iter()
                .flat_map(|e| e.states.iter().cloned())
                .collect();
            let hd = pairwise_distance_report(&params, &states, DistanceKind::Hd, cfg.train.p_min)?;
            fs::write(run.join("distance_hd.json"), serde_json::to_string_pretty(&hd)?)?;
            info(&format!("HD mean {:.4} +- {:.4}", hd.mean, hd.std));
            // the KLD table is only part of the discrete-action report
            if matches!(params.arch().action_spec, ActionSpec::Discrete(_)) {
                let kld =
                    pairwise_distance_report(&params, &states, DistanceKind::Kld, cfg.train.p_min)?;
                fs::write(
                    run.join("distance_kld.json"),
                    serde_json::to_string_pretty(&kld)?,
                )?;
            }
        }
        Which::Histograms => {
            let episodes = read_trajectories(run)?;
            let records: Vec<_> = episodes
                .iter()
                .flat_map(|e| e.options.iter().copied().zip(e.intrinsics.iter().cloned()))
                .collect();
            let csv =
                intrinsic_reward_histograms(&records, cfg.train.num_options, cfg.histogram_bins)?;
            fs::write(run.join("histograms.csv"), csv)?;
        }
        Which::Latents => {
            let (params, _) = load_checkpoint(&require(run.join("checkpoint.bin"))?)?;
            let episodes = read_trajectories(run)?;
            let sample: Vec<(Vec<f64>, usize)> = episodes
                .iter()
                .flat_map(|e| e.states.iter().cloned().zip(e.options.iter().copied()))
                .collect();
            let csv = analysis::export_latents(&params, &sample)?;
            fs::write(run.join("latents.csv"), csv)?;
        }
        Which::Curve => {
            let records = read_log(run)?;
            let returns: Vec<f64> = records
                .iter()
                .flat_map(|r| r.episodes.iter().map(|e| e.return_raw))
                .collect();
            let curve = learning_curve(&returns, cfg.curve_window)?;
            let mut csv = String::from("episode,mean,std\n");
            for p in &curve {
                writeln!(csv, "{},{:.16e},{:.16e}", p.episode, p.mean, p.std)?;
            }
            fs::write(run.join("curve.csv"), csv)?;
        }
    }
    Ok(())
}
