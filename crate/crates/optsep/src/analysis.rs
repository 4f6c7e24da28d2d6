//! Post-hoc diagnostics over trained agents and run logs: option use
//! rates, pairwise statistical distances between intra-option policies,
//! intrinsic-reward histograms, latent exports, and learning curves.
//!
//! Everything here is a pure function over logged data; outputs are
//! byte-identical across re-runs on the same inputs.

use crate::approx::{clamp_policy, forward, AgentParams, ApproxError};
use crate::distances::{
    hellinger, kld_categorical, kld_diag_gaussian, DistanceError, DistanceKind, Magnitude,
    ProbDist,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty run log")]
    EmptyLog,
    #[error("empty state sample")]
    EmptySample,
    #[error("environment exposes no intrinsic rewards")]
    NoIntrinsics,
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("measure {0:?} is not supported for this report")]
    UnsupportedMeasure(DistanceKind),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

/// Per-option percentage of decision steps on which the option was active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageTable {
    pub percentages: Vec<f64>,
    pub total_steps: u64,
}

/// Pairwise distance matrix between intra-option policies, aggregated over
/// a state sample. HD matrices are symmetric with a zero diagonal and
/// entries in [0, 1]; KLD matrices are asymmetric. `mean`/`std` aggregate
/// the finite per-state per-pair values (unordered pairs for HD, ordered
/// for KLD); infinite KLD entries are counted separately and excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub kind: DistanceKind,
    pub mean: f64,
    pub std: f64,
    pub matrix: Vec<Vec<f64>>,
    pub infinite_pairs: u64,
    pub state_sample_size: usize,
}

/// One point of a smoothed learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
}

/// Fraction of env steps attributed to each option, as percentages.
pub fn option_usage(options: &[usize], num_options: usize) -> Result<UsageTable, AnalysisError> {
    if options.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let mut counts = vec![0u64; num_options];
    for &omega in options {
        counts[omega] += 1;
    }
    let total = options.len() as f64;
    Ok(UsageTable {
        percentages: counts.iter().map(|&c| 100.0 * c as f64 / total).collect(),
        total_steps: options.len() as u64,
    })
}

/// As [`option_usage`], but from pre-aggregated per-option step counts
/// (the shape run logs store).
pub fn option_usage_from_counts(counts: &[u64]) -> Result<UsageTable, AnalysisError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(AnalysisError::EmptyLog);
    }
    Ok(UsageTable {
        percentages: counts
            .iter()
            .map(|&c| 100.0 * c as f64 / total as f64)
            .collect(),
        total_steps: total,
    })
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn pair_distance(kind: DistanceKind, p: &ProbDist, q: &ProbDist) -> Result<Magnitude, AnalysisError> {
    match kind {
        DistanceKind::Hd => Ok(hellinger(p, q)?.value),
        DistanceKind::Kld => match (p, q) {
            (ProbDist::Categorical(a), ProbDist::Categorical(b)) => {
                Ok(kld_categorical(a, b)?.value)
            }
            (ProbDist::DiagGaussian(a), ProbDist::DiagGaussian(b)) => {
                Ok(kld_diag_gaussian(a, b)?.value)
            }
            _ => Err(AnalysisError::UnsupportedMeasure(kind)),
        },
        other => Err(AnalysisError::UnsupportedMeasure(other)),
    }
}

/// Evaluates every option policy head at each sampled state and aggregates
/// the pairwise distance matrix. Categorical heads are clamped with
/// `p_min` first, matching how they act and how the regularizer sees them.
pub fn pairwise_distance_report(
    params: &AgentParams,
    states: &[Vec<f64>],
    kind: DistanceKind,
    p_min: f64,
) -> Result<DistanceReport, AnalysisError> {
    if states.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let m = params.arch().num_options;
    let mut sum = vec![vec![0.0f64; m]; m];
    let mut finite_count = vec![vec![0u64; m]; m];
    let mut samples = Vec::new();
    let mut infinite_pairs = 0u64;
    for obs in states {
        let outputs = forward(params, obs)?;
        let mut policies = Vec::with_capacity(m);
        for p in &outputs.policies {
            policies.push(match p {
                ProbDist::Categorical(c) => ProbDist::Categorical(clamp_policy(c, p_min)?),
                g => g.clone(),
            });
        }
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                // HD is symmetric: fill both triangles from one evaluation
                if kind == DistanceKind::Hd && i > j {
                    continue;
                }
                match pair_distance(kind, &policies[i], &policies[j])? {
                    Magnitude::Finite(d) => {
                        sum[i][j] += d;
                        finite_count[i][j] += 1;
                        samples.push(d);
                        if kind == DistanceKind::Hd {
                            sum[j][i] += d;
                            finite_count[j][i] += 1;
                        }
                    }
                    Magnitude::Infinite => infinite_pairs += 1,
                }
            }
        }
    }
    let matrix: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        0.0
                    } else if finite_count[i][j] == 0 {
                        f64::INFINITY
                    } else {
                        sum[i][j] / finite_count[i][j] as f64
                    }
                })
                .collect()
        })
        .collect();
    let (mean, std) = if samples.is_empty() {
        (f64::INFINITY, 0.0)
    } else {
        mean_std(&samples)
    };
    Ok(DistanceReport {
        kind,
        mean,
        std,
        matrix,
        infinite_pairs,
        state_sample_size: states.len(),
    })
}

/// Per-option, per-intrinsic-label counts over fixed uniform bins, as CSV.
///
/// Bin edges span each label's observed range; the last bin is closed on
/// the right. A constant-valued label collapses to a degenerate range and
/// lands entirely in bin 0.
pub fn intrinsic_reward_histograms(
    records: &[(usize, BTreeMap<String, f64>)],
    num_options: usize,
    bins: usize,
) -> Result<String, AnalysisError> {
    assert!(bins > 0);
    if records.is_empty() || records.iter().all(|(_, m)| m.is_empty()) {
        return Err(AnalysisError::NoIntrinsics);
    }
    let mut ranges: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (_, intr) in records {
        for (name, &v) in intr {
            let e = ranges.entry(name).or_insert((v, v));
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
    }
    let mut csv = String::from("intrinsic,option,bin,bin_lo,bin_hi,count\n");
    for (name, &(lo, hi)) in &ranges {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![vec![0u64; bins]; num_options];
        for (option, intr) in records {
            if let Some(&v) = intr.get(*name) {
                let b = if width == 0.0 {
                    0
                } else {
                    (((v - lo) / width) as usize).min(bins - 1)
                };
                counts[*option][b] += 1;
            }
        }
        for (option, row) in counts.iter().enumerate() {
            for (b, &count) in row.iter().enumerate() {
                let bin_lo = lo + width * b as f64;
                let bin_hi = if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 };
                writeln!(csv, "{name},{option},{b},{bin_lo:.16e},{bin_hi:.16e},{count}").unwrap();
            }
        }
    }
    Ok(csv)
}

/// One CSV row per sampled state: torso latent, the option active there,
/// and the state's index in the sample. Values use 17 significant digits
/// and parse back exactly.
pub fn export_latents(
    params: &AgentParams,
    sample: &[(Vec<f64>, usize)],
) -> Result<String, AnalysisError> {
    if sample.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let d = params.arch().latent_dim();
    let mut csv = String::new();
    for k in 0..d {
        write!(csv, "latent_{k},").unwrap();
    }
    csv.push_str("option,state_id\n");
    for (id, (obs, option)) in sample.iter().enumerate() {
        let outputs = forward(params, obs)?;
        debug_assert_eq!(outputs.latent.len(), d);
        for v in &outputs.latent {
            write!(csv, "{v:.16e},").unwrap();
        }
        writeln!(csv, "{option},{id}").unwrap();
    }
    Ok(csv)
}

/// Moving average of episode returns with per-window std. Episodes earlier
/// than one full window average over the available prefix.
pub fn learning_curve(returns: &[f64], window: usize) -> Result<Vec<CurvePoint>, AnalysisError> {
    assert!(window > 0);
    if returns.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    Ok((0..returns.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let (mean, std) = mean_std(&returns[lo..=i]);
            CurvePoint {
                episode: i + 1,
                mean,
                std,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{init_params, ActionSpec, Activation, Architecture};
    use crate::distances::{Categorical, DiagGaussian};

    fn arch(num_options: usize, action_spec: ActionSpec) -> Architecture {
        Architecture {
            input_dim: 3,
            hidden: vec![8, 8],
            activation: Activation::Tanh,
            num_options,
            action_spec,
        }
    }

    #[test]
    fn usage_counting_oracle() {
        let table = option_usage(&[0, 0, 1, 1, 1, 2, 3, 3], 4).unwrap();
        assert_eq!(table.percentages, vec![25.0, 37.5, 12.5, 25.0]);
        assert_eq!(table.total_steps, 8);
    }

    #[test]
    fn usage_single_option_and_sum() {
        let table = option_usage(&[2; 50], 4).unwrap();
        assert_eq!(table.percentages, vec![0.0, 0.0, 100.0, 0.0]);
        let table = option_usage(&[0, 1, 2, 3, 0, 1, 2], 4).unwrap();
        let sum: f64 = table.percentages.iter().sum();
        assert!((sum - 100.0).abs() < 0.01);
        assert!(matches!(option_usage(&[], 4), Err(AnalysisError::EmptyLog)));
        let from_counts = option_usage_from_counts(&[2, 3, 1, 2]).unwrap();
        assert_eq!(from_counts.percentages, vec![25.0, 37.5, 12.5, 25.0]);
        assert!(matches!(
            option_usage_from_counts(&[0, 0]),
            Err(AnalysisError::EmptyLog)
        ));
    }

    #[test]
    fn distance_report_identical_heads_is_zero() {
        // Zero all policy-head weights so every option emits the same
        // distribution at every state.
        let mut params = init_params(&arch(4, ActionSpec::Discrete(3)), 0);
        for omega in 0..4 {
            for part in ["w", "b"] {
                let range = params.layout().range(&format!("pi{omega}.{part}"));
                params.values_mut()[range].fill(0.0);
            }
        }
        let states = vec![vec![0.1, -0.4, 0.9], vec![1.0, 0.0, 0.0]];
        for kind in [DistanceKind::Hd, DistanceKind::Kld] {
            let report = pairwise_distance_report(&params, &states, kind, 1e-4).unwrap();
            assert!(report.mean.abs() < 1e-12);
            assert!(report.std.abs() < 1e-12);
            assert_eq!(report.infinite_pairs, 0);
            assert_eq!(report.state_sample_size, 2);
        }
    }

    #[test]
    fn distance_report_hd_symmetric_bounded_and_mean_consistent() {
        let params = init_params(&arch(4, ActionSpec::Discrete(5)), 7);
        let states: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64 * 0.3 - 1.0, (i as f64).sin(), 0.5])
            .collect();
        let report = pairwise_distance_report(&params, &states, DistanceKind::Hd, 1e-4).unwrap();
        let m = 4;
        let mut off = Vec::new();
        for i in 0..m {
            assert_eq!(report.matrix[i][i], 0.0);
            for j in 0..m {
                assert!((report.matrix[i][j] - report.matrix[j][i]).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&report.matrix[i][j]));
                if i < j {
                    off.push(report.matrix[i][j]);
                }
            }
        }
        // the mean over per-state samples equals the mean of matrix entries
        // because every pair contributes at every state
        let matrix_mean: f64 = off.iter().sum::<f64>() / off.len() as f64;
        assert!((report.mean - matrix_mean).abs() < 1e-12);
    }

    #[test]
    fn distance_report_kld_gaussian_with_infinities_excluded() {
        // Degenerate continuous heads cannot make KLD infinite, so build
        // the matrix path directly through pair_distance instead.
        let p = ProbDist::DiagGaussian(DiagGaussian::new(vec![0.0], vec![0.0]).unwrap());
        let q = ProbDist::DiagGaussian(DiagGaussian::new(vec![1.0], vec![0.0]).unwrap());
        let d = pair_distance(DistanceKind::Kld, &p, &q).unwrap();
        assert!((d.finite().unwrap() - 0.5).abs() < 1e-15);
        let a = ProbDist::Categorical(Categorical::new(vec![0.5, 0.5, 0.0]).unwrap());
        let b = ProbDist::Categorical(Categorical::new(vec![0.0, 0.5, 0.5]).unwrap());
        assert!(pair_distance(DistanceKind::Kld, &a, &b).unwrap().is_infinite());
    }

    #[test]
    fn distance_report_rejects_empty_sample_and_jsd() {
        let params = init_params(&arch(2, ActionSpec::Discrete(3)), 0);
        assert!(matches!(
            pairwise_distance_report(&params, &[], DistanceKind::Hd, 1e-4),
            Err(AnalysisError::EmptySample)
        ));
        assert!(matches!(
            pairwise_distance_report(&params, &[vec![0.0; 3]], DistanceKind::Jsd, 1e-4),
            Err(AnalysisError::UnsupportedMeasure(DistanceKind::Jsd))
        ));
    }

    #[test]
    fn histograms_match_hand_binned_oracle() {
        let rec = |option: usize, f: f64| {
            let mut m = BTreeMap::new();
            m.insert("forwarding".to_string(), f);
            (option, m)
        };
        // range [0, 1], 2 bins: [0, 0.5) and [0.5, 1]
        let records = vec![rec(0, 0.0), rec(0, 0.49), rec(0, 0.5), rec(1, 1.0)];
        let csv = intrinsic_reward_histograms(&records, 2, 2).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "intrinsic,option,bin,bin_lo,bin_hi,count");
        let count_of = |option: usize, bin: usize| {
            lines[1..]
                .iter()
                .find(|l| l.starts_with(&format!("forwarding,{option},{bin},")))
                .unwrap()
                .rsplit(',')
                .next()
                .unwrap()
                .parse::<u64>()
                .unwrap()
        };
        assert_eq!(count_of(0, 0), 2);
        assert_eq!(count_of(0, 1), 1);
        assert_eq!(count_of(1, 0), 0);
        assert_eq!(count_of(1, 1), 1);
        // totals equal the transition count for the label
        let total: u64 = (0..2).flat_map(|o| (0..2).map(move |b| (o, b)))
            .map(|(o, b)| count_of(o, b))
            .sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn histograms_single_option_and_no_intrinsics() {
        let mut m = BTreeMap::new();
        m.insert("control".to_string(), -0.1);
        let records = vec![(3usize, m.clone()), (3, m)];
        let csv = intrinsic_reward_histograms(&records, 4, 3).unwrap();
        for line in csv.lines().skip(1) {
            let mut it = line.split(',');
            let (_, option) = (it.next(), it.next().unwrap());
            let count: u64 = line.rsplit(',').next().unwrap().parse().unwrap();
            if option != "3" {
                assert_eq!(count, 0);
            }
        }
        assert!(matches!(
            intrinsic_reward_histograms(&[(0, BTreeMap::new())], 4, 3),
            Err(AnalysisError::NoIntrinsics)
        ));
    }

    #[test]
    fn latents_shape_determinism_and_roundtrip() {
        let params = init_params(&arch(2, ActionSpec::Discrete(3)), 4);
        let sample: Vec<(Vec<f64>, usize)> = (0..5)
            .map(|i| (vec![i as f64, 0.5, -0.25], i % 2))
            .collect();
        let a = export_latents(&params, &sample).unwrap();
        let b = export_latents(&params, &sample).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 6);
        let d = params.arch().latent_dim();
        assert_eq!(lines[0].split(',').count(), d + 2);
        // round-trip the first latent entry exactly
        let first: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        let expected = forward(&params, &sample[0].0).unwrap().latent[0];
        assert_eq!(first, expected);
        assert!(matches!(
            export_latents(&params, &[]),
            Err(AnalysisError::EmptySample)
        ));
    }

    #[test]
    fn learning_curve_constant_prefix_and_ramp() {
        let curve = learning_curve(&[2.5; 10], 4).unwrap();
        for p in &curve {
            assert_eq!(p.mean, 2.5);
            assert_eq!(p.std, 0.0);
        }
        // prefix shorter than the window averages what exists
        let curve = learning_curve(&[1.0, 3.0], 200).unwrap();
        assert_eq!(curve[0].mean, 1.0);
        assert_eq!(curve[1].mean, 2.0);
        // ramp 1..=1000, window 200: last point averages 801..=1000
        let ramp: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let curve = learning_curve(&ramp, 200).unwrap();
        assert!((curve[999].mean - 900.5).abs() < 1e-12);
        assert!(matches!(learning_curve(&[], 200), Err(AnalysisError::EmptyLog)));
    }
}
