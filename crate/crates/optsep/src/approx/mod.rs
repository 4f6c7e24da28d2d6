//! Function approximation for the option-critic heads.
//!
//! A shared MLP torso feeds per-option value, termination, and policy heads.
//! Parameters live in one flat `f64` vector with a named layout so that the
//! optimizer, checkpoints, and the reverse-mode graph all agree on where
//! everything is. All math is 64-bit.

mod checkpoint;
mod graph;
mod rmsprop;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use graph::{grad_of_scalar, Graph, GraphNet, NodeId, PolicyNodes};
pub use rmsprop::{rmsprop_step, RmsPropState, RMSPROP_EPSILON};

use crate::distances::{Categorical, DiagGaussian, ProbDist, LOG_STD_MAX, LOG_STD_MIN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("infeasible clamp: p_min {p_min} * k {k} >= 1")]
    InfeasibleClamp { p_min: f64, k: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    FormatVersionMismatch(String),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpec {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ActionSpec::Discrete(k) => k,
            ActionSpec::Continuous(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub num_options: usize,
    pub action_spec: ActionSpec,
}

impl Architecture {
    pub fn latent_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&self.input_dim)
    }
}

/// Named slices into the flat parameter vector. Covers it exactly once.
#[derive(Debug, Clone)]
pub struct Layout {
    entries: Vec<(String, Range<usize>)>,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut entries = Vec::new();
        let mut cursor = 0usize;
        let mut push = |name: String, len: usize, cursor: &mut usize| {
            entries.push((name, *cursor..*cursor + len));
            *cursor += len;
        };
        let mut in_dim = arch.input_dim;
        for (l, &h) in arch.hidden.iter().enumerate() {
            push(format!("torso.w{l}"), h * in_dim, &mut cursor);
            push(format!("torso.b{l}"), h, &mut cursor);
            in_dim = h;
        }
        let latent = in_dim;
        let m = arch.num_options;
        push("q.w".into(), m * latent, &mut cursor);
        push("q.b".into(), m, &mut cursor);
        push("beta.w".into(), m * latent, &mut cursor);
        push("beta.b".into(), m, &mut cursor);
        for omega in 0..m {
            match arch.action_spec {
                ActionSpec::Discrete(k) => {
                    push(format!("pi{omega}.w"), k * latent, &mut cursor);
                    push(format!("pi{omega}.b"), k, &mut cursor);
                }
                ActionSpec::Continuous(d) => {
                    push(format!("pi{omega}.w"), d * latent, &mut cursor);
                    push(format!("pi{omega}.b"), d, &mut cursor);
                    push(format!("pi{omega}.log_std"), d, &mut cursor);
                }
            }
        }
        Self {
            entries,
            total: cursor,
        }
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("no parameter slice named {name}"))
            .1
            .clone()
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Flat parameter store for the shared torso plus per-option heads.
#[derive(Debug, Clone)]
pub struct AgentParams {
    arch: Architecture,
    layout: Layout,
    values: Vec<f64>,
}

impl AgentParams {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        &self.values[self.layout.range(name)]
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self, ApproxError> {
        let layout = Layout::new(&arch);
        if values.len() != layout.total() {
            return Err(ApproxError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.total(),
                values.len()
            )));
        }
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One forward pass worth of head outputs.
#[derive(Debug, Clone)]
pub struct NetworkOutputs {
    pub q_omega: Vec<f64>,
    pub beta: Vec<f64>,
    pub policies: Vec<ProbDist>,
    pub latent: Vec<f64>,
}

/// Deterministic scaled-uniform init: weights uniform in
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero, per-option Gaussian
/// `log_std` zero. Each head gets its own independent draws from the seeded
/// stream.
pub fn init_params(arch: &Architecture, seed: u64) -> AgentParams {
    let layout = Layout::new(arch);
    let mut values = vec![0.0; layout.total()];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut fill_weight = |range: Range<usize>, fan_in: usize, values: &mut Vec<f64>| {
        let bound = (1.0 / fan_in as f64).sqrt();
        for v in &mut values[range] {
            *v = rng.gen_range(-bound..bound);
        }
    };
    let mut in_dim = arch.input_dim;
    for (l, &h) in arch.hidden.iter().enumerate() {
        fill_weight(layout.range(&format!("torso.w{l}")), in_dim, &mut values);
        in_dim = h;
    }
    let latent = arch.latent_dim();
    fill_weight(layout.range("q.w"), latent, &mut values);
    fill_weight(layout.range("beta.w"), latent, &mut values);
    for omega in 0..arch.num_options {
        fill_weight(layout.range(&format!("pi{omega}.w")), latent, &mut values);
    }
    AgentParams {
        arch: arch.clone(),
        layout,
        values,
    }
}

pub(crate) fn matvec(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (c, &xc) in x.iter().enumerate() {
        if xc == 0.0 {
            continue; // one-hot observations make this the common case
        }
        for r in 0..rows {
            y[r] += w[r * cols + c] * xc;
        }
    }
    y
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Deterministic forward pass through the torso and all heads.
pub fn forward(params: &AgentParams, obs: &[f64]) -> Result<NetworkOutputs, ApproxError> {
    let arch = &params.arch;
    if obs.len() != arch.input_dim {
        return Err(ApproxError::DimensionMismatch {
            expected: arch.input_dim,
            got: obs.len(),
        });
    }
    let mut h = obs.to_vec();
    let mut in_dim = arch.input_dim;
    for (l, &width) in arch.hidden.iter().enumerate() {
        let w = params.slice(&format!("torso.w{l}"));
        let b = params.slice(&format!("torso.b{l}"));
        h = matvec(w, b, &h, width, in_dim);
        for v in &mut h {
            *v = match arch.activation {
                Activation::Tanh => v.tanh(),
                Activation::Relu => v.max(0.0),
            };
        }
        in_dim = width;
    }
    let latent = h;
    let m = arch.num_options;
    let q_omega = matvec(
        params.slice("q.w"),
        params.slice("q.b"),
        &latent,
        m,
        in_dim,
    );
    let beta: Vec<f64> = matvec(
        params.slice("beta.w"),
        params.slice("beta.b"),
        &latent,
        m,
        in_dim,
    )
    .into_iter()
    .map(sigmoid)
    .collect();
    let mut policies = Vec::with_capacity(m);
    for omega in 0..m {
        let w = params.slice(&format!("pi{omega}.w"));
        let b = params.slice(&format!("pi{omega}.b"));
        match arch.action_spec {
            ActionSpec::Discrete(k) => {
                let logits = matvec(w, b, &latent, k, in_dim);
                policies.push(ProbDist::Categorical(Categorical::from_logits(&logits)));
            }
            ActionSpec::Continuous(d) => {
                let mean = matvec(w, b, &latent, d, in_dim);
                let log_std: Vec<f64> = params
                    .slice(&format!("pi{omega}.log_std"))
                    .iter()
                    .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
                    .collect();
                policies.push(ProbDist::DiagGaussian(
                    DiagGaussian::new(mean, log_std).map_err(|e| {
                        ApproxError::ShapeMismatch(format!("policy head {omega}: {e}"))
                    })?,
                ));
            }
        }
    }
    Ok(NetworkOutputs {
        q_omega,
        beta,
        policies,
        latent,
    })
}

/// Floor every probability at `p_min` and redistribute the excess over the
/// remaining entries proportionally. No-op when already above the floor.
pub fn clamp_policy(dist: &Categorical, p_min: f64) -> Result<Categorical, ApproxError> {
    let probs = dist.probs();
    let k = probs.len();
    if p_min * k as f64 >= 1.0 {
        return Err(ApproxError::InfeasibleClamp { p_min, k });
    }
    let (clamped, _) = clamp_renorm_raw(probs, p_min);
    Ok(Categorical::new(clamped).expect("clamp preserves a valid categorical"))
}

/// Water-filling clamp shared with the graph primitive. Returns the clamped
/// probabilities and the mask of floored entries.
pub(crate) fn clamp_renorm_raw(probs: &[f64], p_min: f64) -> (Vec<f64>, Vec<bool>) {
    let k = probs.len();
    let mut floored = vec![false; k];
    let mut out = probs.to_vec();
    loop {
        let mut changed = false;
        for i in 0..k {
            if !floored[i] && out[i] < p_min {
                floored[i] = true;
                changed = true;
            }
        }
        if !changed && out.iter().all(|&p| p >= p_min) {
            return (out, floored);
        }
        let n_floored = floored.iter().filter(|&&f| f).count();
        let free_mass: f64 = probs
            .iter()
            .zip(&floored)
            .filter(|(_, &f)| !f)
            .map(|(&p, _)| p)
            .sum();
        let scale = (1.0 - n_floored as f64 * p_min) / free_mass;
        for i in 0..k {
            out[i] = if floored[i] { p_min } else { probs[i] * scale };
        }
        if !changed {
            return (out, floored);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> Architecture {
        Architecture {
            input_dim: 3,
            hidden: vec![8, 8],
            activation: Activation::Tanh,
            num_options: 4,
            action_spec: ActionSpec::Discrete(5),
        }
    }

    #[test]
    fn init_is_deterministic() {
        let arch = small_arch();
        let a = init_params(&arch, 42);
        let b = init_params(&arch, 42);
        assert_eq!(a.values(), b.values());
        let c = init_params(&arch, 43);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn init_zero_input_gives_half_beta() {
        let arch = small_arch();
        let params = init_params(&arch, 1);
        let out = forward(&params, &[0.0, 0.0, 0.0]).unwrap();
        // tanh(0) = 0 through the torso, zero beta bias => sigmoid(0) = 0.5
        for b in out.beta {
            assert!((b - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_invariants() {
        let arch = small_arch();
        let params = init_params(&arch, 7);
        let out = forward(&params, &[0.4, -1.2, 0.9]).unwrap();
        assert_eq!(out.latent.len(), 8);
        for b in &out.beta {
            assert!(*b > 0.0 && *b < 1.0);
        }
        for p in &out.policies {
            match p {
                ProbDist::Categorical(c) => {
                    let sum: f64 = c.probs().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
                _ => panic!("expected categorical"),
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let params = init_params(&small_arch(), 7);
        assert!(matches!(
            forward(&params, &[1.0]),
            Err(ApproxError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shared_torso_reaches_every_head() {
        let arch = small_arch();
        let mut params = init_params(&arch, 3);
        let obs = [0.5, 0.1, -0.7];
        let base = forward(&params, &obs).unwrap();
        let idx = params.layout().range("torso.w0").start;
        params.values_mut()[idx] += 1e-3;
        let bumped = forward(&params, &obs).unwrap();
        assert_ne!(base.q_omega, bumped.q_omega);
        assert_ne!(base.beta, bumped.beta);
        for (a, b) in base.policies.iter().zip(&bumped.policies) {
            assert_ne!(a, b);
        }
    }

    #[test]
    fn clamp_policy_noop_and_floor() {
        let half = Categorical::new(vec![0.5, 0.5]).unwrap();
        let clamped = clamp_policy(&half, 1e-4).unwrap();
        assert_eq!(clamped.probs(), half.probs());

        let degenerate = Categorical::new(vec![1.0, 0.0]).unwrap();
        let clamped = clamp_policy(&degenerate, 1e-4).unwrap();
        assert!((clamped.probs()[0] - 0.9999).abs() < 1e-12);
        assert!((clamped.probs()[1] - 1e-4).abs() < 1e-15);
        let sum: f64 = clamped.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_policy_infeasible() {
        let p = Categorical::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            clamp_policy(&p, 0.6),
            Err(ApproxError::InfeasibleClamp { .. })
        ));
    }

    #[test]
    fn clamp_policy_random_inputs_stay_valid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.gen_range(2..8);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).powi(4)).collect();
            let sum: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|r| r / sum).collect();
            let dist = Categorical::new(probs).unwrap();
            let p_min = 1e-3;
            let clamped = clamp_policy(&dist, p_min).unwrap();
            let total: f64 = clamped.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for &p in clamped.probs() {
                assert!(p >= p_min - 1e-15);
            }
        }
    }
}
