//! Option-critic reinforcement learning with a Hellinger-distance
//! regularizer that pushes intra-option policies apart.
//!
//! The crate is organized as:
//!
//! - [`distances`]: f-divergences, KL divergence, Jensen-Shannon divergence,
//!   and the Hellinger distance for categorical and diagonal-Gaussian action
//!   distributions, plus the pairwise-average Hellinger regularizer with
//!   exact gradients.
//! - [`approx`]: a small MLP function approximator with per-option value,
//!   termination, and policy heads, reverse-mode gradients over a fixed
//!   primitive set, RMSprop, and checkpoint I/O.
//! - [`envs`]: desk-scale environments (four-rooms gridworld, continuous
//!   point-mass with separable intrinsic rewards).
//! - [`optioncritic`]: call-and-return option execution, synchronous
//!   multi-worker rollout collection, n-step targets, loss assembly, and the
//!   training loop.
//! - [`analysis`]: option use rates, pairwise policy-distance reports,
//!   intrinsic-reward histograms, latent exports, and learning curves.
//! - [`config`]: run configuration files and reproducibility manifests.

pub mod analysis;
pub mod approx;
pub mod config;
pub mod distances;
pub mod envs;
pub mod optioncritic;
