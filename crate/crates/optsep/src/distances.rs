//! Statistical distances between action distributions.
//!
//! Everything here is a pure function: the f-divergence family over
//! categorical distributions, KL divergence and Hellinger distance for both
//! categorical and diagonal-Gaussian distributions, Jensen-Shannon divergence
//! (categorical only), and the pairwise-average Hellinger regularizer with
//! exact gradients with respect to softmax logits or Gaussian parameters.
//!
//! Conventions: natural logarithm throughout; `0 * log 0 = 0`; a KL
//! divergence over violated support is reported as a distinguished infinite
//! value rather than an error, since analysis code must render it as `inf`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound on `log_std` entries of a [`DiagGaussian`].
pub const LOG_STD_MIN: f64 = -20.0;
/// Upper bound on `log_std` entries of a [`DiagGaussian`].
pub const LOG_STD_MAX: f64 = 5.0;

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("f-divergence undefined: Q(x)=0 on the support of P and f is unbounded at infinity")]
    DivergenceUndefined,
    #[error("invalid categorical: {0}")]
    InvalidCategorical(String),
    #[error("invalid gaussian: {0}")]
    InvalidGaussian(String),
    #[error("hd-regularizer needs at least 2 distributions, got {0}")]
    TooFewOptions(usize),
    #[error("hd-regularizer requires a homogeneous distribution family")]
    MixedFamilies,
}

/// A categorical distribution over `k` actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistanceError> {
        if probs.is_empty() {
            return Err(DistanceError::InvalidCategorical("empty support".into()));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(DistanceError::InvalidCategorical(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(DistanceError::InvalidCategorical(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self {
            probs: softmax(logits),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// A diagonal-Gaussian distribution over `d` action dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self, DistanceError> {
        if mean.len() != log_std.len() {
            return Err(DistanceError::DimensionMismatch {
                left: mean.len(),
                right: log_std.len(),
            });
        }
        if mean.is_empty() {
            return Err(DistanceError::InvalidGaussian("empty dimension".into()));
        }
        if mean.iter().chain(log_std.iter()).any(|v| !v.is_finite()) {
            return Err(DistanceError::InvalidGaussian("non-finite entry".into()));
        }
        if log_std.iter().any(|&l| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&l)) {
            return Err(DistanceError::InvalidGaussian(format!(
                "log_std outside [{LOG_STD_MIN}, {LOG_STD_MAX}]"
            )));
        }
        Ok(Self { mean, log_std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// An action distribution of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProbDist {
    Categorical(Categorical),
    DiagGaussian(DiagGaussian),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceKind {
    Kld,
    Hd,
    Jsd,
    FDiv,
}

/// The outcome of a distance computation. KL divergence over violated
/// support is `Infinite`; every other case is a finite nonnegative value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceValue {
    pub kind: DistanceKind,
    pub value: Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Magnitude {
    Finite(f64),
    Infinite,
}

impl Magnitude {
    pub fn finite(self) -> Option<f64> {
        match self {
            Magnitude::Finite(v) => Some(v),
            Magnitude::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Magnitude::Infinite)
    }
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Magnitude::Finite(v) => write!(f, "{v}"),
            Magnitude::Infinite => write!(f, "inf"),
        }
    }
}

impl DistanceValue {
    fn finite(kind: DistanceKind, value: f64) -> Self {
        // Convexity guarantees nonnegativity; rounding may dip a hair below.
        Self {
            kind,
            value: Magnitude::Finite(value.max(0.0)),
        }
    }

    /// The finite value, panicking on `Infinite`. Intended for callers that
    /// have already ruled out support violations (HD, JSD, generic f-div).
    pub fn unwrap_finite(self) -> f64 {
        match self.value {
            Magnitude::Finite(v) => v,
            Magnitude::Infinite => panic!("infinite {:?} treated as finite", self.kind),
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_dims(left: usize, right: usize) -> Result<(), DistanceError> {
    if left != right {
        Err(DistanceError::DimensionMismatch { left, right })
    } else {
        Ok(())
    }
}

/// Generic f-divergence `D_f(P || Q) = sum_x Q(x) f(P(x)/Q(x))` for a convex
/// `f` with `f(1) = 0`.
///
/// Cells with `Q(x) = 0 < P(x)` contribute `P(x) * lim_{t->inf} f(t)/t`. The
/// limit is probed numerically; when it grows without bound (KL-type `f`)
/// the divergence is undefined here and an error is returned.
pub fn f_divergence_categorical(
    f: impl Fn(f64) -> f64,
    p: &Categorical,
    q: &Categorical,
) -> Result<DistanceValue, DistanceError> {
    check_dims(p.len(), q.len())?;
    let mut total = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if qi > 0.0 {
            total += qi * f(pi / qi);
        } else if pi > 0.0 {
            let r1 = f(1e8) / 1e8;
            let r2 = f(1e12) / 1e12;
            if r2.abs() > r1.abs() + 1e-12 {
                return Err(DistanceError::DivergenceUndefined);
            }
            total += pi * r2;
        }
    }
    Ok(DistanceValue::finite(DistanceKind::FDiv, total))
}

/// KL divergence `D_KL(P || Q) = sum_x P(x) log(P(x)/Q(x))`, asymmetric.
///
/// `Infinite` when `P(x) > 0` somewhere `Q(x) = 0`.
pub fn kld_categorical(p: &Categorical, q: &Categorical) -> Result<DistanceValue, DistanceError> {
    check_dims(p.len(), q.len())?;
    let mut total = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi > 0.0 {
            if qi == 0.0 {
                return Ok(DistanceValue {
                    kind: DistanceKind::Kld,
                    value: Magnitude::Infinite,
                });
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(DistanceValue::finite(DistanceKind::Kld, total))
}

/// Closed-form KL divergence between diagonal Gaussians, summed per
/// dimension: `log(sq/sp) + (sp^2 + (mp-mq)^2) / (2 sq^2) - 1/2`.
pub fn kld_diag_gaussian(p: &DiagGaussian, q: &DiagGaussian) -> Result<DistanceValue, DistanceError> {
    check_dims(p.dim(), q.dim())?;
    let mut total = 0.0;
    for j in 0..p.dim() {
        let (mp, mq) = (p.mean[j], q.mean[j]);
        let (sp, sq) = (p.log_std[j].exp(), q.log_std[j].exp());
        total += (sq / sp).ln() + (sp * sp + (mp - mq) * (mp - mq)) / (2.0 * sq * sq) - 0.5;
    }
    Ok(DistanceValue::finite(DistanceKind::Kld, total))
}

fn hellinger_categorical_raw(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let d = pi.sqrt() - qi.sqrt();
            d * d
        })
        .sum();
    // s/2 = 1 - BC can overshoot 1 by rounding.
    ((s / 2.0).min(1.0)).sqrt()
}

/// Hellinger distance `(1/sqrt 2) * ||sqrt P - sqrt Q||_2`, symmetric,
/// bounded to `[0, 1]`.
pub fn hellinger_categorical(
    p: &Categorical,
    q: &Categorical,
) -> Result<DistanceValue, DistanceError> {
    check_dims(p.len(), q.len())?;
    Ok(DistanceValue::finite(
        DistanceKind::Hd,
        hellinger_categorical_raw(&p.probs, &q.probs),
    ))
}

/// Log of the Bhattacharyya coefficient between two diagonal Gaussians.
pub(crate) fn log_bhattacharyya_diag_gaussian(
    mean_p: &[f64],
    log_std_p: &[f64],
    mean_q: &[f64],
    log_std_q: &[f64],
) -> f64 {
    let mut log_bc = 0.0;
    for j in 0..mean_p.len() {
        let (sp, sq) = (log_std_p[j].exp(), log_std_q[j].exp());
        let var_sum = sp * sp + sq * sq;
        let dm = mean_p[j] - mean_q[j];
        log_bc += 0.5 * ((2.0 * sp * sq / var_sum).ln()) - dm * dm / (4.0 * var_sum);
    }
    log_bc
}

fn hellinger_diag_gaussian_raw(
    mean_p: &[f64],
    log_std_p: &[f64],
    mean_q: &[f64],
    log_std_q: &[f64],
) -> f64 {
    let bc = log_bhattacharyya_diag_gaussian(mean_p, log_std_p, mean_q, log_std_q)
        .exp()
        .clamp(0.0, 1.0);
    (1.0 - bc).sqrt()
}

/// Hellinger distance `sqrt(1 - BC)` between diagonal Gaussians, with the
/// Bhattacharyya coefficient computed in log space and clamped to `[0, 1]`
/// before the square root.
pub fn hellinger_diag_gaussian(
    p: &DiagGaussian,
    q: &DiagGaussian,
) -> Result<DistanceValue, DistanceError> {
    check_dims(p.dim(), q.dim())?;
    Ok(DistanceValue::finite(
        DistanceKind::Hd,
        hellinger_diag_gaussian_raw(&p.mean, &p.log_std, &q.mean, &q.log_std),
    ))
}

/// Jensen-Shannon divergence `(D_KL(P||M) + D_KL(Q||M)) / 2` with
/// `M = (P+Q)/2`; symmetric, in `[0, log 2]`. Analysis-only: there is no
/// closed form for the continuous case, so it never enters a loss.
pub fn jsd_categorical(p: &Categorical, q: &Categorical) -> Result<DistanceValue, DistanceError> {
    check_dims(p.len(), q.len())?;
    let m: Vec<f64> = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&pi, &qi)| 0.5 * (pi + qi))
        .collect();
    let mut total = 0.0;
    for (&pi, &mi) in p.probs.iter().zip(&m) {
        if pi > 0.0 {
            total += 0.5 * pi * (pi / mi).ln();
        }
    }
    for (&qi, &mi) in q.probs.iter().zip(&m) {
        if qi > 0.0 {
            total += 0.5 * qi * (qi / mi).ln();
        }
    }
    Ok(DistanceValue::finite(DistanceKind::Jsd, total))
}

/// Hellinger distance between two distributions of the same family.
pub fn hellinger(p: &ProbDist, q: &ProbDist) -> Result<DistanceValue, DistanceError> {
    match (p, q) {
        (ProbDist::Categorical(p), ProbDist::Categorical(q)) => hellinger_categorical(p, q),
        (ProbDist::DiagGaussian(p), ProbDist::DiagGaussian(q)) => hellinger_diag_gaussian(p, q),
        _ => Err(DistanceError::MixedFamilies),
    }
}

/// Average Hellinger distance over all unordered pairs of `m >= 2`
/// distributions; in `[0, 1]`.
pub fn hd_regularizer(dists: &[ProbDist]) -> Result<f64, DistanceError> {
    let m = dists.len();
    if m < 2 {
        return Err(DistanceError::TooFewOptions(m));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += hellinger(&dists[i], &dists[j])?.unwrap_finite();
        }
    }
    let pairs = (m * (m - 1) / 2) as f64;
    Ok(total / pairs)
}

/// Gradient of the categorical Hellinger distance with respect to the
/// probabilities of `p`. Subgradient 0 at coincident distributions.
pub(crate) fn hellinger_categorical_grad_p(p: &[f64], q: &[f64]) -> Vec<f64> {
    let h = hellinger_categorical_raw(p, q);
    if h < 1e-12 {
        return vec![0.0; p.len()];
    }
    // H = sqrt(S)/sqrt(2), S = sum (sqrt p - sqrt q)^2
    // dH/dp_i = (1 - sqrt(q_i/p_i)) / (4 H)
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi <= 0.0 {
                0.0
            } else {
                (1.0 - (qi / pi).sqrt()) / (4.0 * h)
            }
        })
        .collect()
}

/// Gradients of the Gaussian Hellinger distance with respect to
/// `(mean_p, log_std_p)`; symmetric in the pair, so the gradient for `q` is
/// obtained by swapping arguments. Subgradient 0 at coincident
/// distributions.
pub(crate) fn hellinger_diag_gaussian_grad_p(
    mean_p: &[f64],
    log_std_p: &[f64],
    mean_q: &[f64],
    log_std_q: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = mean_p.len();
    let h = hellinger_diag_gaussian_raw(mean_p, log_std_p, mean_q, log_std_q);
    if h < 1e-12 {
        return (vec![0.0; d], vec![0.0; d]);
    }
    let bc = log_bhattacharyya_diag_gaussian(mean_p, log_std_p, mean_q, log_std_q)
        .exp()
        .clamp(0.0, 1.0);
    // H = sqrt(1 - BC) => dH/dx = -BC * dlogBC/dx / (2H)
    let scale = -bc / (2.0 * h);
    let mut grad_mean = vec![0.0; d];
    let mut grad_log_std = vec![0.0; d];
    for j in 0..d {
        let (sp, sq) = (log_std_p[j].exp(), log_std_q[j].exp());
        let var_sum = sp * sp + sq * sq;
        let dm = mean_p[j] - mean_q[j];
        // dlogBC/dmu_p = -dm / (2 var_sum)
        grad_mean[j] = scale * (-dm / (2.0 * var_sum));
        // dlogBC/dsigma_p = 1/(2 sp) - sp/var_sum + dm^2 sp / (2 var_sum^2)
        let dls = 1.0 / (2.0 * sp) - sp / var_sum + dm * dm * sp / (2.0 * var_sum * var_sum);
        grad_log_std[j] = scale * dls * sp;
    }
    (grad_mean, grad_log_std)
}

/// Chain a gradient with respect to softmax probabilities back to logits.
pub(crate) fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(grad_probs).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(grad_probs)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}

/// Gradient of [`hd_regularizer`] over softmax-parameterized categoricals.
/// Returns the regularizer value and one gradient vector per option, with
/// respect to the logits.
pub fn hd_regularizer_grad_softmax(
    logits: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>), DistanceError> {
    let m = logits.len();
    if m < 2 {
        return Err(DistanceError::TooFewOptions(m));
    }
    let k = logits[0].len();
    for l in logits {
        check_dims(l.len(), k)?;
    }
    let probs: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
    let pairs = (m * (m - 1) / 2) as f64;
    let mut value = 0.0;
    let mut grad_probs = vec![vec![0.0; k]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            value += hellinger_categorical_raw(&probs[i], &probs[j]);
            let gi = hellinger_categorical_grad_p(&probs[i], &probs[j]);
            let gj = hellinger_categorical_grad_p(&probs[j], &probs[i]);
            for a in 0..k {
                grad_probs[i][a] += gi[a] / pairs;
                grad_probs[j][a] += gj[a] / pairs;
            }
        }
    }
    let grads = probs
        .iter()
        .zip(&grad_probs)
        .map(|(p, g)| softmax_backward(p, g))
        .collect();
    Ok((value / pairs, grads))
}

/// Gradient of [`hd_regularizer`] over diagonal Gaussians. Returns the
/// regularizer value and, per option, gradients with respect to the mean and
/// `log_std` vectors.
pub fn hd_regularizer_grad_gaussian(
    params: &[(Vec<f64>, Vec<f64>)],
) -> Result<(f64, Vec<(Vec<f64>, Vec<f64>)>), DistanceError> {
    let m = params.len();
    if m < 2 {
        return Err(DistanceError::TooFewOptions(m));
    }
    let d = params[0].0.len();
    for (mean, log_std) in params {
        check_dims(mean.len(), d)?;
        check_dims(log_std.len(), d)?;
    }
    let pairs = (m * (m - 1) / 2) as f64;
    let mut value = 0.0;
    let mut grads = vec![(vec![0.0; d], vec![0.0; d]); m];
    for i in 0..m {
        for j in (i + 1)..m {
            let (mi, li) = (&params[i].0, &params[i].1);
            let (mj, lj) = (&params[j].0, &params[j].1);
            value += hellinger_diag_gaussian_raw(mi, li, mj, lj);
            let (gmi, gli) = hellinger_diag_gaussian_grad_p(mi, li, mj, lj);
            let (gmj, glj) = hellinger_diag_gaussian_grad_p(mj, lj, mi, li);
            for a in 0..d {
                grads[i].0[a] += gmi[a] / pairs;
                grads[i].1[a] += gli[a] / pairs;
                grads[j].0[a] += gmj[a] / pairs;
                grads[j].1[a] += glj[a] / pairs;
            }
        }
    }
    Ok((value / pairs, grads))
}
