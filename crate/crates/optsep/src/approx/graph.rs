//! Reverse-mode differentiation over a fixed primitive set.
//!
//! A [`Graph`] is a tape of vector-valued nodes built against an immutable
//! [`AgentParams`] snapshot. Values are computed eagerly on construction;
//! [`Graph::backward`] walks the tape in reverse and accumulates a gradient
//! in the flat parameter layout. The primitive set is exactly what the
//! option-critic loss needs: affine maps, tanh/relu/sigmoid/softmax, the
//! probability clamp, categorical and Gaussian log-probs and entropies, and
//! the Hellinger distance in both families.

use super::{clamp_renorm_raw, matvec, ActionSpec, Activation, AgentParams, ApproxError};
use crate::distances::{
    self, softmax, softmax_backward, LOG_STD_MAX, LOG_STD_MIN,
};

const HALF_LN_2PI: f64 = 0.9189385332046727;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Param { offset: usize },
    Input,
    Affine { w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    Softmax { x: NodeId },
    ClampRenorm { x: NodeId, p_min: f64 },
    ClampRange { x: NodeId, lo: f64, hi: f64 },
    Index { x: NodeId, i: usize },
    LogIndex { probs: NodeId, i: usize },
    EntropyCat { probs: NodeId },
    HellingerCat { p: NodeId, q: NodeId },
    GaussLogProb { mean: NodeId, log_std: NodeId, action: Vec<f64> },
    GaussEntropy { log_std: NodeId },
    HellingerGauss { mean_p: NodeId, ls_p: NodeId, mean_q: NodeId, ls_q: NodeId },
    AddScaled { terms: Vec<(NodeId, f64)> },
    SquaredError { x: NodeId, target: f64 },
    ScaleShift { x: NodeId, scale: f64 },
}

struct Node {
    op: Op,
    value: Vec<f64>,
    needs_grad: bool,
}

/// Policy-head nodes for one option.
#[derive(Debug, Clone)]
pub enum PolicyNodes {
    Categorical { probs: NodeId },
    Gaussian { mean: NodeId, log_std: NodeId },
}

/// Nodes produced by a full network forward pass inside a graph.
#[derive(Debug, Clone)]
pub struct GraphNet {
    pub latent: NodeId,
    pub q_omega: NodeId,
    pub beta: NodeId,
    pub policies: Vec<PolicyNodes>,
}

pub struct Graph<'p> {
    params: &'p AgentParams,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p AgentParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    /// A named parameter slice as a leaf node.
    pub fn param(&mut self, name: &str) -> NodeId {
        let range = self.params.layout().range(name);
        let value = self.params.values()[range.clone()].to_vec();
        self.push(
            Op::Param {
                offset: range.start,
            },
            value,
            true,
        )
    }

    /// A constant input vector (no gradient flows into it).
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        let value = matvec(
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
            &self.nodes[x.0].value,
            rows,
            cols,
        );
        let ng = self.ng(w) || self.ng(b) || self.ng(x);
        self.push(Op::Affine { w, b, x, rows, cols }, value, ng)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        let ng = self.ng(x);
        self.push(Op::Tanh { x }, value, ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| v.max(0.0)).collect();
        let ng = self.ng(x);
        self.push(Op::Relu { x }, value, ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self
            .nodes[x.0]
            .value
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let ng = self.ng(x);
        self.push(Op::Sigmoid { x }, value, ng)
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let value = softmax(&self.nodes[x.0].value);
        let ng = self.ng(x);
        self.push(Op::Softmax { x }, value, ng)
    }

    pub fn clamp_renorm(&mut self, x: NodeId, p_min: f64) -> NodeId {
        let (value, _) = clamp_renorm_raw(&self.nodes[x.0].value, p_min);
        let ng = self.ng(x);
        self.push(Op::ClampRenorm { x, p_min }, value, ng)
    }

    pub fn clamp_range(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| v.clamp(lo, hi)).collect();
        let ng = self.ng(x);
        self.push(Op::ClampRange { x, lo, hi }, value, ng)
    }

    pub fn index(&mut self, x: NodeId, i: usize) -> NodeId {
        let value = vec![self.nodes[x.0].value[i]];
        let ng = self.ng(x);
        self.push(Op::Index { x, i }, value, ng)
    }

    /// `ln p_i` of a probability vector.
    pub fn log_index(&mut self, probs: NodeId, i: usize) -> NodeId {
        let value = vec![self.nodes[probs.0].value[i].ln()];
        let ng = self.ng(probs);
        self.push(Op::LogIndex { probs, i }, value, ng)
    }

    /// Shannon entropy of a categorical probability vector.
    pub fn entropy_categorical(&mut self, probs: NodeId) -> NodeId {
        let h: f64 = self.nodes[probs.0]
            .value
            .iter()
            .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
            .sum();
        let ng = self.ng(probs);
        self.push(Op::EntropyCat { probs }, vec![h], ng)
    }

    pub fn hellinger_categorical(&mut self, p: NodeId, q: NodeId) -> NodeId {
        let s: f64 = self.nodes[p.0]
            .value
            .iter()
            .zip(&self.nodes[q.0].value)
            .map(|(&a, &b)| {
                let d = a.sqrt() - b.sqrt();
                d * d
            })
            .sum();
        let value = ((s / 2.0).min(1.0)).sqrt();
        let ng = self.ng(p) || self.ng(q);
        self.push(Op::HellingerCat { p, q }, vec![value], ng)
    }

    /// Diagonal-Gaussian log density of a fixed action.
    pub fn gaussian_log_prob(&mut self, mean: NodeId, log_std: NodeId, action: Vec<f64>) -> NodeId {
        let mut lp = 0.0;
        for j in 0..action.len() {
            let mu = self.nodes[mean.0].value[j];
            let ls = self.nodes[log_std.0].value[j];
            let sigma = ls.exp();
            let z = (action[j] - mu) / sigma;
            lp += -ls - HALF_LN_2PI - 0.5 * z * z;
        }
        let ng = self.ng(mean) || self.ng(log_std);
        self.push(Op::GaussLogProb { mean, log_std, action }, vec![lp], ng)
    }

    pub fn gaussian_entropy(&mut self, log_std: NodeId) -> NodeId {
        let h: f64 = self.nodes[log_std.0]
            .value
            .iter()
            .map(|ls| ls + 0.5 + HALF_LN_2PI)
            .sum();
        let ng = self.ng(log_std);
        self.push(Op::GaussEntropy { log_std }, vec![h], ng)
    }

    pub fn hellinger_gaussian(
        &mut self,
        mean_p: NodeId,
        ls_p: NodeId,
        mean_q: NodeId,
        ls_q: NodeId,
    ) -> NodeId {
        let bc = distances::log_bhattacharyya_diag_gaussian(
            &self.nodes[mean_p.0].value,
            &self.nodes[ls_p.0].value,
            &self.nodes[mean_q.0].value,
            &self.nodes[ls_q.0].value,
        )
        .exp()
        .clamp(0.0, 1.0);
        let value = (1.0 - bc).sqrt();
        let ng = self.ng(mean_p) || self.ng(ls_p) || self.ng(mean_q) || self.ng(ls_q);
        self.push(
            Op::HellingerGauss { mean_p, ls_p, mean_q, ls_q },
            vec![value],
            ng,
        )
    }

    /// Weighted sum of scalar nodes.
    pub fn add_scaled(&mut self, terms: Vec<(NodeId, f64)>) -> NodeId {
        let value: f64 = terms
            .iter()
            .map(|&(id, c)| self.nodes[id.0].value[0] * c)
            .sum();
        let ng = terms.iter().any(|&(id, _)| self.ng(id));
        self.push(Op::AddScaled { terms }, vec![value], ng)
    }

    /// `(x - target)^2` for a scalar node and constant target.
    pub fn squared_error(&mut self, x: NodeId, target: f64) -> NodeId {
        let d = self.nodes[x.0].value[0] - target;
        let ng = self.ng(x);
        self.push(Op::SquaredError { x, target }, vec![d * d], ng)
    }

    pub fn scale_shift(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let value = self.nodes[x.0].value[0] * scale + shift;
        let ng = self.ng(x);
        self.push(Op::ScaleShift { x, scale }, vec![value], ng)
    }

    /// Full network forward pass: torso, Q head, termination head, and one
    /// policy head per option. `p_min > 0` routes discrete policies through
    /// the probability clamp.
    pub fn network_forward(&mut self, obs: &[f64], p_min: f64) -> Result<GraphNet, ApproxError> {
        let arch = self.params.arch().clone();
        if obs.len() != arch.input_dim {
            return Err(ApproxError::DimensionMismatch {
                expected: arch.input_dim,
                got: obs.len(),
            });
        }
        let mut h = self.input(obs.to_vec());
        let mut in_dim = arch.input_dim;
        for (l, &width) in arch.hidden.iter().enumerate() {
            let w = self.param(&format!("torso.w{l}"));
            let b = self.param(&format!("torso.b{l}"));
            let z = self.affine(w, b, h, width, in_dim);
            h = match arch.activation {
                Activation::Tanh => self.tanh(z),
                Activation::Relu => self.relu(z),
            };
            in_dim = width;
        }
        let latent = h;
        let m = arch.num_options;
        let qw = self.param("q.w");
        let qb = self.param("q.b");
        let q_omega = self.affine(qw, qb, latent, m, in_dim);
        let bw = self.param("beta.w");
        let bb = self.param("beta.b");
        let beta_z = self.affine(bw, bb, latent, m, in_dim);
        let beta = self.sigmoid(beta_z);
        let mut policies = Vec::with_capacity(m);
        for omega in 0..m {
            let w = self.param(&format!("pi{omega}.w"));
            let b = self.param(&format!("pi{omega}.b"));
            match arch.action_spec {
                ActionSpec::Discrete(k) => {
                    let logits = self.affine(w, b, latent, k, in_dim);
                    let mut probs = self.softmax(logits);
                    if p_min > 0.0 {
                        probs = self.clamp_renorm(probs, p_min);
                    }
                    policies.push(PolicyNodes::Categorical { probs });
                }
                ActionSpec::Continuous(d) => {
                    let mean = self.affine(w, b, latent, d, in_dim);
                    let raw_ls = self.param(&format!("pi{omega}.log_std"));
                    let log_std = self.clamp_range(raw_ls, LOG_STD_MIN, LOG_STD_MAX);
                    policies.push(PolicyNodes::Gaussian { mean, log_std });
                }
            }
        }
        Ok(GraphNet {
            latent,
            q_omega,
            beta,
            policies,
        })
    }

    /// Reverse pass from a scalar node; returns the gradient in the flat
    /// parameter layout.
    pub fn backward(&self, root: NodeId) -> Vec<f64> {
        debug_assert_eq!(self.nodes[root.0].value.len(), 1);
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        node_grads[root.0] = Some(vec![1.0]);
        let mut out = vec![0.0; self.params.values().len()];
        for id in (0..=root.0).rev() {
            let Some(grad) = node_grads[id].take() else {
                continue;
            };
            if !self.nodes[id].needs_grad {
                continue;
            }
            let add = |store: &mut Vec<Option<Vec<f64>>>, target: NodeId, contrib: Vec<f64>| {
                match &mut store[target.0] {
                    Some(existing) => {
                        for (e, c) in existing.iter_mut().zip(contrib) {
                            *e += c;
                        }
                    }
                    slot => *slot = Some(contrib),
                }
            };
            match &self.nodes[id].op {
                Op::Param { offset } => {
                    for (i, g) in grad.iter().enumerate() {
                        out[offset + i] += *g;
                    }
                }
                Op::Input => {}
                Op::Affine { w, b, x, rows, cols } => {
                    let xv = &self.nodes[x.0].value;
                    if self.ng(*w) {
                        let mut dw = vec![0.0; rows * cols];
                        for (c, &xc) in xv.iter().enumerate() {
                            if xc == 0.0 {
                                continue;
                            }
                            for r in 0..*rows {
                                dw[r * cols + c] = grad[r] * xc;
                            }
                        }
                        add(&mut node_grads, *w, dw);
                    }
                    if self.ng(*b) {
                        add(&mut node_grads, *b, grad.clone());
                    }
                    if self.ng(*x) {
                        let wv = &self.nodes[w.0].value;
                        let mut dx = vec![0.0; *cols];
                        for r in 0..*rows {
                            let gr = grad[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for c in 0..*cols {
                                dx[c] += wv[r * cols + c] * gr;
                            }
                        }
                        add(&mut node_grads, *x, dx);
                    }
                }
                Op::Tanh { x } => {
                    let contrib = self.nodes[id]
                        .value
                        .iter()
                        .zip(&grad)
                        .map(|(&y, &g)| g * (1.0 - y * y))
                        .collect();
                    add(&mut node_grads, *x, contrib);
                }
                Op::Relu { x } => {
                    let contrib = self.nodes[x.0]
                        .value
                        .iter()
                        .zip(&grad)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    add(&mut node_grads, *x, contrib);
                }
                Op::Sigmoid { x } => {
                    let contrib = self.nodes[id]
                        .value
                        .iter()
                        .zip(&grad)
                        .map(|(&y, &g)| g * y * (1.0 - y))
                        .collect();
                    add(&mut node_grads, *x, contrib);
                }
                Op::Softmax { x } => {
                    let contrib = softmax_backward(&self.nodes[id].value, &grad);
                    add(&mut node_grads, *x, contrib);
                }
                Op::ClampRenorm { x, p_min } => {
                    let xv = &self.nodes[x.0].value;
                    let (_, floored) = clamp_renorm_raw(xv, *p_min);
                    let n_floored = floored.iter().filter(|&&f| f).count();
                    let contrib = if n_floored == 0 {
                        grad.clone()
                    } else {
                        let free_mass: f64 = xv
                            .iter()
                            .zip(&floored)
                            .filter(|(_, &f)| !f)
                            .map(|(&p, _)| p)
                            .sum();
                        let scale = (1.0 - n_floored as f64 * p_min) / free_mass;
                        let weighted: f64 = xv
                            .iter()
                            .zip(&grad)
                            .zip(&floored)
                            .filter(|(_, &f)| !f)
                            .map(|((&p, &g), _)| g * p)
                            .sum();
                        xv.iter()
                            .zip(&grad)
                            .zip(&floored)
                            .map(|((_, &g), &f)| {
                                if f {
                                    0.0
                                } else {
                                    scale * (g - weighted / free_mass)
                                }
                            })
                            .collect()
                    };
                    add(&mut node_grads, *x, contrib);
                }
                Op::ClampRange { x, lo, hi } => {
                    let contrib = self.nodes[x.0]
                        .value
                        .iter()
                        .zip(&grad)
                        .map(|(&v, &g)| if v > *lo && v < *hi { g } else { 0.0 })
                        .collect();
                    add(&mut node_grads, *x, contrib);
                }
                Op::Index { x, i } => {
                    let mut contrib = vec![0.0; self.nodes[x.0].value.len()];
                    contrib[*i] = grad[0];
                    add(&mut node_grads, *x, contrib);
                }
                Op::LogIndex { probs, i } => {
                    let mut contrib = vec![0.0; self.nodes[probs.0].value.len()];
                    contrib[*i] = grad[0] / self.nodes[probs.0].value[*i];
                    add(&mut node_grads, *probs, contrib);
                }
                Op::EntropyCat { probs } => {
                    let contrib = self.nodes[probs.0]
                        .value
                        .iter()
                        .map(|&p| {
                            if p > 0.0 {
                                -grad[0] * (p.ln() + 1.0)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    add(&mut node_grads, *probs, contrib);
                }
                Op::HellingerCat { p, q } => {
                    let pv = &self.nodes[p.0].value;
                    let qv = &self.nodes[q.0].value;
                    if self.ng(*p) {
                        let mut gp = distances::hellinger_categorical_grad_p(pv, qv);
                        for g in &mut gp {
                            *g *= grad[0];
                        }
                        add(&mut node_grads, *p, gp);
                    }
                    if self.ng(*q) {
                        let mut gq = distances::hellinger_categorical_grad_p(qv, pv);
                        for g in &mut gq {
                            *g *= grad[0];
                        }
                        add(&mut node_grads, *q, gq);
                    }
                }
                Op::GaussLogProb { mean, log_std, action } => {
                    let mv = &self.nodes[mean.0].value;
                    let lsv = &self.nodes[log_std.0].value;
                    let mut dmean = vec![0.0; mv.len()];
                    let mut dls = vec![0.0; mv.len()];
                    for j in 0..mv.len() {
                        let sigma = lsv[j].exp();
                        let z = (action[j] - mv[j]) / sigma;
                        dmean[j] = grad[0] * z / sigma;
                        dls[j] = grad[0] * (z * z - 1.0);
                    }
                    if self.ng(*mean) {
                        add(&mut node_grads, *mean, dmean);
                    }
                    if self.ng(*log_std) {
                        add(&mut node_grads, *log_std, dls);
                    }
                }
                Op::GaussEntropy { log_std } => {
                    let contrib = vec![grad[0]; self.nodes[log_std.0].value.len()];
                    add(&mut node_grads, *log_std, contrib);
                }
                Op::HellingerGauss { mean_p, ls_p, mean_q, ls_q } => {
                    let mp = &self.nodes[mean_p.0].value;
                    let lp = &self.nodes[ls_p.0].value;
                    let mq = &self.nodes[mean_q.0].value;
                    let lq = &self.nodes[ls_q.0].value;
                    let (mut gm, mut gl) = distances::hellinger_diag_gaussian_grad_p(mp, lp, mq, lq);
                    for g in gm.iter_mut().chain(gl.iter_mut()) {
                        *g *= grad[0];
                    }
                    add(&mut node_grads, *mean_p, gm);
                    add(&mut node_grads, *ls_p, gl);
                    let (mut gm, mut gl) = distances::hellinger_diag_gaussian_grad_p(mq, lq, mp, lp);
                    for g in gm.iter_mut().chain(gl.iter_mut()) {
                        *g *= grad[0];
                    }
                    add(&mut node_grads, *mean_q, gm);
                    add(&mut node_grads, *ls_q, gl);
                }
                Op::AddScaled { terms } => {
                    for &(term, c) in terms {
                        add(&mut node_grads, term, vec![grad[0] * c]);
                    }
                }
                Op::SquaredError { x, target } => {
                    let d = self.nodes[x.0].value[0] - target;
                    add(&mut node_grads, *x, vec![2.0 * d * grad[0]]);
                }
                Op::ScaleShift { x, scale, .. } => {
                    add(&mut node_grads, *x, vec![grad[0] * scale]);
                }
            }
        }
        out
    }
}

/// Value and exact gradient of a scalar loss built from graph primitives.
pub fn grad_of_scalar(
    params: &AgentParams,
    build: impl FnOnce(&mut Graph) -> Result<NodeId, ApproxError>,
) -> Result<(f64, Vec<f64>), ApproxError> {
    let mut graph = Graph::new(params);
    let root = build(&mut graph)?;
    let value = graph.scalar(root);
    let grad = graph.backward(root);
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{forward, init_params, Architecture};

    fn tiny_arch() -> Architecture {
        Architecture {
            input_dim: 4,
            hidden: vec![6, 5],
            activation: Activation::Tanh,
            num_options: 3,
            action_spec: ActionSpec::Discrete(4),
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let params = init_params(&tiny_arch(), 0);
        let (value, grad) = grad_of_scalar(&params, |g| Ok(g.input(vec![3.5]))).unwrap();
        assert_eq!(value, 3.5);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn graph_forward_matches_plain_forward() {
        let params = init_params(&tiny_arch(), 9);
        let obs = [0.3, -0.8, 0.0, 1.1];
        let plain = forward(&params, &obs).unwrap();
        let mut graph = Graph::new(&params);
        let net = graph.network_forward(&obs, 0.0).unwrap();
        assert_eq!(graph.value(net.q_omega), plain.q_omega.as_slice());
        assert_eq!(graph.value(net.beta), plain.beta.as_slice());
        assert_eq!(graph.value(net.latent), plain.latent.as_slice());
    }

    /// Central-difference oracle over the full flat parameter vector.
    fn finite_difference_check(
        params: &AgentParams,
        loss: impl Fn(&AgentParams) -> f64,
        analytic: &[f64],
        tol: f64,
    ) {
        let step = 1e-6;
        for i in 0..params.values().len() {
            let mut plus = params.clone();
            plus.values_mut()[i] += step;
            let mut minus = params.clone();
            minus.values_mut()[i] -= step;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
            let rel = (analytic[i] - fd).abs() / fd.abs().max(1e-6);
            assert!(
                rel <= tol,
                "param {i}: analytic {} vs finite difference {fd}",
                analytic[i]
            );
        }
    }

    fn composite_loss(graph: &mut Graph, obs: &[f64]) -> Result<NodeId, ApproxError> {
        let net = graph.network_forward(obs, 0.0)?;
        let q0 = graph.index(net.q_omega, 0);
        let vloss = graph.squared_error(q0, 0.7);
        let beta1 = graph.index(net.beta, 1);
        let PolicyNodes::Categorical { probs: p0 } = net.policies[0] else {
            unreachable!()
        };
        let PolicyNodes::Categorical { probs: p1 } = net.policies[1] else {
            unreachable!()
        };
        let logp = graph.log_index(p0, 2);
        let ent = graph.entropy_categorical(p0);
        let hd = graph.hellinger_categorical(p0, p1);
        Ok(graph.add_scaled(vec![
            (vloss, 0.5),
            (beta1, 0.3),
            (logp, -1.2),
            (ent, -0.01),
            (hd, -0.7),
        ]))
    }

    #[test]
    fn composite_loss_matches_finite_differences() {
        let params = init_params(&tiny_arch(), 21);
        let obs = [0.4, -0.3, 0.9, -1.5];
        let (_, grad) = grad_of_scalar(&params, |g| composite_loss(g, &obs)).unwrap();
        finite_difference_check(
            &params,
            |p| {
                let mut g = Graph::new(p);
                let root = composite_loss(&mut g, &obs).unwrap();
                g.scalar(root)
            },
            &grad,
            1e-4,
        );
    }

    #[test]
    fn hd_through_softmax_matches_finite_differences() {
        let params = init_params(&tiny_arch(), 33);
        let obs = [1.0, 0.0, 0.0, 0.0];
        let build = |g: &mut Graph| -> Result<NodeId, ApproxError> {
            let net = g.network_forward(&obs, 0.0)?;
            let PolicyNodes::Categorical { probs: p0 } = net.policies[0] else {
                unreachable!()
            };
            let PolicyNodes::Categorical { probs: p1 } = net.policies[1] else {
                unreachable!()
            };
            let PolicyNodes::Categorical { probs: p2 } = net.policies[2] else {
                unreachable!()
            };
            let h01 = g.hellinger_categorical(p0, p1);
            let h02 = g.hellinger_categorical(p0, p2);
            let h12 = g.hellinger_categorical(p1, p2);
            let third = 1.0 / 3.0;
            Ok(g.add_scaled(vec![(h01, third), (h02, third), (h12, third)]))
        };
        let (_, grad) = grad_of_scalar(&params, &build).unwrap();
        finite_difference_check(
            &params,
            |p| {
                let mut g = Graph::new(p);
                let root = build(&mut g).unwrap();
                g.scalar(root)
            },
            &grad,
            1e-5,
        );
    }

    #[test]
    fn gaussian_heads_match_finite_differences() {
        let arch = Architecture {
            input_dim: 3,
            hidden: vec![5],
            activation: Activation::Tanh,
            num_options: 2,
            action_spec: ActionSpec::Continuous(2),
        };
        let params = init_params(&arch, 17);
        let obs = [0.2, -0.6, 1.3];
        let action = vec![0.4, -0.9];
        let build = move |g: &mut Graph| -> Result<NodeId, ApproxError> {
            let net = g.network_forward(&obs, 0.0)?;
            let PolicyNodes::Gaussian { mean: m0, log_std: l0 } = net.policies[0] else {
                unreachable!()
            };
            let PolicyNodes::Gaussian { mean: m1, log_std: l1 } = net.policies[1] else {
                unreachable!()
            };
            let lp = g.gaussian_log_prob(m0, l0, action.clone());
            let ent = g.gaussian_entropy(l0);
            let hd = g.hellinger_gaussian(m0, l0, m1, l1);
            Ok(g.add_scaled(vec![(lp, -0.8), (ent, -0.001), (hd, -0.5)]))
        };
        let (_, grad) = grad_of_scalar(&params, &build).unwrap();
        finite_difference_check(
            &params,
            |p| {
                let mut g = Graph::new(p);
                let root = build(&mut g).unwrap();
                g.scalar(root)
            },
            &grad,
            1e-4,
        );
    }
}
