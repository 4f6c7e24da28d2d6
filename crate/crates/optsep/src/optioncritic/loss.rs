//! Loss assembly over a collected rollout.
//!
//! Every term is built from graph primitives so the gradient is exact
//! reverse-mode. Advantages are computed from the Q snapshots recorded at
//! collection time and enter the graph as constants (stop-gradient).

use super::{LossBreakdown, Rollout, TrainConfig, TrainError, Transition};
use crate::approx::{AgentParams, Graph, GraphNet, NodeId, PolicyNodes};
use crate::envs::EnvAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Policy,
    Value,
    Termination,
    Entropy,
    HdReg,
}

struct LossNodes {
    policy: NodeId,
    value: NodeId,
    termination: NodeId,
    entropy: NodeId,
    hd_reg: NodeId,
}

fn policy_log_prob(
    graph: &mut Graph,
    net: &GraphNet,
    transition: &Transition,
) -> Result<NodeId, TrainError> {
    Ok(match (&net.policies[transition.option], &transition.action) {
        (PolicyNodes::Categorical { probs }, EnvAction::Discrete(a)) => {
            graph.log_index(*probs, *a)
        }
        (PolicyNodes::Gaussian { mean, log_std }, EnvAction::Continuous(a)) => {
            graph.gaussian_log_prob(*mean, *log_std, a.clone())
        }
        _ => {
            return Err(TrainError::Approx(crate::approx::ApproxError::ShapeMismatch(
                "action kind does not match policy head".into(),
            )))
        }
    })
}

fn policy_entropy(graph: &mut Graph, net: &GraphNet, omega: usize) -> NodeId {
    match &net.policies[omega] {
        PolicyNodes::Categorical { probs } => graph.entropy_categorical(*probs),
        PolicyNodes::Gaussian { log_std, .. } => graph.gaussian_entropy(*log_std),
    }
}

fn pairwise_hellinger(graph: &mut Graph, net: &GraphNet) -> Vec<NodeId> {
    let m = net.policies.len();
    let mut nodes = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let node = match (&net.policies[i], &net.policies[j]) {
                (PolicyNodes::Categorical { probs: p }, PolicyNodes::Categorical { probs: q }) => {
                    graph.hellinger_categorical(*p, *q)
                }
                (
                    PolicyNodes::Gaussian { mean: mp, log_std: lp },
                    PolicyNodes::Gaussian { mean: mq, log_std: lq },
                ) => graph.hellinger_gaussian(*mp, *lp, *mq, *lq),
                _ => unreachable!("one architecture produces one policy family"),
            };
            nodes.push(node);
        }
    }
    nodes
}

fn build_losses(
    graph: &mut Graph,
    rollout: &Rollout,
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<LossNodes, TrainError> {
    let p_min = cfg.p_min;
    let n_total = rollout.num_transitions();
    let mut policy_terms = Vec::new();
    let mut value_terms = Vec::new();
    let mut termination_terms = Vec::new();
    let mut entropy_terms = Vec::new();
    let mut hd_terms = Vec::new();

    for (w, worker) in rollout.workers.iter().enumerate() {
        let nets: Vec<GraphNet> = worker
            .transitions
            .iter()
            .map(|t| graph.network_forward(&t.obs, p_min))
            .collect::<Result<_, _>>()?;
        for (t, transition) in worker.transitions.iter().enumerate() {
            let net = &nets[t];
            let target = targets[w][t];

            let q_s = graph.index(net.q_omega, transition.option);
            value_terms.push(graph.squared_error(q_s, target));

            let advantage = target - transition.q_omega_snapshot[transition.option];
            let log_prob = policy_log_prob(graph, net, transition)?;
            policy_terms.push((log_prob, advantage));

            entropy_terms.push(policy_entropy(graph, net, transition.option));
            hd_terms.push(pairwise_hellinger(graph, net));

            // Termination loss at the arrival state s'; skipped after a true
            // terminal, where no option persists to be terminated.
            if !transition.done {
                let contiguous = !transition.truncated && t + 1 < nets.len();
                let next_beta = if contiguous {
                    nets[t + 1].beta
                } else {
                    graph.network_forward(&transition.next_obs, p_min)?.beta
                };
                let beta_node = graph.index(next_beta, transition.option);
                let v_next = transition
                    .q_next
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                let term_advantage =
                    transition.q_next[transition.option] - v_next + cfg.deliberation_cost;
                termination_terms.push((beta_node, term_advantage));
            }
        }
    }

    let zero = graph.input(vec![0.0]);
    let inv_n = if n_total > 0 { 1.0 / n_total as f64 } else { 0.0 };

    let policy = if policy_terms.is_empty() {
        zero
    } else {
        let terms = policy_terms
            .into_iter()
            .map(|(node, adv)| (node, -adv * inv_n))
            .collect();
        graph.add_scaled(terms)
    };
    let value = if value_terms.is_empty() {
        zero
    } else {
        let terms = value_terms.into_iter().map(|n| (n, inv_n)).collect();
        graph.add_scaled(terms)
    };
    let termination = if termination_terms.is_empty() {
        zero
    } else {
        let inv = 1.0 / termination_terms.len() as f64;
        let terms = termination_terms
            .into_iter()
            .map(|(node, adv)| (node, adv * inv))
            .collect();
        graph.add_scaled(terms)
    };
    let entropy = if entropy_terms.is_empty() {
        zero
    } else {
        let terms = entropy_terms.into_iter().map(|n| (n, inv_n)).collect();
        graph.add_scaled(terms)
    };
    let hd_reg = if hd_terms.is_empty() || hd_terms[0].is_empty() {
        zero
    } else {
        let pairs = hd_terms[0].len() as f64;
        let coeff = inv_n / pairs;
        let terms = hd_terms
            .into_iter()
            .flatten()
            .map(|n| (n, coeff))
            .collect();
        graph.add_scaled(terms)
    };
    Ok(LossNodes {
        policy,
        value,
        termination,
        entropy,
        hd_reg,
    })
}

fn total_node(graph: &mut Graph, nodes: &LossNodes, cfg: &TrainConfig) -> NodeId {
    graph.add_scaled(vec![
        (nodes.policy, 1.0),
        (nodes.value, cfg.value_coef),
        (nodes.termination, 1.0),
        (nodes.entropy, -cfg.entropy_coef),
        (nodes.hd_reg, -cfg.hd_coef),
    ])
}

/// All loss terms plus the exact gradient of the combined loss.
pub fn compute_losses(
    params: &AgentParams,
    rollout: &Rollout,
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    let mut graph = Graph::new(params);
    let nodes = build_losses(&mut graph, rollout, targets, cfg)?;
    let total = total_node(&mut graph, &nodes, cfg);
    let breakdown = LossBreakdown {
        policy_loss: graph.scalar(nodes.policy),
        value_loss: graph.scalar(nodes.value),
        termination_loss: graph.scalar(nodes.termination),
        entropy: graph.scalar(nodes.entropy),
        hd_reg_value: graph.scalar(nodes.hd_reg),
        total: graph.scalar(total),
    };
    let grad = graph.backward(total);
    Ok((breakdown, grad))
}

/// Gradient of a single loss term in isolation (test and analysis support).
pub fn loss_term_gradient(
    params: &AgentParams,
    rollout: &Rollout,
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
    term: LossTerm,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut graph = Graph::new(params);
    let nodes = build_losses(&mut graph, rollout, targets, cfg)?;
    let node = match term {
        LossTerm::Policy => nodes.policy,
        LossTerm::Value => nodes.value,
        LossTerm::Termination => nodes.termination,
        LossTerm::Entropy => nodes.entropy,
        LossTerm::HdReg => nodes.hd_reg,
    };
    Ok((graph.scalar(node), graph.backward(node)))
}
