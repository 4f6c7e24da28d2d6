//! Continuous point-mass environment with two separable intrinsic rewards.
//!
//! The state is a position in the plane. Actions are clipped to the unit
//! box and integrated with step size 0.05. The reward splits into a
//! forwarding component (normalized displacement along the first axis) and
//! a control cost, mirroring locomotion tasks whose total reward is the sum
//! of the two.

use super::{Env, EnvAction, EnvError, EnvSpec, StepResult};
use crate::approx::ActionSpec;
use std::collections::BTreeMap;

const DT: f64 = 0.05;
const CONTROL_COEF: f64 = 0.1;

pub struct PointMass {
    max_episode_steps: usize,
    position: [f64; 2],
    steps: usize,
    finished: bool,
}

impl PointMass {
    pub fn new(max_episode_steps: usize) -> Self {
        Self {
            max_episode_steps,
            position: [0.0, 0.0],
            steps: 0,
            finished: true,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }
}

impl Env for PointMass {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 2,
            action_spec: ActionSpec::Continuous(2),
            max_episode_steps: self.max_episode_steps,
            intrinsic_reward_names: vec!["forwarding".into(), "control".into()],
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = [0.0, 0.0];
        self.steps = 0;
        self.finished = false;
        self.position.to_vec()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let EnvAction::Continuous(a) = action else {
            return Err(EnvError::InvalidAction("expected a continuous action".into()));
        };
        if a.len() != 2 {
            return Err(EnvError::InvalidAction(format!(
                "action dimension {} (expected 2)",
                a.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidAction("non-finite action entry".into()));
        }
        let clipped = [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)];
        let prev_x = self.position[0];
        self.position[0] += DT * clipped[0];
        self.position[1] += DT * clipped[1];
        let forwarding = (self.position[0] - prev_x) / DT;
        let control = -CONTROL_COEF * (clipped[0] * clipped[0] + clipped[1] * clipped[1]);
        let reward = forwarding + control;
        self.steps += 1;
        let truncated = self.steps >= self.max_episode_steps;
        self.finished = truncated;
        let mut intrinsic = BTreeMap::new();
        intrinsic.insert("forwarding".to_string(), forwarding);
        intrinsic.insert("control".to_string(), control);
        Ok(StepResult {
            obs: self.position.to_vec(),
            reward,
            intrinsic,
            done: false,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_at_origin() {
        let mut env = PointMass::new(200);
        let obs = env.reset(3);
        assert_eq!(obs, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_action_yields_zero_rewards() {
        let mut env = PointMass::new(200);
        env.reset(0);
        let r = env.step(&EnvAction::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.intrinsic["forwarding"], 0.0);
        assert_eq!(r.intrinsic["control"], 0.0);
    }

    #[test]
    fn unit_forward_action_splits_as_expected() {
        let mut env = PointMass::new(200);
        env.reset(0);
        let r = env.step(&EnvAction::Continuous(vec![1.0, 0.0])).unwrap();
        assert!((r.intrinsic["forwarding"] - 1.0).abs() < 1e-12);
        assert!((r.intrinsic["control"] + 0.1).abs() < 1e-12);
        assert!((r.reward - 0.9).abs() < 1e-12);
    }

    #[test]
    fn reward_is_exact_intrinsic_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut env = PointMass::new(50);
        env.reset(0);
        for _ in 0..200 {
            let a = EnvAction::Continuous(vec![
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]);
            let r = env.step(&a).unwrap();
            let sum: f64 = r.intrinsic.values().sum();
            assert!((r.reward - sum).abs() < 1e-12);
            if r.truncated {
                env.reset(0);
            }
        }
    }

    #[test]
    fn truncates_at_step_limit() {
        let mut env = PointMass::new(3);
        env.reset(0);
        let a = EnvAction::Continuous(vec![0.5, -0.5]);
        assert!(!env.step(&a).unwrap().truncated);
        assert!(!env.step(&a).unwrap().truncated);
        let last = env.step(&a).unwrap();
        assert!(last.truncated && !last.done);
        assert!(matches!(env.step(&a), Err(EnvError::EpisodeFinished)));
    }
}
