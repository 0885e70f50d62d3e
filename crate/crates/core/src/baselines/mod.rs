//! Goal-conditioned soft actor-critic with sparse, dense or hindsight-relabeled rewards.
//!
//! Critics and policy take the goal as the 2-D task coordinates (agent for
//! mazes, block for the pusher). Without relabeling that goal is always the
//! target, which reduces to single-task SAC.

mod sac;

pub use sac::{q_loss_and_grad, sac_actor_loss_and_grad, SacAgent, SacConfig, SacStats};

use std::str::FromStr;

use crate::envs::{distance, EnvSpec, Observation, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    /// 1 inside the success ball around the goal, else 0.
    Sparse,
    /// Negative distance to the goal.
    Dense,
}

impl RewardKind {
    pub fn reward(self, spec: &EnvSpec, next_state: &Observation, goal: Point) -> f64 {
        match self {
            RewardKind::Sparse => sparse_reward(spec, next_state, goal),
            RewardKind::Dense => dense_reward(spec, next_state, goal),
        }
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(RewardKind::Sparse),
            "dense" => Ok(RewardKind::Dense),
            other => Err(Error::Config(format!("unknown reward kind {other:?}"))),
        }
    }
}

pub fn sparse_reward(spec: &EnvSpec, next_state: &Observation, goal: Point) -> f64 {
    if spec.within(next_state, goal) {
        1.0
    } else {
        0.0
    }
}

pub fn dense_reward(spec: &EnvSpec, next_state: &Observation, goal: Point) -> f64 {
    -distance(spec.object_xy(next_state), goal)
}
