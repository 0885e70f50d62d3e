//! Contrastive RL: an InfoNCE critic over state-action and goal
//! representations, and a goal-conditioned actor trained against it.

mod collect;
pub mod critic;
pub mod policy;

use std::str::FromStr;

use ndarray::Array1;
use rand::Rng;

pub use collect::{collect_episode, Behavior, GoalSource};
pub use critic::{critic_loss, CriticArch, CriticLoss, CriticParams, LSE_PENALTY};
pub use policy::{actor_loss_and_grad, ActMode, ActorLoss, AlphaState, Policy, DEFAULT_MIN_STD};

use crate::envs::{EnvSpec, ACTION_DIM};
use crate::numcore::{Adam, AdamConfig};
use crate::replay::ReplayBuffer;
use crate::{Error, Result};

/// Which goals the actor is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorGoalMode {
    /// Goals are future states from the buffer, independent of the states.
    MultiGoal,
    /// Every goal is the single target goal (ablation).
    SingleGoal,
}

impl ActorGoalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ActorGoalMode::MultiGoal => "multi-goal",
            ActorGoalMode::SingleGoal => "single-goal",
        }
    }
}

impl FromStr for ActorGoalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-goal" => Ok(ActorGoalMode::MultiGoal),
            "single-goal" => Ok(ActorGoalMode::SingleGoal),
            other => Err(Error::Config(format!("unknown actor goal mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlConfig {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub repr_dim: usize,
    pub hidden: Vec<usize>,
    pub min_std: f64,
    pub target_entropy: f64,
    pub alpha_lr: f64,
    pub critic_arch: CriticArch,
    pub actor_goal_mode: ActorGoalMode,
}

impl Default for CrlConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            gamma: 0.99,
            batch_size: 256,
            repr_dim: 64,
            hidden: vec![256, 256],
            min_std: DEFAULT_MIN_STD,
            target_entropy: 0.0,
            alpha_lr: 3e-4,
            critic_arch: CriticArch::InnerProduct,
            actor_goal_mode: ActorGoalMode::MultiGoal,
        }
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_log_pi: f64,
    /// Fraction of critic rows whose positive has the largest logit.
    pub critic_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct CrlAgent {
    pub config: CrlConfig,
    pub critic: CriticParams,
    pub policy: Policy,
    pub alpha: AlphaState,
    critic_opt: Adam,
    actor_opt: Adam,
    updates: u64,
}

impl CrlAgent {
    pub fn new<R: Rng + ?Sized>(config: CrlConfig, spec: &EnvSpec, rng: &mut R) -> Self {
        let obs_dim = spec.obs_dim();
        let critic = CriticParams::init(
            config.critic_arch,
            obs_dim,
            ACTION_DIM,
            &config.hidden,
            config.repr_dim,
            rng,
        );
        let policy = Policy::init(obs_dim, obs_dim, &config.hidden, config.min_std, rng);
        Self::from_parts(config, critic, policy, 0.0)
    }

    /// Wraps existing networks with fresh optimizer state.
    pub fn from_parts(
        config: CrlConfig,
        critic: CriticParams,
        policy: Policy,
        log_alpha: f64,
    ) -> Self {
        let adam = AdamConfig::with_lr(config.lr);
        let mut alpha = AlphaState::new(config.alpha_lr, config.target_entropy);
        alpha.log_alpha = log_alpha;
        Self {
            critic_opt: Adam::new(adam, &critic),
            actor_opt: Adam::new(adam, &policy.net),
            config,
            critic,
            policy,
            alpha,
            updates: 0,
        }
    }

    /// Completed gradient updates.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One critic step, one actor step and one α step on fresh batches.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        spec: &EnvSpec,
        rng: &mut R,
    ) -> Result<CrlStats> {
        let step = self.updates;
        let cfg = &self.config;
        let nonfinite = |what: &str| Error::NonFinite {
            what: what.into(),
            batch: step,
        };

        let batch = buffer.sample_critic_batch(cfg.batch_size, cfg.gamma, rng)?;
        let (closs, cgrad) = self.critic.loss_and_grad(
            batch.states.view(),
            batch.actions.view(),
            batch.futures.view(),
        )?;
        if !closs.loss.is_finite() {
            return Err(nonfinite("critic loss"));
        }
        self.critic_opt
            .update(&mut self.critic, &cgrad)
            .map_err(|e| retag(e, step))?;

        let mut actor = buffer.sample_actor_batch(cfg.batch_size, cfg.gamma, rng)?;
        if cfg.actor_goal_mode == ActorGoalMode::SingleGoal {
            let target = spec.target_goal;
            for mut row in actor.goals.rows_mut() {
                row.iter_mut()
                    .zip(target.as_slice())
                    .for_each(|(d, s)| *d = *s);
            }
        }
        let eps = Policy::noise(cfg.batch_size, rng);
        let alpha = self.alpha.alpha();
        let critic = &self.critic;
        let (states, goals) = (actor.states.view(), actor.goals.view());
        let aloss = actor_loss_and_grad(&self.policy, states, goals, &eps, alpha, |a| {
            critic.score_action_grad(states, a, goals, &Array1::ones(a.nrows()))
        })?;
        if !aloss.loss.is_finite() || !aloss.mean_log_pi.is_finite() {
            return Err(nonfinite("actor loss"));
        }
        self.actor_opt
            .update(&mut self.policy.net, &aloss.grad)
            .map_err(|e| retag(e, step))?;
        self.alpha
            .update(aloss.mean_log_pi)
            .map_err(|e| retag(e, step))?;

        self.updates += 1;
        Ok(CrlStats {
            critic_loss: closs.loss,
            actor_loss: aloss.loss,
            alpha: self.alpha.alpha(),
            mean_log_pi: aloss.mean_log_pi,
            critic_accuracy: closs.accuracy,
        })
    }
}

/// Gives an optimizer's non-finite error the trainer's update index.
pub(crate) fn retag(e: Error, step: u64) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite { what, batch: step },
        other => other,
    }
}
