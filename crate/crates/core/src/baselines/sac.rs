use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;

use crate::baselines::RewardKind;
use crate::crl::{actor_loss_and_grad, retag, AlphaState, Policy, DEFAULT_MIN_STD};
use crate::envs::{EnvSpec, Observation, ACTION_DIM};
use crate::numcore::{hconcat, Adam, AdamConfig, Backprop, Mlp};
use crate::replay::{ReplayBuffer, TransitionBatch};
use crate::{Error, Result};

/// Goal coordinates fed to the critics and the policy.
pub const GOAL_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub min_std: f64,
    pub target_entropy: f64,
    pub alpha_lr: f64,
    pub target_ema: f64,
    pub reward: RewardKind,
    /// Probability of replacing a sampled goal with a later achieved position; 0 disables HER.
    pub her_fraction: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            gamma: 0.99,
            batch_size: 256,
            hidden: vec![256, 256],
            min_std: DEFAULT_MIN_STD,
            target_entropy: 0.0,
            alpha_lr: 3e-4,
            target_ema: 5e-3,
            reward: RewardKind::Sparse,
            her_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_log_pi: f64,
}

/// Twin Q critics with EMA targets, a tanh-Gaussian policy and adaptive α.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub policy: Policy,
    pub alpha: AlphaState,
    q1_opt: Adam,
    q2_opt: Adam,
    actor_opt: Adam,
    updates: u64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: SacConfig, spec: &EnvSpec, rng: &mut R) -> Self {
        let obs_dim = spec.obs_dim();
        let mut sizes = vec![obs_dim + ACTION_DIM + GOAL_DIM];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let q1 = Mlp::init(&sizes, rng);
        let q2 = Mlp::init(&sizes, rng);
        let policy = Policy::init(obs_dim, GOAL_DIM, &config.hidden, config.min_std, rng);
        Self::from_parts(config, q1, q2, policy, 0.0)
    }

    /// Wraps existing networks; targets start as copies of the online critics.
    pub fn from_parts(config: SacConfig, q1: Mlp, q2: Mlp, policy: Policy, log_alpha: f64) -> Self {
        let adam = AdamConfig::with_lr(config.lr);
        let mut alpha = AlphaState::new(config.alpha_lr, config.target_entropy);
        alpha.log_alpha = log_alpha;
        Self {
            q1_opt: Adam::new(adam, &q1),
            q2_opt: Adam::new(adam, &q2),
            actor_opt: Adam::new(adam, &policy.net),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            policy,
            alpha,
            config,
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `r + γ (min(q1_target, q2_target)(s', a', g) - α log π(a'|s', g))` with
    /// `a' = tanh(mean + std · eps_next)`. No gradient flows through it.
    pub fn td_targets(
        &self,
        batch: &TransitionBatch,
        rewards: &Array1<f64>,
        eps_next: &Array2<f64>,
    ) -> Result<Array1<f64>> {
        let alpha = self.alpha.alpha();
        let next = self
            .policy
            .sample(batch.next_states.view(), batch.goals.view(), eps_next)?;
        let x_next = hconcat(&[
            batch.next_states.view(),
            next.actions.view(),
            batch.goals.view(),
        ]);
        let t1 = self.q1_target.forward(x_next.view())?;
        let t2 = self.q2_target.forward(x_next.view())?;
        Ok(Array1::from_shape_fn(rewards.len(), |i| {
            rewards[i] + self.config.gamma * (t1[[i, 0]].min(t2[[i, 0]]) - alpha * next.log_pi[i])
        }))
    }

    /// Samples a batch (relabeled when HER is on), computes rewards and updates.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        spec: &EnvSpec,
        rng: &mut R,
    ) -> Result<SacStats> {
        let batch = buffer.sample_transitions(
            spec,
            self.config.batch_size,
            self.config.her_fraction,
            rng,
        )?;
        let rewards = batch_rewards(spec, self.config.reward, &batch);
        self.update(&batch, &rewards, rng)
    }

    /// One gradient step for q1, q2, the policy and α on a given batch, then the EMA.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &TransitionBatch,
        rewards: &Array1<f64>,
        rng: &mut R,
    ) -> Result<SacStats> {
        let step = self.updates;
        let n = batch.states.nrows();
        let alpha = self.alpha.alpha();
        let nonfinite = |what: &str| Error::NonFinite {
            what: what.into(),
            batch: step,
        };

        let eps_next = Policy::noise(n, rng);
        let targets = self.td_targets(batch, rewards, &eps_next)?;

        let x = hconcat(&[
            batch.states.view(),
            batch.actions.view(),
            batch.goals.view(),
        ]);
        let (q1_loss, g1) = q_loss_and_grad(&self.q1, x.view(), &targets)?;
        let (q2_loss, g2) = q_loss_and_grad(&self.q2, x.view(), &targets)?;
        if !q1_loss.is_finite() || !q2_loss.is_finite() {
            return Err(nonfinite("Q loss"));
        }
        self.q1_opt
            .update(&mut self.q1, &g1)
            .map_err(|e| retag(e, step))?;
        self.q2_opt
            .update(&mut self.q2, &g2)
            .map_err(|e| retag(e, step))?;

        let eps = Policy::noise(n, rng);
        let actor = sac_actor_loss_and_grad(
            &self.policy,
            &self.q1,
            &self.q2,
            batch.states.view(),
            batch.goals.view(),
            &eps,
            alpha,
        )?;
        if !actor.loss.is_finite() || !actor.mean_log_pi.is_finite() {
            return Err(nonfinite("actor loss"));
        }
        self.actor_opt
            .update(&mut self.policy.net, &actor.grad)
            .map_err(|e| retag(e, step))?;
        self.alpha
            .update(actor.mean_log_pi)
            .map_err(|e| retag(e, step))?;

        let tau = self.config.target_ema;
        self.q1_target.ema_towards(&self.q1, tau);
        self.q2_target.ema_towards(&self.q2, tau);
        self.updates += 1;
        Ok(SacStats {
            q1_loss,
            q2_loss,
            actor_loss: actor.loss,
            alpha: self.alpha.alpha(),
            mean_log_pi: actor.mean_log_pi,
        })
    }
}

pub fn batch_rewards(spec: &EnvSpec, kind: RewardKind, batch: &TransitionBatch) -> Array1<f64> {
    Array1::from_shape_fn(batch.states.nrows(), |i| {
        let next = Observation::new(
            batch
                .next_states
                .row(i)
                .as_slice()
                .expect("standard layout"),
        );
        kind.reward(spec, &next, [batch.goals[[i, 0]], batch.goals[[i, 1]]])
    })
}

/// `0.5 · mean((q(x) - y)²)` and its parameter gradient; `y` is a constant.
pub fn q_loss_and_grad(q: &Mlp, x: ArrayView2<f64>, targets: &Array1<f64>) -> Result<(f64, Mlp)> {
    let acts = q.forward_cached(x)?;
    let n = x.nrows() as f64;
    let diff = &acts.output().column(0) - targets;
    let loss = 0.5 * diff.mapv(|d| d * d).sum() / n;
    let d_out = (diff / n).insert_axis(ndarray::Axis(1));
    let grad = q
        .backward(&acts, d_out, Backprop::Params)
        .0
        .expect("params");
    Ok((loss, grad))
}

/// `mean(α log π - min(q1, q2))` with the gradient routed through whichever
/// critic is smaller on each row (q1 on ties).
pub fn sac_actor_loss_and_grad(
    policy: &Policy,
    q1: &Mlp,
    q2: &Mlp,
    states: ArrayView2<f64>,
    goals: ArrayView2<f64>,
    eps: &Array2<f64>,
    alpha: f64,
) -> Result<crate::crl::ActorLoss> {
    let obs_dim = states.ncols();
    actor_loss_and_grad(policy, states, goals, eps, alpha, |a| {
        let x = hconcat(&[states, a, goals]);
        let n = x.nrows();
        let a1 = q1.forward_cached(x.view())?;
        let a2 = q2.forward_cached(x.view())?;
        let use_q1: Vec<bool> = (0..n)
            .map(|i| a1.output()[[i, 0]] <= a2.output()[[i, 0]])
            .collect();
        let q = Array1::from_shape_fn(n, |i| {
            if use_q1[i] {
                a1.output()[[i, 0]]
            } else {
                a2.output()[[i, 0]]
            }
        });
        let mask = |first: bool| {
            Array2::from_shape_fn((n, 1), |(i, _)| if use_q1[i] == first { 1.0 } else { 0.0 })
        };
        let d1 = q1
            .backward(&a1, mask(true), Backprop::Input)
            .1
            .expect("input");
        let d2 = q2
            .backward(&a2, mask(false), Backprop::Input)
            .1
            .expect("input");
        let dq = (d1 + d2)
            .slice(s![.., obs_dim..obs_dim + ACTION_DIM])
            .to_owned();
        Ok((q, dq))
    })
}
