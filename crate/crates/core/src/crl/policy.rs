//! Goal-conditioned tanh-Gaussian policy and the adaptive entropy coefficient.

use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::{ActionVec, EnvSpec, Observation, ACTION_DIM};
use crate::numcore::{hconcat, sigmoid, softplus, Activations, Backprop, Mlp};
use crate::{Error, Result};

pub const DEFAULT_MIN_STD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    /// `tanh(mean)`, used for evaluation.
    Mean,
}

/// Network on `concat(state, goal)` emitting `(mean, raw_std)` per action
/// dimension; `std = max(softplus(raw_std), min_std)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    pub obs_dim: usize,
    pub min_std: f64,
}

/// A reparameterized batch of actions and what the backward pass needs.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    /// `log π(a | s, g)` per row, tanh correction included.
    pub log_pi: Array1<f64>,
    pre_tanh: Array2<f64>,
    raw_std: Array2<f64>,
    std: Array2<f64>,
    eps: Array2<f64>,
    acts: Activations,
}

impl Policy {
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        goal_dim: usize,
        hidden: &[usize],
        min_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim + goal_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * ACTION_DIM);
        Self {
            net: Mlp::init(&sizes, rng),
            obs_dim,
            min_std,
        }
    }

    pub fn from_net(net: Mlp, obs_dim: usize, min_std: f64) -> Result<Self> {
        if net.input_dim() <= obs_dim || net.output_dim() != 2 * ACTION_DIM {
            return Err(Error::Shape(format!(
                "policy net {:?} does not fit {obs_dim}-d observations",
                net.sizes()
            )));
        }
        Ok(Self {
            net,
            obs_dim,
            min_std,
        })
    }

    pub fn goal_dim(&self) -> usize {
        self.net.input_dim() - self.obs_dim
    }

    /// Goal input for this policy: the whole goal observation, or only its
    /// task coordinates when the policy was built for 2-D goals.
    pub fn goal_features(&self, spec: &EnvSpec, goal: &Observation) -> Vec<f64> {
        if self.goal_dim() == goal.dim() {
            goal.as_slice().to_vec()
        } else {
            spec.object_xy(goal).to_vec()
        }
    }

    pub fn std_of(&self, raw: f64) -> f64 {
        softplus(raw).max(self.min_std)
    }

    /// Mean and std heads for a batch.
    pub fn heads(
        &self,
        states: ArrayView2<f64>,
        goals: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.net.forward(hconcat(&[states, goals]).view())?;
        let mean = out.slice(s![.., ..ACTION_DIM]).to_owned();
        let std = out.slice(s![.., ACTION_DIM..]).mapv(|r| self.std_of(r));
        Ok((mean, std))
    }

    /// One action for one state.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        goal: &[f64],
        mode: ActMode,
        rng: &mut R,
    ) -> Result<ActionVec> {
        let x = Array2::from_shape_vec((1, state.len() + goal.len()), [state, goal].concat())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let out = self.net.forward(x.view())?;
        let mut a = [0.0; ACTION_DIM];
        for (d, slot) in a.iter_mut().enumerate() {
            let mean = out[[0, d]];
            *slot = match mode {
                ActMode::Mean => mean.tanh(),
                ActMode::Stochastic => {
                    let e: f64 = rng.sample(StandardNormal);
                    (mean + self.std_of(out[[0, ACTION_DIM + d]]) * e).tanh()
                }
            };
        }
        Ok(ActionVec(a))
    }

    /// Standard-normal noise for a batch of `n` reparameterized samples.
    pub fn noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, ACTION_DIM), || rng.sample(StandardNormal))
    }

    /// `a = tanh(mean + std · eps)` with its log-density.
    pub fn sample(
        &self,
        states: ArrayView2<f64>,
        goals: ArrayView2<f64>,
        eps: &Array2<f64>,
    ) -> Result<PolicySample> {
        let acts = self.net.forward_cached(hconcat(&[states, goals]).view())?;
        let out = acts.output();
        let mean = out.slice(s![.., ..ACTION_DIM]);
        let raw_std = out.slice(s![.., ACTION_DIM..]).to_owned();
        let std = raw_std.mapv(|r| self.std_of(r));
        let pre_tanh = &mean + &(&std * eps);
        let actions = pre_tanh.mapv(f64::tanh);
        let half_ln_2pi = 0.5 * (2.0 * PI).ln();
        let mut log_pi = Array1::zeros(states.nrows());
        for i in 0..states.nrows() {
            let mut lp = 0.0;
            for d in 0..ACTION_DIM {
                let u = pre_tanh[[i, d]];
                let e = eps[[i, d]];
                lp += -0.5 * e * e - std[[i, d]].ln() - half_ln_2pi - log1m_tanh_sq(u);
            }
            log_pi[i] = lp;
        }
        Ok(PolicySample {
            actions,
            log_pi,
            pre_tanh,
            raw_std,
            std,
            eps: eps.clone(),
            acts,
        })
    }

    /// Backward pass for losses of the form `Σ_i [c · log π_i + f(a_i)]`.
    ///
    /// `d_actions[i] = ∂f/∂a_i`; `c` multiplies every log-density term.
    pub fn backward(&self, sample: &PolicySample, d_actions: &Array2<f64>, c: f64) -> Mlp {
        let n = sample.actions.nrows();
        let mut d_out = Array2::zeros((n, 2 * ACTION_DIM));
        for i in 0..n {
            for d in 0..ACTION_DIM {
                let a = sample.actions[[i, d]];
                let u = sample.pre_tanh[[i, d]];
                let sd = sample.std[[i, d]];
                let raw = sample.raw_std[[i, d]];
                // d log π / du = 2 tanh(u) at fixed eps; d log π / d std = -1/std explicitly.
                let du = d_actions[[i, d]] * (1.0 - a * a) + c * 2.0 * u.tanh();
                let dstd = du * sample.eps[[i, d]] - c / sd;
                let draw = if softplus(raw) > self.min_std {
                    dstd * sigmoid(raw)
                } else {
                    0.0
                };
                d_out[[i, d]] = du;
                d_out[[i, ACTION_DIM + d]] = draw;
            }
        }
        self.net
            .backward(&sample.acts, d_out, Backprop::Params)
            .0
            .expect("parameter gradient requested")
    }
}

/// `ln(1 - tanh(u)²) = 2 (ln 2 - u - softplus(-2u))`, stable for large `|u|`.
pub fn log1m_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Actor objective for a fixed critic, its gradient, and the mean log-density.
///
/// `loss = (1/N) Σ_i [α log π(a_i|s_i,g_i) - q(s_i, a_i, g_i)]`, where `q_and_grad`
/// returns each row's score and `∂q_i/∂a_i`.
pub fn actor_loss_and_grad(
    policy: &Policy,
    states: ArrayView2<f64>,
    goals: ArrayView2<f64>,
    eps: &Array2<f64>,
    alpha: f64,
    q_and_grad: impl FnOnce(ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)>,
) -> Result<ActorLoss> {
    let n = states.nrows();
    let inv_n = 1.0 / n as f64;
    let sample = policy.sample(states, goals, eps)?;
    let (q, dq_da) = q_and_grad(sample.actions.view())?;
    let mean_log_pi = sample.log_pi.sum() * inv_n;
    let loss = alpha * mean_log_pi - q.sum() * inv_n;
    let d_actions = dq_da * -inv_n;
    let grad = policy.backward(&sample, &d_actions, alpha * inv_n);
    Ok(ActorLoss {
        loss,
        grad,
        mean_log_pi,
        mean_q: q.sum() * inv_n,
        mean_std: sample.std.mean().unwrap_or(0.0),
    })
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grad: Mlp,
    pub mean_log_pi: f64,
    pub mean_q: f64,
    pub mean_std: f64,
}

/// Entropy coefficient `α = exp(log_alpha)`, tuned by plain gradient steps on
/// `log_alpha · (-mean_log_pi - target_entropy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaState {
    pub log_alpha: f64,
    pub lr: f64,
    pub target_entropy: f64,
}

impl AlphaState {
    pub fn new(lr: f64, target_entropy: f64) -> Self {
        Self {
            log_alpha: 0.0,
            lr,
            target_entropy,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Loss value and its derivative with respect to `log_alpha`.
    pub fn loss_and_grad(&self, mean_log_pi: f64) -> (f64, f64) {
        let g = -mean_log_pi - self.target_entropy;
        (self.log_alpha * g, g)
    }

    pub fn update(&mut self, mean_log_pi: f64) -> Result<()> {
        if !mean_log_pi.is_finite() {
            return Err(Error::NonFinite {
                what: "mean log-density".into(),
                batch: 0,
            });
        }
        let (_, g) = self.loss_and_grad(mean_log_pi);
        self.log_alpha -= self.lr * g;
        Ok(())
    }
}
