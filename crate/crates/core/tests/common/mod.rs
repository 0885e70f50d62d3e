//! Shared oracles for the integration tests and the acceptance harness.
#![allow(dead_code)]

use crl_core::baselines::{q_loss_and_grad, sac_actor_loss_and_grad};
use crl_core::crl::{
    actor_loss_and_grad, critic_loss, AlphaState, CriticArch, CriticParams, Policy, DEFAULT_MIN_STD,
};
use crl_core::numcore::{hconcat, Params};
use crl_core::Mlp;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const FD_TOL: f64 = 1e-4;
/// Entries whose gradients are both below this are compared absolutely.
/// Round-off in a central difference of an O(1) loss is about 1e-11 / 1e-5.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Worst relative error over every scalar of `params`.
pub fn fd_params<P: Params + Clone>(params: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    for (ti, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][k] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][k] -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g[k], numeric));
        }
    }
    worst
}

/// Worst relative error over every entry of a matrix argument.
pub fn fd_matrix(
    x: &Array2<f64>,
    analytic: &Array2<f64>,
    loss: impl Fn(&Array2<f64>) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for ((i, j), &g) in analytic.indexed_iter() {
        let mut plus = x.clone();
        plus[[i, j]] += FD_STEP;
        let mut minus = x.clone();
        minus[[i, j]] -= FD_STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g, numeric));
    }
    worst
}

pub fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

const OBS: usize = 3;
const ACT: usize = 2;
const N: usize = 5;
const HIDDEN: [usize; 2] = [7, 6];

pub fn critic_params_error(arch: CriticArch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let critic = CriticParams::init(arch, OBS, ACT, &HIDDEN, 4, &mut rng);
    let s = normal(N, OBS, &mut rng);
    let a = uniform(N, ACT, -1.0, 1.0, &mut rng);
    let f = normal(N, OBS, &mut rng);
    let (_, grads) = critic.loss_and_grad(s.view(), a.view(), f.view()).unwrap();
    fd_params(&critic, &grads, |c| {
        critic_loss(&c.logits(s.view(), a.view(), f.view()).unwrap()).loss
    })
}

pub fn logit_grad_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = normal(N, N, &mut rng) * 3.0;
    let analytic = critic_loss(&logits).d_logits;
    fd_matrix(&logits, &analytic, |l| critic_loss(l).loss)
}

pub fn critic_action_grad_error(arch: CriticArch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let critic = CriticParams::init(arch, OBS, ACT, &HIDDEN, 4, &mut rng);
    let s = normal(N, OBS, &mut rng);
    let a = uniform(N, ACT, -1.0, 1.0, &mut rng);
    let g = normal(N, OBS, &mut rng);
    let w: Array1<f64> = Array1::from_shape_simple_fn(N, || rng.random_range(-1.0..1.0));
    let (_, dq) = critic
        .score_action_grad(s.view(), a.view(), g.view(), &w)
        .unwrap();
    fd_matrix(&a, &dq, |a| {
        critic.score(s.view(), a.view(), g.view()).unwrap().dot(&w)
    })
}

/// Actor loss against a fixed contrastive critic, differentiated in the policy parameters.
pub fn actor_params_error(arch: CriticArch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let critic = CriticParams::init(arch, OBS, ACT, &HIDDEN, 4, &mut rng);
    let policy = Policy::init(OBS, OBS, &HIDDEN, DEFAULT_MIN_STD, &mut rng);
    let s = normal(N, OBS, &mut rng);
    let g = normal(N, OBS, &mut rng);
    let eps = normal(N, ACT, &mut rng);
    let alpha = 0.3;
    let ones = Array1::ones(N);
    let score =
        |a: ndarray::ArrayView2<f64>| critic.score_action_grad(s.view(), a, g.view(), &ones);
    let analytic = actor_loss_and_grad(&policy, s.view(), g.view(), &eps, alpha, score).unwrap();
    fd_params(&policy.net, &analytic.grad, |net| {
        let p = Policy::from_net(net.clone(), OBS, DEFAULT_MIN_STD).unwrap();
        independent_actor_loss(&p, &s, &g, &eps, alpha, |a| {
            critic.score(s.view(), a.view(), g.view()).unwrap()
        })
    })
}

/// `mean(α log π - q)` written out from the density definition, without the
/// stable `log(1 - tanh²)` rewrite the library uses.
pub fn independent_actor_loss(
    policy: &Policy,
    s: &Array2<f64>,
    g: &Array2<f64>,
    eps: &Array2<f64>,
    alpha: f64,
    q: impl Fn(&Array2<f64>) -> Array1<f64>,
) -> f64 {
    let out = policy
        .net
        .forward(hconcat(&[s.view(), g.view()]).view())
        .unwrap();
    let n = s.nrows();
    let mut actions = Array2::zeros((n, ACT));
    let mut total_log_pi = 0.0;
    for i in 0..n {
        for d in 0..ACT {
            let mean = out[[i, d]];
            let raw = out[[i, ACT + d]];
            let std = (raw.exp().ln_1p()).max(policy.min_std);
            let u = mean + std * eps[[i, d]];
            let a = u.tanh();
            actions[[i, d]] = a;
            let gauss =
                (-0.5 * eps[[i, d]].powi(2)).exp() / (std * (2.0 * std::f64::consts::PI).sqrt());
            total_log_pi += gauss.ln() - (1.0 - a * a).ln();
        }
    }
    (alpha * total_log_pi - q(&actions).sum()) / n as f64
}

pub fn alpha_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_log_pi: f64 = rng.random_range(-3.0..3.0);
    let mut state = AlphaState::new(3e-4, -2.0);
    state.log_alpha = rng.random_range(-2.0..2.0);
    let (_, analytic) = state.loss_and_grad(mean_log_pi);
    // The temperature objective is -α(log π + target) taken in log-space.
    let loss = |la: f64| la * (-mean_log_pi - state.target_entropy);
    let numeric =
        (loss(state.log_alpha + FD_STEP) - loss(state.log_alpha - FD_STEP)) / (2.0 * FD_STEP);
    rel_err(analytic, numeric)
}

pub fn sac_q_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Mlp::init(&[OBS + ACT + 2, 7, 6, 1], &mut rng);
    let x = normal(N, OBS + ACT + 2, &mut rng);
    let y: Array1<f64> = Array1::from_shape_simple_fn(N, || rng.sample(StandardNormal));
    let (_, grad) = q_loss_and_grad(&q, x.view(), &y).unwrap();
    fd_params(&q, &grad, |net| {
        let out = net.forward(x.view()).unwrap();
        (0..N)
            .map(|i| 0.5 * (out[[i, 0]] - y[i]).powi(2))
            .sum::<f64>()
            / N as f64
    })
}

pub fn sac_actor_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q1 = Mlp::init(&[OBS + ACT + 2, 7, 6, 1], &mut rng);
    let q2 = Mlp::init(&[OBS + ACT + 2, 7, 6, 1], &mut rng);
    let policy = Policy::init(OBS, 2, &HIDDEN, DEFAULT_MIN_STD, &mut rng);
    let s = normal(N, OBS, &mut rng);
    let g = normal(N, 2, &mut rng);
    let eps = normal(N, ACT, &mut rng);
    let alpha = 0.2;
    let analytic =
        sac_actor_loss_and_grad(&policy, &q1, &q2, s.view(), g.view(), &eps, alpha).unwrap();
    let min_q = |a: &Array2<f64>| {
        let x = hconcat(&[s.view(), a.view(), g.view()]);
        let o1 = q1.forward(x.view()).unwrap();
        let o2 = q2.forward(x.view()).unwrap();
        Array1::from_shape_fn(N, |i| o1[[i, 0]].min(o2[[i, 0]]))
    };
    fd_params(&policy.net, &analytic.grad, |net| {
        let p = Policy::from_net(net.clone(), OBS, DEFAULT_MIN_STD).unwrap();
        independent_actor_loss(&p, &s, &g, &eps, alpha, min_q)
    })
}

/// Every gradient check the acceptance criterion names, as `(name, worst error)`.
pub fn gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    vec![
        ("critic logits", logit_grad_error(seed)),
        (
            "critic inner-product params",
            critic_params_error(CriticArch::InnerProduct, seed),
        ),
        (
            "critic monolithic params",
            critic_params_error(CriticArch::Monolithic, seed),
        ),
        (
            "critic inner-product action",
            critic_action_grad_error(CriticArch::InnerProduct, seed),
        ),
        (
            "critic monolithic action",
            critic_action_grad_error(CriticArch::Monolithic, seed),
        ),
        (
            "actor vs inner-product critic",
            actor_params_error(CriticArch::InnerProduct, seed),
        ),
        (
            "actor vs monolithic critic",
            actor_params_error(CriticArch::Monolithic, seed),
        ),
        ("alpha", alpha_error(seed)),
        ("sac q", sac_q_error(seed)),
        ("sac actor", sac_actor_error(seed)),
    ]
}

/// Closed-form `-(1/N) Σ_i [L_ii - lse_i - c·lse_i²]`.
pub fn reference_critic_loss(logits: &Array2<f64>, c: f64) -> f64 {
    let n = logits.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += logits[[i, i]] - lse - c * lse * lse;
    }
    -total / n as f64
}
