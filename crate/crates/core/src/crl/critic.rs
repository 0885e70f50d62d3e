//! Contrastive critic: logits, the InfoNCE loss with a LogSumExp penalty, and
//! exact gradients for both architectures.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::numcore::{hconcat, Backprop, Mlp, NamedTensor, Params};
use crate::{Error, Result};

/// Weight of the squared row-LogSumExp penalty.
pub const LSE_PENALTY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriticArch {
    InnerProduct,
    Monolithic,
}

impl CriticArch {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticArch::InnerProduct => "inner-product",
            CriticArch::Monolithic => "monolithic",
        }
    }
}

impl std::str::FromStr for CriticArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner-product" => Ok(CriticArch::InnerProduct),
            "monolithic" => Ok(CriticArch::Monolithic),
            other => Err(Error::Config(format!(
                "unknown critic architecture {other:?}"
            ))),
        }
    }
}

/// Either `φ(s, a)ᵀ ψ(g)` with two encoders or one network on `(s, a, g)`.
///
/// Representations are deliberately left unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub enum CriticParams {
    InnerProduct { phi: Mlp, psi: Mlp },
    Monolithic { net: Mlp },
}

impl CriticParams {
    /// Fresh critic. `hidden` excludes the input and output widths.
    pub fn init<R: Rng + ?Sized>(
        arch: CriticArch,
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        repr_dim: usize,
        rng: &mut R,
    ) -> Self {
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend_from_slice(hidden);
            v.push(output);
            v
        };
        match arch {
            CriticArch::InnerProduct => CriticParams::InnerProduct {
                phi: Mlp::init(&sizes(obs_dim + action_dim, repr_dim), rng),
                psi: Mlp::init(&sizes(obs_dim, repr_dim), rng),
            },
            CriticArch::Monolithic => CriticParams::Monolithic {
                net: Mlp::init(&sizes(2 * obs_dim + action_dim, 1), rng),
            },
        }
    }

    pub fn arch(&self) -> CriticArch {
        match self {
            CriticParams::InnerProduct { .. } => CriticArch::InnerProduct,
            CriticParams::Monolithic { .. } => CriticArch::Monolithic,
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            CriticParams::InnerProduct { phi, psi } => CriticParams::InnerProduct {
                phi: phi.zeros_like(),
                psi: psi.zeros_like(),
            },
            CriticParams::Monolithic { net } => CriticParams::Monolithic {
                net: net.zeros_like(),
            },
        }
    }

    /// Goal encoder, if this critic has one.
    pub fn psi(&self) -> Option<&Mlp> {
        match self {
            CriticParams::InnerProduct { psi, .. } => Some(psi),
            CriticParams::Monolithic { .. } => None,
        }
    }

    /// Named networks for checkpointing.
    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        match self {
            CriticParams::InnerProduct { phi, psi } => vec![("phi", phi), ("psi", psi)],
            CriticParams::Monolithic { net } => vec![("critic", net)],
        }
    }

    pub fn from_networks(
        arch: CriticArch,
        mut load: impl FnMut(&str) -> Result<Vec<NamedTensor>>,
    ) -> Result<Self> {
        Ok(match arch {
            CriticArch::InnerProduct => CriticParams::InnerProduct {
                phi: Mlp::from_tensors("phi", &load("phi")?)?,
                psi: Mlp::from_tensors("psi", &load("psi")?)?,
            },
            CriticArch::Monolithic => CriticParams::Monolithic {
                net: Mlp::from_tensors("critic", &load("critic")?)?,
            },
        })
    }

    /// Logit table: entry `(i, j)` scores `(states[i], actions[i])` against `futures[j]`.
    pub fn logits(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        futures: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(self.logits_cached(states, actions, futures)?.logits)
    }

    fn logits_cached(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        futures: ArrayView2<f64>,
    ) -> Result<LogitCache> {
        let n = states.nrows();
        if actions.nrows() != n || futures.nrows() != n {
            return Err(Error::Shape("critic batch rows are not aligned".into()));
        }
        let sa = hconcat(&[states, actions]);
        match self {
            CriticParams::InnerProduct { phi, psi } => {
                let phi_acts = phi.forward_cached(sa.view())?;
                let psi_acts = psi.forward_cached(futures)?;
                let logits = phi_acts.output().dot(&psi_acts.output().t());
                Ok(LogitCache {
                    logits,
                    acts: vec![phi_acts, psi_acts],
                })
            }
            CriticParams::Monolithic { net } => {
                let x = pair_grid(sa.view(), futures);
                let acts = net.forward_cached(x.view())?;
                let logits = acts
                    .output()
                    .view()
                    .into_shape_with_order((n, n))
                    .map_err(|e| Error::Shape(e.to_string()))?
                    .to_owned();
                Ok(LogitCache {
                    logits,
                    acts: vec![acts],
                })
            }
        }
    }

    /// Scores for row-aligned `(s_i, a_i, g_i)`; the diagonal of the logit table
    /// without computing the rest.
    pub fn score(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        goals: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        Ok(self.score_cached(states, actions, goals)?.0)
    }

    fn score_cached(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        goals: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, ScoreCache)> {
        match self {
            CriticParams::InnerProduct { phi, psi } => {
                let sa = hconcat(&[states, actions]);
                let acts = phi.forward_cached(sa.view())?;
                let psi_g = psi.forward(goals)?;
                let q = (acts.output() * &psi_g).sum_axis(Axis(1));
                Ok((q, ScoreCache::InnerProduct { acts, psi_g }))
            }
            CriticParams::Monolithic { net } => {
                let x = hconcat(&[states, actions, goals]);
                let acts = net.forward_cached(x.view())?;
                let q = acts.output().column(0).to_owned();
                Ok((q, ScoreCache::Monolithic { acts }))
            }
        }
    }

    /// Gradient of `Σ_i w_i · score_i` with respect to the actions, critic held fixed.
    pub fn score_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        goals: ArrayView2<f64>,
        weights: &Array1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        let (q, cache) = self.score_cached(states, actions, goals)?;
        let obs_dim = states.ncols();
        let act_dim = actions.ncols();
        let d_input = match (self, cache) {
            (CriticParams::InnerProduct { phi, .. }, ScoreCache::InnerProduct { acts, psi_g }) => {
                let d_out = psi_g * &weights.view().insert_axis(Axis(1));
                phi.backward(&acts, d_out, Backprop::Input).1
            }
            (CriticParams::Monolithic { net }, ScoreCache::Monolithic { acts }) => {
                let d_out = weights.view().insert_axis(Axis(1)).to_owned();
                net.backward(&acts, d_out, Backprop::Input).1
            }
            _ => unreachable!("cache matches architecture"),
        }
        .expect("input gradient requested");
        Ok((
            q,
            d_input.slice(s![.., obs_dim..obs_dim + act_dim]).to_owned(),
        ))
    }

    /// Critic loss over a batch and its gradient with respect to every critic parameter.
    pub fn loss_and_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        futures: ArrayView2<f64>,
    ) -> Result<(CriticLoss, CriticParams)> {
        let cache = self.logits_cached(states, actions, futures)?;
        let loss = critic_loss(&cache.logits);
        let g = &loss.d_logits;
        let grads = match self {
            CriticParams::InnerProduct { phi, psi } => {
                let (phi_acts, psi_acts) = (&cache.acts[0], &cache.acts[1]);
                let d_phi = g.dot(psi_acts.output());
                let d_psi = g.t().dot(phi_acts.output());
                CriticParams::InnerProduct {
                    phi: phi
                        .backward(phi_acts, d_phi, Backprop::Params)
                        .0
                        .expect("params"),
                    psi: psi
                        .backward(psi_acts, d_psi, Backprop::Params)
                        .0
                        .expect("params"),
                }
            }
            CriticParams::Monolithic { net } => {
                let n = g.nrows();
                let d_out = g
                    .clone()
                    .into_shape_with_order((n * n, 1))
                    .map_err(|e| Error::Shape(e.to_string()))?;
                CriticParams::Monolithic {
                    net: net
                        .backward(&cache.acts[0], d_out, Backprop::Params)
                        .0
                        .expect("params"),
                }
            }
        };
        Ok((loss, grads))
    }
}

struct LogitCache {
    logits: Array2<f64>,
    acts: Vec<crate::numcore::Activations>,
}

enum ScoreCache {
    InnerProduct {
        acts: crate::numcore::Activations,
        psi_g: Array2<f64>,
    },
    Monolithic {
        acts: crate::numcore::Activations,
    },
}

/// Row `i * n + j` is `concat(sa[i], futures[j])`.
fn pair_grid(sa: ArrayView2<f64>, futures: ArrayView2<f64>) -> Array2<f64> {
    let n = sa.nrows();
    let (da, df) = (sa.ncols(), futures.ncols());
    let mut x = Array2::zeros((n * n, da + df));
    for i in 0..n {
        for j in 0..n {
            let mut row = x.row_mut(i * n + j);
            row.slice_mut(s![..da]).assign(&sa.row(i));
            row.slice_mut(s![da..]).assign(&futures.row(j));
        }
    }
    x
}

impl Params for CriticParams {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            CriticParams::InnerProduct { phi, psi } => {
                let mut t = phi.tensors();
                t.extend(psi.tensors());
                t
            }
            CriticParams::Monolithic { net } => net.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            CriticParams::InnerProduct { phi, psi } => {
                let mut t = phi.tensors_mut();
                t.extend(psi.tensors_mut());
                t
            }
            CriticParams::Monolithic { net } => net.tensors_mut(),
        }
    }
}

/// Value of the critic loss plus its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub loss: f64,
    pub d_logits: Array2<f64>,
    /// Row-wise logsumexp.
    pub lse: Array1<f64>,
    /// Fraction of rows whose largest logit is the positive.
    pub accuracy: f64,
}

/// `-(1/N) Σ_i [ L_ii - lse_i - 0.01 · lse_i² ]`, with `lse_i` the row logsumexp.
///
/// The gradient is `(1/N) [softmax_ij · (1 + 0.02 · lse_i) - δ_ij]`.
pub fn critic_loss(logits: &Array2<f64>) -> CriticLoss {
    let n = logits.nrows();
    let inv_n = 1.0 / n as f64;
    let mut d = Array2::zeros((n, n));
    let mut lse = Array1::zeros(n);
    let mut total = 0.0;
    let mut correct = 0usize;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let l = m + sum.ln();
        lse[i] = l;
        total += -(row[i] - l - LSE_PENALTY * l * l);
        let scale = 1.0 + 2.0 * LSE_PENALTY * l;
        for (j, &v) in row.iter().enumerate() {
            d[[i, j]] = inv_n * ((v - m).exp() / sum * scale - if i == j { 1.0 } else { 0.0 });
        }
        if row.iter().all(|&v| v <= row[i]) {
            correct += 1;
        }
    }
    CriticLoss {
        loss: total * inv_n,
        d_logits: d,
        lse,
        accuracy: correct as f64 * inv_n,
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_two_by_two_golden_value() {
        let out = critic_loss(&Array2::zeros((2, 2)));
        let ln2 = std::f64::consts::LN_2;
        assert!((out.loss - (ln2 + 0.01 * ln2 * ln2)).abs() < 1e-15);
        assert!((out.loss - 0.697952).abs() < 1e-6);
    }

    #[test]
    fn single_logit_is_pure_penalty() {
        for l in [-3.0, 0.0, 0.5, 7.0] {
            let out = critic_loss(&array![[l]]);
            assert_eq!(out.loss, 0.01 * l * l);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let out = critic_loss(&array![[800.0, -800.0], [-800.0, 800.0]]);
        assert!(out.loss.is_finite());
        assert_eq!(out.accuracy, 1.0);
    }

    #[test]
    fn zero_psi_gives_zero_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut critic = CriticParams::init(CriticArch::InnerProduct, 2, 2, &[8], 4, &mut rng);
        if let CriticParams::InnerProduct { psi, .. } = &mut critic {
            *psi = psi.zeros_like();
        }
        let s = Array2::from_elem((3, 2), 0.3);
        let l = critic.logits(s.view(), s.view(), s.view()).unwrap();
        assert!(l.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn monolithic_table_matches_pointwise_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let critic = CriticParams::init(CriticArch::Monolithic, 2, 2, &[6], 4, &mut rng);
        let s = array![[0.1, 0.2], [0.3, -0.4], [1.0, 0.5]];
        let a = array![[0.5, -0.5], [0.0, 0.1], [-0.9, 0.9]];
        let f = array![[2.0, 1.0], [0.0, 0.0], [-1.0, 3.0]];
        let l = critic.logits(s.view(), a.view(), f.view()).unwrap();
        for j in 0..3 {
            let g = Array2::from_shape_fn((3, 2), |(_, c)| f[[j, c]]);
            let q = critic.score(s.view(), a.view(), g.view()).unwrap();
            for i in 0..3 {
                assert!((l[[i, j]] - q[i]).abs() < 1e-12);
            }
        }
    }
}
