//! Dense multi-layer perceptrons with ReLU hidden layers and a linear head.
//!
//! Weights are stored `out × in`; a batch is a `B × in` matrix with one
//! sample per row. The backward pass is hand-written and returns parameter
//! gradients in an [`Mlp`] of identical shape, plus (optionally) the gradient
//! with respect to the input rows.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::numcore::Params;
use crate::{Error, Result};

/// One affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// `dot` may return column-major results; parameters are kept row-major.
fn standard(m: Array2<f64>) -> Array2<f64> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

/// Feed-forward network: ReLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Cached layer inputs from [`Mlp::forward_cached`], consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `inputs[l]` is the (post-ReLU) input fed to layer `l`.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.inputs[0]
    }
}

/// What the backward pass should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backprop {
    Params,
    Input,
    Both,
}

impl Mlp {
    /// Builds a network from explicit layers, checking that shapes chain and
    /// every entry is finite.
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias has {} entries, weight has {} rows",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layer.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
            if !layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite())
            {
                return Err(Error::Validation(format!(
                    "layer {i} has non-finite entries"
                )));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| Dense {
                weight: standard(l.weight),
                bias: l.bias.as_standard_layout().into_owned(),
            })
            .collect();
        Ok(Self { layers })
    }

    /// Seeded uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for
    /// weights and biases. `sizes` lists input width, hidden widths, output width.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.random_range(-bound..=bound)
                });
                let bias =
                    Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..=bound));
                Dense { weight, bias }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }

    /// Input width, hidden widths and output width.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("empty input batch".into()));
        }
        Ok(())
    }

    /// Applies the network to every row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = affine(&self.layers[0], x);
        if last > 0 {
            relu_inplace(&mut h);
        }
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            h = affine(layer, h.view());
            if l < last {
                relu_inplace(&mut h);
            }
        }
        Ok(h)
    }

    /// Forward pass that keeps every layer input for [`Mlp::backward`].
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<Activations> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        let mut output = Array2::zeros((0, 0));
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = affine(layer, inputs[l].view());
            if l < last {
                relu_inplace(&mut h);
                inputs.push(h);
            } else {
                output = h;
            }
        }
        Ok(Activations { inputs, output })
    }

    /// Reverse pass given `d_out = dL/d(output)`.
    ///
    /// Returns parameter gradients and/or the gradient with respect to the
    /// network input, depending on `mode`.
    pub fn backward(
        &self,
        acts: &Activations,
        d_out: Array2<f64>,
        mode: Backprop,
    ) -> (Option<Mlp>, Option<Array2<f64>>) {
        assert_eq!(
            d_out.dim(),
            acts.output.dim(),
            "d_out must match the cached output"
        );
        let want_params = mode != Backprop::Input;
        let want_input = mode != Backprop::Params;
        let mut grads: Vec<Option<Dense>> = vec![None; self.layers.len()];
        let mut dz = d_out;
        let mut d_input = None;
        for l in (0..self.layers.len()).rev() {
            let a = &acts.inputs[l];
            if want_params {
                grads[l] = Some(Dense {
                    weight: standard(dz.t().dot(a)),
                    bias: dz.sum_axis(Axis(0)),
                });
            }
            if l == 0 {
                if want_input {
                    d_input = Some(dz.dot(&self.layers[0].weight));
                }
                break;
            }
            let mut da = dz.dot(&self.layers[l].weight);
            // ReLU mask from the stored post-activation.
            ndarray::Zip::from(&mut da).and(a).for_each(|g, &h| {
                if h <= 0.0 {
                    *g = 0.0;
                }
            });
            dz = da;
        }
        let grads = want_params.then(|| Mlp {
            layers: grads
                .into_iter()
                .map(|g| g.expect("all layers visited"))
                .collect(),
        });
        (grads, d_input)
    }

    /// `self += scale * other`, elementwise over all parameters.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    /// Exponential moving average towards `online`: `self = (1 - tau) self + tau online`.
    pub fn ema_towards(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            ndarray::Zip::from(&mut t.weight)
                .and(&o.weight)
                .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
            ndarray::Zip::from(&mut t.bias)
                .and(&o.bias)
                .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
    }

    /// `0.5 * ||theta||^2` and its gradient (which is `theta` itself).
    pub fn half_squared_norm(&self) -> (f64, Mlp) {
        let value = self
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| 0.5 * v * v)
            .sum();
        (value, self.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

fn affine(layer: &Dense, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn relu_inplace(h: &mut Array2<f64>) {
    h.mapv_inplace(|v| v.max(0.0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]);
        let y = net
            .forward(array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]].view())
            .unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::new(vec![Dense {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
        }])
        .unwrap();
        let y = net.forward(array![[1.5, -2.0]].view()).unwrap();
        assert_eq!(y, array![[1.5, -2.0]]);
    }

    #[test]
    fn two_layer_hand_evaluation() {
        // h = relu([[1, -1], [2, 1], [0.5, 0]] x + [0, -1, 0.25]); y = [1, 2, -1] h + 0.5
        let net = Mlp::new(vec![
            Dense {
                weight: array![[1.0, -1.0], [2.0, 1.0], [0.5, 0.0]],
                bias: array![0.0, -1.0, 0.25],
            },
            Dense {
                weight: array![[1.0, 2.0, -1.0]],
                bias: array![0.5],
            },
        ])
        .unwrap();
        // x = [1, 0]: pre = [1, 1, 0.75] -> h = [1, 1, 0.75]; y = 1 + 2 - 0.75 + 0.5 = 2.75
        let y = net.forward(array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(y, array![[2.75]]);
        // x = [0, 1]: pre = [-1, 0, 0.25] -> h = [0, 0, 0.25]; y = -0.25 + 0.5 = 0.25
        let y = net.forward(array![[0.0, 1.0]].view()).unwrap();
        assert_eq!(y, array![[0.25]]);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 4, 1]);
        assert!(matches!(
            net.forward(Array2::zeros((2, 2)).view()),
            Err(Error::Shape(_))
        ));
        let bad = Mlp::new(vec![
            Dense {
                weight: Array2::zeros((4, 3)),
                bias: Array1::zeros(4),
            },
            Dense {
                weight: Array2::zeros((1, 5)),
                bias: Array1::zeros(1),
            },
        ]);
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn last_layer_is_linear_in_its_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Mlp::init(&[3, 6, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64) - 0.7 * j as f64);
        // Zero the bias of output 1 so doubling its weight row doubles the output exactly.
        net.layers_mut()[1].bias[1] = 0.0;
        let y = net.forward(x.view()).unwrap();
        net.layers_mut()[1]
            .weight
            .row_mut(1)
            .mapv_inplace(|v| 2.0 * v);
        let y2 = net.forward(x.view()).unwrap();
        for i in 0..4 {
            assert!((y2[[i, 1]] - 2.0 * y[[i, 1]]).abs() < 1e-12);
            assert_eq!(y2[[i, 0]], y[[i, 0]]);
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[16, 8, 4], &mut rng);
        for layer in net.layers() {
            let bound = 1.0 / (layer.in_dim() as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn half_squared_norm_gradient_is_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(&[2, 3, 1], &mut rng);
        let (value, grad) = net.half_squared_norm();
        assert_eq!(grad, net);
        let direct: f64 = net
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| 0.5 * v * v)
            .sum();
        assert!((value - direct).abs() < 1e-12);
    }
}
