//! Minimal dense numeric layer: MLPs, Adam, and the tensor checkpoint format.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::NamedTensor;
pub use mlp::{Activations, Backprop, Dense, Mlp};

use ndarray::{Array2, ArrayView2};

/// Anything that exposes its parameters as a fixed, ordered list of flat tensors.
///
/// Gradient containers use the same type as the parameters they belong to, so
/// `grads.tensors()` lines up one-to-one with `params.tensors()`.
pub trait Params {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl Params for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Horizontally concatenates row-aligned blocks.
pub fn hconcat(blocks: &[ArrayView2<f64>]) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), blocks).expect("blocks must share a row count")
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_derivative_of_softplus() {
        for &x in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - sigmoid(x)).abs() < 1e-8);
        }
    }
}
