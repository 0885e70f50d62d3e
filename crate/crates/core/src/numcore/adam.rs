use crate::numcore::Params;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state: first and second moments shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new<P: Params + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Restores a state from its raw parts (used by checkpoint loading).
    pub fn from_parts(config: AdamConfig, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, step: u64) -> Self {
        Self { config, m, v, step }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Fails without touching anything if the gradient has the wrong shape or
    /// contains a non-finite entry.
    pub fn update<P: Params + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.tensors();
        if g.len() != self.m.len() || g.iter().zip(&self.m).any(|(g, m)| g.len() != m.len()) {
            return Err(Error::Shape(
                "gradient does not match optimizer state".into(),
            ));
        }
        if !g.iter().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                batch: self.step,
            });
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(g)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.update(&mut p, &vec![0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert!(adam.first_moments()[0].iter().all(|&m| m == 0.0));
        assert!(adam.second_moments()[0].iter().all(|&v| v == 0.0));
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn single_step_matches_hand_recurrence() {
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; p = -0.1 / (1 + 1e-8)
        let mut p = vec![0.0];
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &p);
        adam.update(&mut p, &vec![1.0]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{}", p[0]);
    }

    #[test]
    fn two_identical_gradients_match_hand_recurrence() {
        // Step 2: m = 0.9*0.1 + 0.1 = 0.19, v = 0.999*0.001 + 0.001 = 0.001999
        // m_hat = 0.19 / (1 - 0.81) = 1, v_hat = 0.001999 / (1 - 0.998001) = 1
        // so the second update is again -lr / (1 + eps).
        let mut p = vec![0.0];
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &p);
        adam.update(&mut p, &vec![1.0]).unwrap();
        let after_first = p[0];
        adam.update(&mut p, &vec![1.0]).unwrap();
        assert_eq!(adam.step_count(), 2);
        let second = p[0] - after_first;
        let m: f64 = 0.9 * 0.1 + 0.1;
        let v: f64 = 0.999 * 0.001 + 0.001;
        let expected = -0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.998001)).sqrt() + 1e-8);
        assert!((second - expected).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = vec![1.0, 2.0];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let err = adam.update(&mut p, &vec![f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![1.0, 2.0];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        assert!(matches!(
            adam.update(&mut p, &vec![0.0]),
            Err(Error::Shape(_))
        ));
    }
}
