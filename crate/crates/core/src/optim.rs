use serde::{Deserialize, Serialize};

use crate::engine::{Param, Scalar};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Adam with bias correction. Moments are kept per parameter in the order
/// the parameters are presented at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<F>>,
    pub second: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, params: &[&Param<F>]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            second: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Param<F>>) {
        assert_eq!(params.len(), self.first.len(), "parameter list changed");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2 } = self.config;
        let t = self.step as i32;
        let lr_t = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
        let (b1, b2) = (F::from_f64(beta1), F::from_f64(beta2));
        let (c1, c2) = (F::from_f64(1.0 - beta1), F::from_f64(1.0 - beta2));
        let (lr_t, eps) = (F::from_f64(lr_t), F::from_f64(ADAM_EPS));
        for ((p, m), v) in params
            .into_iter()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + c1 * g;
                v[i] = b2 * v[i] + c2 * g * g;
                p.value[i] = p.value[i] - lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::<f64>::constant("w", vec![2], 1.0);
        p.grad = vec![0.5, -3.0];
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.5,
            beta2: 0.999,
        };
        let mut adam = Adam::new(cfg, &[&p]);
        adam.update(vec![&mut p]);
        assert!((p.value[0] - 0.99).abs() < 1e-6);
        assert!((p.value[1] - 1.01).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::<f64>::constant("w", vec![1], 5.0);
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
        };
        let mut adam = Adam::new(cfg, &[&p]);
        for _ in 0..500 {
            p.grad = vec![2.0 * (p.value[0] - 2.0)];
            adam.update(vec![&mut p]);
        }
        assert!((p.value[0] - 2.0).abs() < 1e-2);
    }
}
