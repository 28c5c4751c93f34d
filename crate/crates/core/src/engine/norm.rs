use rand::Rng;

use crate::engine::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

/// Batch normalization over (N, H, W) per channel, always using the
/// statistics of the current batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<F> {
    normalized: Tensor<F>,
    inv_std: Vec<F>,
}

impl<F: Scalar> BatchNorm2d<F> {
    pub fn new<R: Rng>(name: &str, channels: usize, rng: &mut R) -> Self {
        Self {
            gamma: Param::normal(format!("{name}.gamma"), vec![channels], 1.0, 0.02, rng),
            beta: Param::constant(format!("{name}.beta"), vec![channels], 0.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, BatchNormCache<F>)> {
        let [n, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batch norm over {} channels got {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let plane = h * w;
        let count = F::from_f64((n * plane) as f64);
        let eps = F::from_f64(BN_EPS);
        let mut normalized = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let slices = (0..n).map(|b| (b * c + ch) * plane);
            let mut sum = F::zero();
            for s in slices.clone() {
                sum = sum + x.data()[s..s + plane].iter().copied().sum();
            }
            let mean = sum / count;
            let mut var = F::zero();
            for s in slices.clone() {
                for &v in &x.data()[s..s + plane] {
                    let d = v - mean;
                    var = var + d * d;
                }
            }
            let istd = F::one() / (var / count + eps).sqrt();
            inv_std.push(istd);
            let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            for s in slices {
                for i in s..s + plane {
                    let xh = (x.data()[i] - mean) * istd;
                    normalized.data_mut()[i] = xh;
                    out.data_mut()[i] = g * xh + bt;
                }
            }
        }
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BatchNormCache<F>, grad_out: &Tensor<F>) -> Tensor<F> {
        let [n, c, h, w] = grad_out.shape();
        let plane = h * w;
        let count = F::from_f64((n * plane) as f64);
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let slices = (0..n).map(|b| (b * c + ch) * plane);
            let (mut sum_dy, mut sum_dy_xh) = (F::zero(), F::zero());
            for s in slices.clone() {
                for i in s..s + plane {
                    let dy = grad_out.data()[i];
                    sum_dy = sum_dy + dy;
                    sum_dy_xh = sum_dy_xh + dy * cache.normalized.data()[i];
                }
            }
            self.gamma.grad[ch] = self.gamma.grad[ch] + sum_dy_xh;
            self.beta.grad[ch] = self.beta.grad[ch] + sum_dy;
            let scale = self.gamma.value[ch] * cache.inv_std[ch] / count;
            for s in slices {
                for i in s..s + plane {
                    let dy = grad_out.data()[i];
                    let xh = cache.normalized.data()[i];
                    grad_in.data_mut()[i] = scale * (count * dy - sum_dy - xh * sum_dy_xh);
                }
            }
        }
        grad_in
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}
