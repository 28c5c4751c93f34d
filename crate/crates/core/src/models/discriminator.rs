//! PatchGAN discriminator: classifies every receptive-field patch of the
//! (input, target-or-output) pair as real or fake.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::activation::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward};
use crate::engine::{BatchNorm2d, BatchNormCache, Conv2d, Param, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::models::generator::INIT_STD;
use crate::models::scheme::{Activation, LayerDescriptor, SchemeConfig};

#[derive(Clone, Debug, PartialEq)]
struct DiscLayer<F> {
    desc: LayerDescriptor,
    conv: Conv2d<F>,
    norm: Option<BatchNorm2d<F>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<F> {
    cfg: SchemeConfig,
    layers: Vec<DiscLayer<F>>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorTrace<F> {
    inputs: Vec<Tensor<F>>,
    norm: Vec<Option<BatchNormCache<F>>>,
    pre_activation: Vec<Tensor<F>>,
    probs: Tensor<F>,
}

impl<F> DiscriminatorTrace<F> {
    /// Post-sigmoid `k x k` patch map, shape `[N, 1, k, k]`.
    pub fn patch_map(&self) -> &Tensor<F> {
        &self.probs
    }
}

impl<F: Scalar> Discriminator<F> {
    pub fn new(cfg: SchemeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let layers = cfg
            .discriminator_layers()
            .into_iter()
            .map(|desc| DiscLayer {
                conv: Conv2d::new(&desc.name, desc.conv_spec(), INIT_STD, &mut rng),
                norm: desc
                    .batch_norm
                    .then(|| BatchNorm2d::new(&desc.name, desc.out_channels, &mut rng)),
                desc,
            })
            .collect();
        Ok(Self { cfg, layers })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.layers.iter().map(|l| &l.desc)
    }

    /// Scores the channel concatenation `x || y`.
    pub fn forward(&self, x: &Tensor<F>, y: &Tensor<F>) -> Result<DiscriminatorTrace<F>> {
        if y.channels() != self.cfg.out_channels() {
            return Err(Error::shape(format!(
                "discriminator expects {} target channels, got {:?}",
                self.cfg.out_channels(),
                y.shape()
            )));
        }
        let pair = Tensor::concat_channels(x, y)?;
        self.forward_pair(&pair)
    }

    pub fn forward_pair(&self, pair: &Tensor<F>) -> Result<DiscriminatorTrace<F>> {
        let n = self.cfg.image_size;
        if pair.height() != n || pair.width() != n {
            return Err(Error::shape(format!(
                "discriminator for {n}x{n} input got {:?}",
                pair.shape()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut norm = Vec::with_capacity(self.layers.len());
        let mut pre_activation = Vec::with_capacity(self.layers.len());
        let mut current = pair.clone();
        for layer in &self.layers {
            let z = layer.conv.forward(&current)?;
            let (z, cache) = match &layer.norm {
                Some(bn) => {
                    let (y, c) = bn.forward(&z)?;
                    (y, Some(c))
                }
                None => (z, None),
            };
            let next = match layer.desc.post_activation {
                Activation::LeakyRelu => leaky_relu(&z),
                Activation::Sigmoid => sigmoid(&z),
                other => unreachable!("discriminator layer with {other:?} activation"),
            };
            inputs.push(std::mem::replace(&mut current, next));
            norm.push(cache);
            pre_activation.push(z);
        }
        Ok(DiscriminatorTrace {
            inputs,
            norm,
            pre_activation,
            probs: current,
        })
    }

    /// Back-propagates a gradient w.r.t. the patch probabilities. Returns the
    /// gradient w.r.t. the concatenated input when requested.
    pub fn backward(
        &mut self,
        trace: &DiscriminatorTrace<F>,
        grad_probs: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        if grad_probs.shape() != trace.probs.shape() {
            return Err(Error::shape("patch map gradient has the wrong shape"));
        }
        let mut grad = sigmoid_backward(&trace.probs, grad_probs);
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let layer = &mut self.layers[i];
            if i != last {
                grad = leaky_relu_backward(&trace.pre_activation[i], &grad);
            }
            if let (Some(bn), Some(cache)) = (layer.norm.as_mut(), trace.norm[i].as_ref()) {
                grad = bn.backward(cache, &grad);
            }
            let want_input = i > 0 || need_input_grad;
            match layer.conv.backward(&trace.inputs[i], &grad, want_input)? {
                Some(g) => grad = g,
                None => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([&l.conv.weight, &l.conv.bias]);
            if let Some(bn) = &l.norm {
                out.extend([&bn.gamma, &bn.beta]);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.conv.weight);
            out.push(&mut l.conv.bias);
            if let Some(bn) = &mut l.norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> Discriminator<G> {
        let mut out = Discriminator::<G>::new(self.cfg, 0).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.iter().map(|v| G::from_f64(v.as_f64())).collect();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Scheme;

    #[test]
    fn patch_map_shape_and_range() {
        for (n, k) in [(64, 6), (256, 30)] {
            let cfg = SchemeConfig::new(Scheme::Mt, n).with_base_width(2);
            let d = Discriminator::<f32>::new(cfg, 0).unwrap();
            let x = Tensor::full([1, 3, n, n], 0.5);
            let y = Tensor::full([1, 6, n, n], -0.5);
            let t = d.forward(&x, &y).unwrap();
            assert_eq!(t.patch_map().shape(), [1, 1, k, k]);
            assert!(t.patch_map().data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn input_channels_depend_on_task_count() {
        let first = |s| {
            SchemeConfig::new(s, 256)
                .discriminator_layers()
                .first()
                .unwrap()
                .in_channels
        };
        assert_eq!(first(Scheme::Mt), 9);
        assert_eq!(first(Scheme::StSeg), 6);
    }
}
