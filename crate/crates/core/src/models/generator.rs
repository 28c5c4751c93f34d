//! Encoder-decoder generator with skip connections (U-Net style), optional
//! dilation in the inner encoder layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::activation::{
    dropout_mask, leaky_relu, leaky_relu_backward, mul, relu, relu_backward, tanh, tanh_backward,
};
use crate::engine::{BatchNorm2d, BatchNormCache, Conv2d, ConvTranspose2d, Param, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::models::scheme::{LayerDescriptor, LayerKind, SchemeConfig};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
struct EncoderLayer<F> {
    desc: LayerDescriptor,
    conv: Conv2d<F>,
    norm: Option<BatchNorm2d<F>>,
}

#[derive(Clone, Debug, PartialEq)]
struct DecoderLayer<F> {
    desc: LayerDescriptor,
    deconv: ConvTranspose2d<F>,
    norm: Option<BatchNorm2d<F>>,
}

/// Generator weights plus the layer descriptors they were built from.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<F> {
    cfg: SchemeConfig,
    encoder: Vec<EncoderLayer<F>>,
    decoder: Vec<DecoderLayer<F>>,
}

/// Intermediate values of one forward pass, consumed by [`Generator::backward`].
#[derive(Clone, Debug)]
pub struct GeneratorTrace<F> {
    enc_input: Vec<Tensor<F>>,
    enc_norm: Vec<Option<BatchNormCache<F>>>,
    enc_out: Vec<Tensor<F>>,
    dec_concat: Vec<Tensor<F>>,
    dec_input: Vec<Tensor<F>>,
    dec_norm: Vec<Option<BatchNormCache<F>>>,
    dec_mask: Vec<Option<Tensor<F>>>,
    output: Tensor<F>,
}

impl<F> GeneratorTrace<F> {
    pub fn output(&self) -> &Tensor<F> {
        &self.output
    }

    /// Spatial sizes of the encoder outputs, outermost first.
    pub fn encoder_sizes(&self) -> Vec<(usize, usize)>
    where
        F: Scalar,
    {
        self.enc_out
            .iter()
            .map(|t| (t.height(), t.width()))
            .collect()
    }
}

impl<F: Scalar> Generator<F> {
    /// Builds the generator with Gaussian(0, 0.02) weights drawn from `seed`.
    pub fn new(cfg: SchemeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut encoder = Vec::new();
        let mut decoder = Vec::new();
        for desc in cfg.generator_layers() {
            let norm = desc
                .batch_norm
                .then(|| BatchNorm2d::new(&desc.name, desc.out_channels, &mut rng));
            match desc.kind {
                LayerKind::Conv => encoder.push(EncoderLayer {
                    conv: Conv2d::new(&desc.name, desc.conv_spec(), INIT_STD, &mut rng),
                    norm,
                    desc,
                }),
                LayerKind::Deconv => decoder.push(DecoderLayer {
                    deconv: ConvTranspose2d::new(&desc.name, desc.conv_spec(), INIT_STD, &mut rng),
                    norm,
                    desc,
                }),
            }
        }
        Ok(Self {
            cfg,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.encoder
            .iter()
            .map(|l| &l.desc)
            .chain(self.decoder.iter().map(|l| &l.desc))
    }

    /// Runs the generator. Dropout is applied only when `dropout` carries an
    /// RNG (training mode); otherwise the pass is deterministic.
    pub fn forward(
        &self,
        x: &Tensor<F>,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<GeneratorTrace<F>> {
        let n = self.cfg.image_size;
        if x.channels() != self.cfg.in_channels() || x.height() != n || x.width() != n {
            return Err(Error::shape(format!(
                "generator for {n}x{n}x{} input got {:?}",
                self.cfg.in_channels(),
                x.shape()
            )));
        }
        let depth = self.encoder.len();
        let mut enc_input = Vec::with_capacity(depth);
        let mut enc_norm = Vec::with_capacity(depth);
        let mut enc_out: Vec<Tensor<F>> = Vec::with_capacity(depth);
        for (i, layer) in self.encoder.iter().enumerate() {
            let input = if i == 0 {
                x.clone()
            } else {
                leaky_relu(&enc_out[i - 1])
            };
            let z = layer.conv.forward(&input)?;
            let (out, cache) = match &layer.norm {
                Some(bn) => {
                    let (y, c) = bn.forward(&z)?;
                    (y, Some(c))
                }
                None => (z, None),
            };
            enc_input.push(input);
            enc_norm.push(cache);
            enc_out.push(out);
        }

        let mut dec_concat = Vec::with_capacity(depth);
        let mut dec_input = Vec::with_capacity(depth);
        let mut dec_norm = Vec::with_capacity(depth);
        let mut dec_mask = Vec::with_capacity(depth);
        let mut current = enc_out[depth - 1].clone();
        for (k, layer) in self.decoder.iter().enumerate() {
            let concat = if k == 0 {
                current
            } else {
                Tensor::concat_channels(&current, &enc_out[depth - 1 - k])?
            };
            let input = relu(&concat);
            let z = layer.deconv.forward(&input)?;
            let (mut y, cache) = match &layer.norm {
                Some(bn) => {
                    let (y, c) = bn.forward(&z)?;
                    (y, Some(c))
                }
                None => (z, None),
            };
            let mask = match dropout.as_deref_mut() {
                Some(rng) if layer.desc.dropout > 0.0 => {
                    let m = dropout_mask(y.shape(), layer.desc.dropout, rng);
                    y = mul(&y, &m);
                    Some(m)
                }
                _ => None,
            };
            dec_concat.push(concat);
            dec_input.push(input);
            dec_norm.push(cache);
            dec_mask.push(mask);
            current = y;
        }
        let output = tanh(&current);
        Ok(GeneratorTrace {
            enc_input,
            enc_norm,
            enc_out,
            dec_concat,
            dec_input,
            dec_norm,
            dec_mask,
            output,
        })
    }

    /// Deterministic inference pass (dropout off).
    pub fn predict(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.forward(x, None)?.output)
    }

    /// Back-propagates `grad_output` (gradient w.r.t. the tanh output) and
    /// accumulates parameter gradients.
    pub fn backward(&mut self, trace: &GeneratorTrace<F>, grad_output: &Tensor<F>) -> Result<()> {
        if grad_output.shape() != trace.output.shape() {
            return Err(Error::shape(
                "generator output gradient has the wrong shape",
            ));
        }
        let depth = self.encoder.len();
        let mut grad_enc: Vec<Option<Tensor<F>>> = vec![None; depth];
        let accumulate = |slot: &mut Option<Tensor<F>>, g: Tensor<F>| match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        };

        let mut grad = tanh_backward(&trace.output, grad_output);
        for k in (0..depth).rev() {
            let layer = &mut self.decoder[k];
            if let Some(mask) = &trace.dec_mask[k] {
                grad = mul(&grad, mask);
            }
            if let (Some(bn), Some(cache)) = (layer.norm.as_mut(), trace.dec_norm[k].as_ref()) {
                grad = bn.backward(cache, &grad);
            }
            let g_in = layer
                .deconv
                .backward(&trace.dec_input[k], &grad, true)?
                .expect("input gradient requested");
            let g_cat = relu_backward(&trace.dec_concat[k], &g_in);
            if k == 0 {
                accumulate(&mut grad_enc[depth - 1], g_cat);
            } else {
                let prev_channels = self.decoder[k - 1].desc.out_channels;
                let (g_prev, g_skip) = g_cat.split_channels(prev_channels);
                accumulate(&mut grad_enc[depth - 1 - k], g_skip);
                grad = g_prev;
            }
        }

        for i in (0..depth).rev() {
            let Some(mut grad) = grad_enc[i].take() else {
                continue;
            };
            let layer = &mut self.encoder[i];
            if let (Some(bn), Some(cache)) = (layer.norm.as_mut(), trace.enc_norm[i].as_ref()) {
                grad = bn.backward(cache, &grad);
            }
            let g_in = layer.conv.backward(&trace.enc_input[i], &grad, i > 0)?;
            if let Some(g_in) = g_in {
                let g_prev = leaky_relu_backward(&trace.enc_out[i - 1], &g_in);
                accumulate(&mut grad_enc[i - 1], g_prev);
            }
        }
        Ok(())
    }

    /// Parameters in a fixed order: layer by layer, weight, bias, gamma, beta.
    pub fn params(&self) -> Vec<&Param<F>> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.extend([&l.conv.weight, &l.conv.bias]);
            if let Some(bn) = &l.norm {
                out.extend([&bn.gamma, &bn.beta]);
            }
        }
        for l in &self.decoder {
            out.extend([&l.deconv.weight, &l.deconv.bias]);
            if let Some(bn) = &l.norm {
                out.extend([&bn.gamma, &bn.beta]);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.conv.weight);
            out.push(&mut l.conv.bias);
            if let Some(bn) = &mut l.norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        for l in &mut self.decoder {
            out.push(&mut l.deconv.weight);
            out.push(&mut l.deconv.bias);
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

    pub fn cast<G: Scalar>(&self) -> Generator<G> {
        let mut out = Generator::<G>::new(self.cfg, 0).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.iter().map(|v| G::from_f64(v.as_f64())).collect();
        }
        out
    }
}
