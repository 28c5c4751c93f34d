//! 2-D convolution and transposed convolution lowered to GEMM through
//! im2col / col2im.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Static hyper-parameters of a (transposed) convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    /// Output extent of a forward convolution:
    /// `floor((in + 2p - d(k-1) - 1) / s) + 1`, or `None` when the kernel does
    /// not fit.
    pub fn conv_out(&self, input: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }

    /// Output extent of a transposed convolution:
    /// `(in - 1) s - 2p + d(k-1) + 1`.
    pub fn deconv_out(&self, input: usize) -> Option<usize> {
        let full = (input.checked_sub(1)?) * self.stride + self.dilation * (self.kernel - 1) + 1;
        full.checked_sub(2 * self.padding).filter(|&v| v > 0)
    }
}

/// Geometry of one im2col lowering: an image of `channels x in_h x in_w`
/// is sampled on an `out_h x out_w` grid.
#[derive(Clone, Copy, Debug)]
struct Lowering {
    channels: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
}

impl Lowering {
    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Source coordinate of output position `o` for kernel tap `t`.
    #[inline]
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + t * self.dilation) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    fn im2col<F: Scalar>(&self, src: &[F], cols: &mut [F]) {
        let p = self.cols();
        let k = self.kernel;
        for c in 0..self.channels {
            let plane = &src[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        match self.source(oy, ki, self.in_h) {
                            None => line.iter_mut().for_each(|v| *v = F::zero()),
                            Some(iy) => {
                                let src_row = &plane[iy * self.in_w..(iy + 1) * self.in_w];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.source(ox, kj, self.in_w) {
                                        Some(ix) => src_row[ix],
                                        None => F::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Lowering::im2col`]: scatters-adds columns back into an image.
    fn col2im<F: Scalar>(&self, cols: &[F], dst: &mut [F]) {
        let p = self.cols();
        let k = self.kernel;
        for c in 0..self.channels {
            let plane = &mut dst[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ki, self.in_h) else {
                            continue;
                        };
                        let line = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        let dst_row = &mut plane[iy * self.in_w..(iy + 1) * self.in_w];
                        for (ox, &v) in line.iter().enumerate() {
                            if let Some(ix) = self.source(ox, kj, self.in_w) {
                                dst_row[ix] = dst_row[ix] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_input<F: Scalar>(x: &Tensor<F>, channels: usize, what: &str) -> Result<()> {
    if x.channels() != channels {
        return Err(Error::shape(format!(
            "{what} expects {channels} input channels, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// Standard convolution. Weight layout `[out, in, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<F> {
    pub spec: ConvSpec,
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new<R: Rng>(name: &str, spec: ConvSpec, init_std: f64, rng: &mut R) -> Self {
        let shape = vec![
            spec.out_channels,
            spec.in_channels,
            spec.kernel,
            spec.kernel,
        ];
        Self {
            spec,
            weight: Param::normal(format!("{name}.weight"), shape, 0.0, init_std, rng),
            bias: Param::constant(format!("{name}.bias"), vec![spec.out_channels], 0.0),
        }
    }

    fn lowering(&self, h: usize, w: usize) -> Result<Lowering> {
        let s = &self.spec;
        match (s.conv_out(h), s.conv_out(w)) {
            (Some(out_h), Some(out_w)) => Ok(Lowering {
                channels: s.in_channels,
                in_h: h,
                in_w: w,
                out_h,
                out_w,
                kernel: s.kernel,
                stride: s.stride,
                padding: s.padding,
                dilation: s.dilation,
            }),
            _ => Err(Error::shape(format!(
                "{}x{} input too small for kernel {} dilation {}",
                h, w, s.kernel, s.dilation
            ))),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_input(x, self.spec.in_channels, "conv")?;
        let low = self.lowering(x.height(), x.width())?;
        let (kk, p, oc) = (low.rows(), low.cols(), self.spec.out_channels);
        let mut out = Tensor::zeros([x.batch(), oc, low.out_h, low.out_w]);
        let mut cols = vec![F::zero(); kk * p];
        for b in 0..x.batch() {
            low.im2col(x.item(b), &mut cols);
            let y = out.item_mut(b);
            for (o, chunk) in y.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.value[o]);
            }
            F::gemm(
                oc,
                kk,
                p,
                F::one(),
                &self.weight.value,
                kk as isize,
                1,
                &cols,
                p as isize,
                1,
                F::one(),
                y,
                p as isize,
                1,
            );
        }
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(
        &mut self,
        x: &Tensor<F>,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let low = self.lowering(x.height(), x.width())?;
        let (kk, p, oc) = (low.rows(), low.cols(), self.spec.out_channels);
        if grad_out.shape() != [x.batch(), oc, low.out_h, low.out_w] {
            return Err(Error::shape("conv output gradient has the wrong shape"));
        }
        let mut grad_in = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let mut cols = vec![F::zero(); kk * p];
        for b in 0..x.batch() {
            let dy = grad_out.item(b);
            for (o, chunk) in dy.chunks(p).enumerate() {
                let s: F = chunk.iter().copied().sum();
                self.bias.grad[o] = self.bias.grad[o] + s;
            }
            low.im2col(x.item(b), &mut cols);
            F::gemm(
                oc,
                p,
                kk,
                F::one(),
                dy,
                p as isize,
                1,
                &cols,
                1,
                p as isize,
                F::one(),
                &mut self.weight.grad,
                kk as isize,
                1,
            );
            if let Some(gi) = grad_in.as_mut() {
                F::gemm(
                    kk,
                    oc,
                    p,
                    F::one(),
                    &self.weight.value,
                    1,
                    kk as isize,
                    dy,
                    p as isize,
                    1,
                    F::zero(),
                    &mut cols,
                    p as isize,
                    1,
                );
                low.col2im(&cols, gi.item_mut(b));
            }
        }
        Ok(grad_in)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Transposed convolution (fractionally strided). Weight layout
/// `[in, out, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<F> {
    pub spec: ConvSpec,
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Scalar> ConvTranspose2d<F> {
    pub fn new<R: Rng>(name: &str, spec: ConvSpec, init_std: f64, rng: &mut R) -> Self {
        let shape = vec![
            spec.in_channels,
            spec.out_channels,
            spec.kernel,
            spec.kernel,
        ];
        Self {
            spec,
            weight: Param::normal(format!("{name}.weight"), shape, 0.0, init_std, rng),
            bias: Param::constant(format!("{name}.bias"), vec![spec.out_channels], 0.0),
        }
    }

    /// The lowering of the forward convolution this layer is the adjoint of:
    /// output image (`out_h x out_w`) sampled on the input grid.
    fn lowering(&self, h: usize, w: usize) -> Result<Lowering> {
        let s = &self.spec;
        match (s.deconv_out(h), s.deconv_out(w)) {
            (Some(out_h), Some(out_w)) => Ok(Lowering {
                channels: s.out_channels,
                in_h: out_h,
                in_w: out_w,
                out_h: h,
                out_w: w,
                kernel: s.kernel,
                stride: s.stride,
                padding: s.padding,
                dilation: s.dilation,
            }),
            _ => Err(Error::shape(format!(
                "{h}x{w} input gives an empty transposed-convolution output"
            ))),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        check_input(x, self.spec.in_channels, "transposed conv")?;
        let low = self.lowering(x.height(), x.width())?;
        let (kk, hw, ic) = (low.rows(), low.cols(), self.spec.in_channels);
        let oc = self.spec.out_channels;
        let plane = low.in_h * low.in_w;
        let mut out = Tensor::zeros([x.batch(), oc, low.in_h, low.in_w]);
        let mut cols = vec![F::zero(); kk * hw];
        for b in 0..x.batch() {
            F::gemm(
                kk,
                ic,
                hw,
                F::one(),
                &self.weight.value,
                1,
                kk as isize,
                x.item(b),
                hw as isize,
                1,
                F::zero(),
                &mut cols,
                hw as isize,
                1,
            );
            let y = out.item_mut(b);
            for (o, chunk) in y.chunks_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.value[o]);
            }
            low.col2im(&cols, y);
        }
        Ok(out)
    }

    pub fn backward(
        &mut self,
        x: &Tensor<F>,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let low = self.lowering(x.height(), x.width())?;
        let (kk, hw, ic) = (low.rows(), low.cols(), self.spec.in_channels);
        let oc = self.spec.out_channels;
        if grad_out.shape() != [x.batch(), oc, low.in_h, low.in_w] {
            return Err(Error::shape(
                "transposed conv output gradient has the wrong shape",
            ));
        }
        let plane = low.in_h * low.in_w;
        let mut grad_in = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let mut cols = vec![F::zero(); kk * hw];
        for b in 0..x.batch() {
            let dy = grad_out.item(b);
            for (o, chunk) in dy.chunks(plane).enumerate() {
                let s: F = chunk.iter().copied().sum();
                self.bias.grad[o] = self.bias.grad[o] + s;
            }
            low.im2col(dy, &mut cols);
            F::gemm(
                ic,
                hw,
                kk,
                F::one(),
                x.item(b),
                hw as isize,
                1,
                &cols,
                1,
                hw as isize,
                F::one(),
                &mut self.weight.grad,
                kk as isize,
                1,
            );
            if let Some(gi) = grad_in.as_mut() {
                F::gemm(
                    ic,
                    kk,
                    hw,
                    F::one(),
                    &self.weight.value,
                    kk as isize,
                    1,
                    &cols,
                    hw as isize,
                    1,
                    F::zero(),
                    gi.item_mut(b),
                    hw as isize,
                    1,
                );
            }
        }
        Ok(grad_in)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct definition of convolution, independent of the im2col path.
    fn naive_conv(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let s = conv.spec;
        let (oh, ow) = (
            s.conv_out(x.height()).unwrap(),
            s.conv_out(x.width()).unwrap(),
        );
        let mut out = Tensor::zeros([x.batch(), s.out_channels, oh, ow]);
        for b in 0..x.batch() {
            for o in 0..s.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.value[o];
                        for c in 0..s.in_channels {
                            for ki in 0..s.kernel {
                                for kj in 0..s.kernel {
                                    let iy = (oy * s.stride + ki * s.dilation) as isize
                                        - s.padding as isize;
                                    let ix = (ox * s.stride + kj * s.dilation) as isize
                                        - s.padding as isize;
                                    if iy < 0
                                        || ix < 0
                                        || iy >= x.height() as isize
                                        || ix >= x.width() as isize
                                    {
                                        continue;
                                    }
                                    let xv = x.data()[((b * s.in_channels + c) * x.height()
                                        + iy as usize)
                                        * x.width()
                                        + ix as usize];
                                    let wv = conv.weight.value
                                        [((o * s.in_channels + c) * s.kernel + ki) * s.kernel + kj];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out.data_mut()[((b * s.out_channels + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn spec(i: usize, o: usize, s: usize, p: usize, d: usize) -> ConvSpec {
        ConvSpec {
            in_channels: i,
            out_channels: o,
            kernel: 4,
            stride: s,
            padding: p,
            dilation: d,
        }
    }

    #[test]
    fn output_extent_arithmetic() {
        assert_eq!(spec(1, 1, 2, 1, 1).conv_out(512), Some(256));
        assert_eq!(spec(1, 1, 2, 3, 2).conv_out(256), Some(128));
        assert_eq!(spec(1, 1, 2, 3, 2).conv_out(2), Some(1));
        assert_eq!(spec(1, 1, 1, 1, 1).conv_out(2), Some(1));
        assert_eq!(spec(1, 1, 1, 1, 1).conv_out(1), None);
        assert_eq!(spec(1, 1, 2, 1, 1).deconv_out(1), Some(2));
        assert_eq!(spec(1, 1, 2, 1, 1).deconv_out(128), Some(256));
    }

    #[test]
    fn im2col_conv_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (st, pad, dil) in [(2, 1, 1), (2, 3, 2), (1, 1, 1)] {
            let conv = Conv2d::<f64>::new("c", spec(3, 5, st, pad, dil), 0.3, &mut rng);
            let x = random_tensor([2, 3, 9, 8], &mut rng);
            let got = conv.forward(&x).unwrap();
            let want = naive_conv(&x, &conv);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, deconv(y)> when both share a weight tensor and have no bias.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let conv = Conv2d::<f64>::new("c", spec(3, 4, 2, 1, 1), 0.5, &mut rng);
        let mut deconv = ConvTranspose2d::<f64>::new("d", spec(4, 3, 2, 1, 1), 0.5, &mut rng);
        // conv weight [out=4, in=3] equals deconv weight [in=4, out=3]
        deconv.weight.value = conv.weight.value.clone();
        let x = random_tensor([1, 3, 8, 8], &mut rng);
        let y = random_tensor([1, 4, 4, 4], &mut rng);
        let cx = conv.forward(&x).unwrap();
        let dy = deconv.forward(&y).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    fn check_layer_grads<L>(
        params: fn(&mut L) -> Vec<&mut Param<f64>>,
        layer: &mut L,
        x: &Tensor<f64>,
        fwd: fn(&L, &Tensor<f64>) -> Tensor<f64>,
        bwd: fn(&mut L, &Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
        rng: &mut ChaCha8Rng,
    ) {
        let out = fwd(layer, x);
        let probe = random_tensor(out.shape(), rng);
        let loss = |l: &L, x: &Tensor<f64>| -> f64 {
            fwd(l, x)
                .data()
                .iter()
                .zip(probe.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        for p in params(layer) {
            p.zero_grad();
        }
        let gx = bwd(layer, x, &probe);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(layer, &xp) - loss(layer, &xm)) / (2.0 * h);
            assert!((fd - gx.data()[i]).abs() < 1e-6, "input grad {i}");
        }
        let n_params = params(layer).len();
        for pi in 0..n_params {
            let len = params(layer)[pi].len();
            for i in 0..len {
                let analytic = params(layer)[pi].grad[i];
                let orig = params(layer)[pi].value[i];
                params(layer)[pi].value[i] = orig + h;
                let lp = loss(layer, x);
                params(layer)[pi].value[i] = orig - h;
                let lm = loss(layer, x);
                params(layer)[pi].value[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - analytic).abs() < 1e-6, "param {pi} element {i}");
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::new("c", spec(2, 3, 2, 3, 2), 0.5, &mut rng);
        let x = random_tensor([2, 2, 6, 6], &mut rng);
        check_layer_grads(
            |l: &mut Conv2d<f64>| vec![&mut l.weight, &mut l.bias],
            &mut conv,
            &x,
            |l, x| l.forward(x).unwrap(),
            |l, x, g| l.backward(x, g, true).unwrap().unwrap(),
            &mut rng,
        );
    }

    #[test]
    fn deconv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut deconv = ConvTranspose2d::<f64>::new("d", spec(3, 2, 2, 1, 1), 0.5, &mut rng);
        let x = random_tensor([2, 3, 3, 3], &mut rng);
        check_layer_grads(
            |l: &mut ConvTranspose2d<f64>| vec![&mut l.weight, &mut l.bias],
            &mut deconv,
            &x,
            |l, x| l.forward(x).unwrap(),
            |l, x, g| l.backward(x, g, true).unwrap().unwrap(),
            &mut rng,
        );
    }
}
