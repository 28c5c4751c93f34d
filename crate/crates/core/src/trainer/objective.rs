//! Loss evaluation with gradient accumulation, shared by the training step
//! and by gradient checks.

use crate::data::image::stack;
use crate::data::manifest::PairedSample;
use crate::engine::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::losses::{discriminator_loss_with_grad, generator_loss_with_grad, LossBreakdown};
use crate::models::{Discriminator, Generator, GeneratorTrace, SchemeConfig, Task};

/// Input batch `X` and the target batch `Y` holding one 3-channel block per
/// task of the scheme, in task order.
pub fn batch_tensors<F: Scalar>(
    cfg: &SchemeConfig,
    samples: &[&PairedSample],
) -> Result<(Tensor<F>, Tensor<F>)> {
    if samples.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let n = cfg.image_size;
    if let Some(s) = samples.iter().find(|s| s.size() != (n, n)) {
        return Err(Error::shape(format!(
            "sample {} is {:?}, scheme expects {n}x{n}",
            s.id,
            s.size()
        )));
    }
    let x = stack(&samples.iter().map(|s| &s.x).collect::<Vec<_>>())?;
    let mut y: Option<Tensor<F>> = None;
    for task in cfg.tasks() {
        let block = stack(
            &samples
                .iter()
                .map(|s| match task {
                    Task::Segmentation => &s.y1,
                    Task::BoneSuppression => &s.y2,
                })
                .collect::<Vec<_>>(),
        )?;
        y = Some(match y {
            None => block,
            Some(prev) => Tensor::concat_channels(&prev, &block)?,
        });
    }
    Ok((x, y.expect("every scheme has a task")))
}

/// Discriminator loss on the real pair `x || y` and the fake pair
/// `x || yhat`, with `yhat` held constant. Accumulates discriminator
/// gradients only.
pub fn discriminator_objective<F: Scalar>(
    d: &mut Discriminator<F>,
    x: &Tensor<F>,
    y: &Tensor<F>,
    yhat: &Tensor<F>,
    eps: f64,
) -> Result<f64> {
    let real = d.forward(x, y)?;
    let fake = d.forward(x, yhat)?;
    let grads = discriminator_loss_with_grad(real.patch_map(), fake.patch_map(), eps)?;
    d.backward(&real, &grads.grad_dr, false)?;
    d.backward(&fake, &grads.grad_df, false)?;
    Ok(grads.loss)
}

/// Generator loss for a recorded generator pass. Accumulates gradients
/// into the generator and, as a by-product, into the discriminator (the
/// latter are the derivatives of the generator loss and are normally
/// discarded).
pub fn generator_objective<F: Scalar>(
    g: &mut Generator<F>,
    d: &mut Discriminator<F>,
    trace: &GeneratorTrace<F>,
    x: &Tensor<F>,
    y: &Tensor<F>,
    lambda: f64,
    eps: f64,
) -> Result<LossBreakdown> {
    let yhat = trace.output();
    let fake = d.forward(x, yhat)?;
    let grads = generator_loss_with_grad(fake.patch_map(), y, yhat, lambda, eps)?;
    let grad_pair = d
        .backward(&fake, &grads.grad_df, true)?
        .expect("input gradient was requested");
    let (_, grad_through_d) = grad_pair.split_channels(x.channels());
    let mut grad_yhat = grads.grad_yhat;
    grad_yhat.add_assign(&grad_through_d);
    g.backward(trace, &grad_yhat)?;
    Ok(grads.loss)
}

/// Mean absolute error between prediction and target over all elements.
pub fn l1_distance<F: Scalar>(y: &Tensor<F>, yhat: &Tensor<F>) -> Result<f64> {
    if y.shape() != yhat.shape() {
        return Err(Error::shape("L1 operands differ in shape"));
    }
    let sum: f64 = y
        .data()
        .iter()
        .zip(yhat.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
        .sum();
    Ok(sum / y.len().max(1) as f64)
}
