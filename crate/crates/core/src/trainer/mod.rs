//! Adversarial training loop, checkpoints and inference.

mod checkpoint;
mod objective;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CheckpointMeta, MAGIC,
};
pub use objective::{batch_tensors, discriminator_objective, generator_objective, l1_distance};

use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::image::{stack, unstack, Image};
use crate::data::manifest::PairedSample;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, DEFAULT_EPS, DEFAULT_LAMBDA};
use crate::models::{Discriminator, Generator, SchemeConfig, Task};
use crate::optim::{Adam, AdamConfig};

const DROPOUT_STREAM: u64 = 3;
const SHUFFLE_STREAM_BASE: u64 = 1 << 32;

pub const LOSS_LOG_HEADER: [&str; 5] = ["step", "epoch", "loss_gan", "loss_l1", "loss_disc"];
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LOSS_LOG: &str = "loss_log.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: SchemeConfig,
    pub lambda: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Training stops after the first epoch whose mean L1 term is at most
    /// this value.
    pub stop_l1: f64,
    pub eps: f64,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(scheme: SchemeConfig, max_epochs: usize, seed: u64) -> Self {
        Self {
            scheme,
            lambda: DEFAULT_LAMBDA,
            lr: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 1,
            max_epochs,
            stop_l1: 0.005,
            eps: DEFAULT_EPS,
            seed,
            checkpoint_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lr) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if !positive(self.stop_l1) {
            return Err(Error::config(format!(
                "stop_l1 must be > 0, got {}",
                self.stop_l1
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !positive(self.eps) {
            return Err(Error::config(format!("eps must be > 0, got {}", self.eps)));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("Adam beta {b} outside [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
        }
    }
}

/// Raw loss values of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub step: u64,
    pub epoch: usize,
    pub loss_gan: f64,
    pub loss_l1: f64,
    pub loss_disc: f64,
}

pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub gen_opt: Adam<f32>,
    pub disc_opt: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub steps_in_epoch: u64,
    pub log: Vec<LossEntry>,
    dropout_rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.scheme, config.seed)?;
        let discriminator = Discriminator::new(config.scheme, config.seed)?;
        let gen_opt = Adam::new(config.adam(), &generator.params());
        let disc_opt = Adam::new(config.adam(), &discriminator.params());
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
        dropout_rng.set_stream(DROPOUT_STREAM);
        Ok(Self {
            config,
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            epoch: 0,
            step: 0,
            steps_in_epoch: 0,
            log: Vec::new(),
            dropout_rng,
        })
    }

    /// Restores weights and optimizer moments from a checkpoint. The loss
    /// log starts empty.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let mut state = Self::new(ckpt.config)?;
        state.generator = ckpt.generator;
        state.discriminator = ckpt.discriminator;
        state.gen_opt = ckpt.gen_opt;
        state.disc_opt = ckpt.disc_opt;
        state.epoch = ckpt.meta.epoch;
        state.step = ckpt.meta.step;
        Ok(state)
    }

    pub fn checkpoint(&self, split_fingerprint: &str) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            meta: CheckpointMeta {
                epoch: self.epoch,
                step: self.step,
                split_fingerprint: split_fingerprint.to_string(),
            },
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            gen_opt: self.gen_opt.clone(),
            disc_opt: self.disc_opt.clone(),
        }
    }
}

/// One adversarial step: generator pass, discriminator update on the real
/// and (detached) fake pair, then a generator update scored by the updated
/// discriminator.
pub fn train_step(state: &mut TrainState, batch: &[&PairedSample]) -> Result<LossEntry> {
    let (x, y) = batch_tensors::<f32>(&state.config.scheme, batch)?;

    let (loss_disc, g) = match objectives(state, &x, &y) {
        Ok(v) => v,
        Err(e @ Error::Numeric(_)) => {
            dump_diagnostics(state, &e.to_string(), None);
            return Err(e);
        }
        Err(e) => return Err(e),
    };

    state.step += 1;
    state.steps_in_epoch += 1;
    let entry = LossEntry {
        step: state.step,
        epoch: state.epoch + 1,
        loss_gan: g.gan_term,
        loss_l1: g.l1_term,
        loss_disc,
    };
    if ![entry.loss_gan, entry.loss_l1, entry.loss_disc]
        .iter()
        .all(|v| v.is_finite())
    {
        let e = Error::Numeric(format!(
            "non-finite loss at step {} (gan {}, l1 {}, disc {})",
            entry.step, entry.loss_gan, entry.loss_l1, entry.loss_disc
        ));
        dump_diagnostics(state, &e.to_string(), Some(&entry));
        return Err(e);
    }
    state.log.push(entry);
    Ok(entry)
}

/// One discriminator update followed by one generator update. Returns the
/// discriminator loss and the generator loss terms.
fn objectives(
    state: &mut TrainState,
    x: &Tensor<f32>,
    y: &Tensor<f32>,
) -> Result<(f64, LossBreakdown)> {
    let cfg = &state.config;
    let trace = state.generator.forward(x, Some(&mut state.dropout_rng))?;

    state.discriminator.zero_grad();
    let loss_disc =
        discriminator_objective(&mut state.discriminator, x, y, trace.output(), cfg.eps)?;
    state.disc_opt.update(state.discriminator.params_mut());

    state.generator.zero_grad();
    let g = generator_objective(
        &mut state.generator,
        &mut state.discriminator,
        &trace,
        x,
        y,
        cfg.lambda,
        cfg.eps,
    )?;
    state.discriminator.zero_grad();
    state.gen_opt.update(state.generator.params_mut());
    Ok((loss_disc, g))
}

fn dump_diagnostics(state: &TrainState, reason: &str, entry: Option<&LossEntry>) {
    let Some(dir) = &state.config.checkpoint_dir else {
        return;
    };
    let non_finite: Vec<&str> = state
        .generator
        .params()
        .into_iter()
        .chain(state.discriminator.params())
        .filter(|p| p.value.iter().any(|v| !v.is_finite()))
        .map(|p| p.name.as_str())
        .collect();
    let dump = serde_json::json!({
        "reason": reason,
        "step": entry.map_or(state.step + 1, |e| e.step),
        "epoch": state.epoch + 1,
        "loss": entry,
        "non_finite_params": non_finite,
        "recent": &state.log[state.log.len().saturating_sub(20)..],
    });
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join("diagnostics.json"), dump.to_string());
}

/// Summary of one finished epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_gan: f64,
    pub mean_l1: f64,
    pub mean_disc: f64,
    pub val_l1: Option<f64>,
}

pub struct TrainOutcome {
    pub state: TrainState,
    /// Generator of the epoch with the lowest validation L1 (training L1
    /// when no validation samples are given).
    pub best_generator: Generator<f32>,
    pub best_epoch: usize,
    pub epochs: Vec<EpochSummary>,
    pub stopped_early: bool,
    pub split_fingerprint: String,
}

/// SHA-256 over the sorted training and validation ids.
pub fn split_fingerprint(train: &[PairedSample], val: &[PairedSample]) -> String {
    let mut h = Sha256::new();
    for (tag, set) in [("train", train), ("val", val)] {
        let mut ids: Vec<&str> = set.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        h.update(format!("[{tag}]\n"));
        for id in ids {
            h.update(id);
            h.update("\n");
        }
    }
    hex::encode(h.finalize())
}

/// Mean L1 of deterministic predictions over `samples`.
pub fn validation_l1(g: &Generator<f32>, samples: &[PairedSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let (x, y) = batch_tensors::<f32>(g.config(), &[s])?;
        total += l1_distance(&y, &g.predict(&x)?)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

pub fn train(
    cfg: &TrainConfig,
    train: &[PairedSample],
    val: &[PairedSample],
) -> Result<TrainOutcome> {
    train_with_progress(cfg, train, val, |_| {})
}

/// Runs epochs until the epoch-mean L1 term reaches `stop_l1` or
/// `max_epochs` pass. With a checkpoint directory, writes the best and
/// final checkpoints and the loss log there.
pub fn train_with_progress(
    cfg: &TrainConfig,
    train: &[PairedSample],
    val: &[PairedSample],
    mut progress: impl FnMut(&EpochSummary),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let mut state = TrainState::new(cfg.clone())?;
    let fingerprint = split_fingerprint(train, val);
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut best_generator = state.generator.clone();
    let mut best_epoch = 0;
    let mut best_score = f64::INFINITY;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SHUFFLE_STREAM_BASE + epoch as u64);
        order.shuffle(&mut rng);

        state.steps_in_epoch = 0;
        let (mut gan, mut l1, mut disc) = (0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PairedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let e = train_step(&mut state, &batch)?;
            gan += e.loss_gan;
            l1 += e.loss_l1;
            disc += e.loss_disc;
            steps += 1;
        }
        state.epoch += 1;
        state.steps_in_epoch = 0;

        let n = steps as f64;
        let val_l1 = if val.is_empty() {
            None
        } else {
            Some(validation_l1(&state.generator, val)?)
        };
        let summary = EpochSummary {
            epoch: state.epoch,
            mean_gan: gan / n,
            mean_l1: l1 / n,
            mean_disc: disc / n,
            val_l1,
        };
        let score = val_l1.unwrap_or(summary.mean_l1);
        if score < best_score {
            best_score = score;
            best_epoch = state.epoch;
            best_generator = state.generator.clone();
            if let Some(dir) = &cfg.checkpoint_dir {
                save_checkpoint(&state.checkpoint(&fingerprint), dir.join(BEST_CHECKPOINT))?;
            }
        }
        progress(&summary);
        epochs.push(summary);
        if summary.mean_l1 <= cfg.stop_l1 {
            stopped_early = true;
            break;
        }
    }

    if let Some(dir) = &cfg.checkpoint_dir {
        save_checkpoint(&state.checkpoint(&fingerprint), dir.join(FINAL_CHECKPOINT))?;
        write_loss_log(&state.log, dir.join(LOSS_LOG))?;
    }
    Ok(TrainOutcome {
        state,
        best_generator,
        best_epoch,
        epochs,
        stopped_early,
        split_fingerprint: fingerprint,
    })
}

pub fn write_loss_log(log: &[LossEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path.as_ref())?;
    w.write_record(LOSS_LOG_HEADER)?;
    for e in log {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<LossEntry>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Trailing moving average of each loss column over `window` steps.
pub fn smooth_loss_log(log: &[LossEntry], window: usize) -> Vec<LossEntry> {
    let window = window.max(1);
    let mut sums = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(log.len());
    for (i, e) in log.iter().enumerate() {
        sums.0 += e.loss_gan;
        sums.1 += e.loss_l1;
        sums.2 += e.loss_disc;
        if i >= window {
            let old = &log[i - window];
            sums.0 -= old.loss_gan;
            sums.1 -= old.loss_l1;
            sums.2 -= old.loss_disc;
        }
        let n = (i + 1).min(window) as f64;
        out.push(LossEntry {
            loss_gan: sums.0 / n,
            loss_l1: sums.1 / n,
            loss_disc: sums.2 / n,
            ..*e
        });
    }
    out
}

/// One generated output image.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutput {
    pub task: Task,
    pub image: Image,
}

impl TaskOutput {
    /// 8-bit rendering: RGB for masks, grayscale for suppressed images.
    pub fn to_dynamic(&self) -> DynamicImage {
        match self.task {
            Task::Segmentation => DynamicImage::ImageRgb8(self.image.to_rgb8()),
            Task::BoneSuppression => DynamicImage::ImageLuma8(self.image.to_gray8()),
        }
    }
}

/// Deterministic generator outputs for one input, one per task.
pub fn infer_with(g: &Generator<f32>, x: &Image) -> Result<Vec<TaskOutput>> {
    let input: Tensor<f32> = stack(&[x])?;
    let out = g.predict(&input)?;
    Ok(g.config()
        .tasks()
        .iter()
        .zip(unstack(&out, 0))
        .map(|(&task, image)| TaskOutput { task, image })
        .collect())
}

pub fn infer(ckpt: &Checkpoint, x: &Image) -> Result<Vec<TaskOutput>> {
    infer_with(&ckpt.generator, x)
}

/// Writes the outputs of [`infer`] as `<stem>_<task>.png`.
pub fn write_outputs(
    outputs: &[TaskOutput],
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outputs
        .iter()
        .map(|o| {
            let path = dir.join(format!("{stem}_{}.png", o.task.name()));
            o.to_dynamic().save(&path).map_err(|e| Error::Decode {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            Ok(path)
        })
        .collect()
}
