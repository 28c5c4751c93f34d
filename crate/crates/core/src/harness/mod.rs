//! Cross-validation and ablation runs over a dataset directory, the
//! synthetic toy dataset, and report emission.

mod report;
mod toy;

pub use report::{
    metric_values, pairwise_tests, read_report, recompute_summaries, summarize, write_fold_metrics,
    write_report, BoxplotFile, BoxplotGroup, FoldResult, PValueEntry, Report, SchemeReport,
    SchemeSummary, Summary, WallClock, BOXPLOT_DIR, REPORT_FILE, SUMMARY_FILE,
};
pub use toy::{
    make_toy_dataset, toy_samples, toy_subject, ToySubject, MIN_TOY_SIZE, MIN_TOY_SUBJECTS,
};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::data::augment::augment_dataset;
use crate::data::folds::{subject_kfold, FoldSplit};
use crate::data::labels::decode_mask;
use crate::data::manifest::{load_all, load_manifest, PairedSample};
use crate::error::{Error, Result};
use crate::metrics::{mssim, rmse, segmentation_scores, MetricsRecord};
use crate::models::{count_parameters_for, Generator, Scheme, SchemeConfig, Task};
use crate::trainer::{
    infer_with, read_loss_log, smooth_loss_log, train_with_progress, write_loss_log, TaskOutput,
    TrainConfig, LOSS_LOG,
};

/// Window of the moving average written to `loss_smoothed.csv`.
pub const SMOOTHING_WINDOW: usize = 100;

/// Optional overrides of the training defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub lambda: Option<f64>,
    pub lr: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub stop_l1: Option<f64>,
}

/// One cross-validation or ablation run. Deserializable from a TOML file
/// with the same keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub schemes: Vec<Scheme>,
    /// Number of folds; equal to the subject count for leave-one-subject-out.
    pub folds: usize,
    pub data: PathBuf,
    pub out: PathBuf,
    pub image_size: usize,
    pub base_width: usize,
    pub seed: u64,
    pub train: TrainOverrides,
    /// Write input | prediction | target triptychs for every test sample.
    pub predictions: bool,
    /// Print per-epoch progress to standard error.
    pub verbose: bool,
}

pub const DEFAULT_MAX_EPOCHS: usize = 300;

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Mtdg],
            folds: 5,
            data: PathBuf::from("data"),
            out: PathBuf::from("out"),
            image_size: 512,
            base_width: 64,
            seed: 0,
            train: TrainOverrides::default(),
            predictions: true,
            verbose: false,
        }
    }
}

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config("run needs at least one scheme"));
        }
        let unique: BTreeSet<_> = self.schemes.iter().collect();
        if unique.len() != self.schemes.len() {
            return Err(Error::config("schemes must not repeat"));
        }
        if self.folds < 2 {
            return Err(Error::config(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        for s in &self.schemes {
            self.train_config(*s, 0).validate()?;
        }
        Ok(())
    }

    pub fn scheme_config(&self, scheme: Scheme) -> SchemeConfig {
        SchemeConfig::new(scheme, self.image_size).with_base_width(self.base_width)
    }

    pub fn fold_dir(&self, scheme: Scheme, fold: usize) -> PathBuf {
        self.out.join(scheme.name()).join(format!("fold{fold}"))
    }

    pub fn train_config(&self, scheme: Scheme, fold: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.scheme_config(scheme), DEFAULT_MAX_EPOCHS, self.seed);
        let o = &self.train;
        cfg.lambda = o.lambda.unwrap_or(cfg.lambda);
        cfg.lr = o.lr.unwrap_or(cfg.lr);
        cfg.adam_beta1 = o.adam_beta1.unwrap_or(cfg.adam_beta1);
        cfg.adam_beta2 = o.adam_beta2.unwrap_or(cfg.adam_beta2);
        cfg.batch_size = o.batch_size.unwrap_or(cfg.batch_size);
        cfg.max_epochs = o.max_epochs.unwrap_or(cfg.max_epochs);
        cfg.stop_l1 = o.stop_l1.unwrap_or(cfg.stop_l1);
        cfg.checkpoint_dir = Some(self.fold_dir(scheme, fold));
        cfg
    }
}

/// Scores generator outputs against one sample.
pub fn score_outputs(
    sample: &PairedSample,
    outputs: &[TaskOutput],
    fold: usize,
) -> Result<MetricsRecord> {
    let mut record = MetricsRecord {
        id: sample.id.clone(),
        subject: sample.subject.clone(),
        fold,
        structures: Vec::new(),
        rmse: None,
        mssim: None,
    };
    for out in outputs {
        match out.task {
            Task::Segmentation => {
                let pm = decode_mask(&out.image.to_rgb8());
                record.structures = segmentation_scores(&pm, &sample.labels())?;
            }
            Task::BoneSuppression => {
                let (pred, target) = (out.image.to_gray8(), sample.y2.to_gray8());
                record.rmse = Some(rmse(&pred, &target)?);
                record.mssim = Some(mssim(&pred, &target)?);
            }
        }
    }
    Ok(record)
}

/// Runs the generator on each sample and scores the result.
pub fn evaluate(
    g: &Generator<f32>,
    samples: &[PairedSample],
    fold: usize,
) -> Result<Vec<(MetricsRecord, Vec<TaskOutput>)>> {
    samples
        .iter()
        .map(|s| {
            let outputs = infer_with(g, &s.x)?;
            Ok((score_outputs(s, &outputs, fold)?, outputs))
        })
        .collect()
}

/// `input | prediction | target` side by side.
pub fn triptych(sample: &PairedSample, output: &TaskOutput) -> RgbImage {
    let target = match output.task {
        Task::Segmentation => &sample.y1,
        Task::BoneSuppression => &sample.y2,
    };
    let panels = [sample.x.to_rgb8(), output.image.to_rgb8(), target.to_rgb8()];
    let (w, h) = panels[0].dimensions();
    let mut out = RgbImage::from_pixel(3 * w, h, Rgb([0, 0, 0]));
    for (k, panel) in panels.iter().enumerate() {
        image::imageops::replace(&mut out, panel, (k as u32 * w) as i64, 0);
    }
    out
}

fn check_leakage(train: &[PairedSample], test: &[PairedSample], fold: usize) -> Result<()> {
    let train_subjects: BTreeSet<&str> = train.iter().map(|s| s.subject.as_str()).collect();
    if let Some(s) = test
        .iter()
        .find(|s| train_subjects.contains(s.subject.as_str()))
    {
        return Err(Error::config(format!(
            "fold {fold}: subject {} appears in both training and test data",
            s.subject
        )));
    }
    if let Some(s) = test.iter().find(|s| !s.is_original()) {
        return Err(Error::config(format!(
            "fold {fold}: augmented sample {} in test data",
            s.id
        )));
    }
    Ok(())
}

fn run_fold(
    spec: &RunSpec,
    scheme: Scheme,
    split: &FoldSplit,
    fold: usize,
    originals: &[PairedSample],
) -> Result<FoldResult> {
    let started = Instant::now();
    let test_subjects: BTreeSet<&str> = split.test_subjects(fold).into_iter().collect();
    let (test, train_originals): (Vec<PairedSample>, Vec<PairedSample>) = originals
        .iter()
        .cloned()
        .partition(|s| test_subjects.contains(s.subject.as_str()));
    let train = augment_dataset(&train_originals)?;
    check_leakage(&train, &test, fold)?;

    let cfg = spec.train_config(scheme, fold);
    let dir = spec.fold_dir(scheme, fold);
    let outcome = train_with_progress(&cfg, &train, &train_originals, |e| {
        if spec.verbose {
            eprintln!(
                "{scheme} fold {fold} epoch {}: gan {:.4} l1 {:.4} disc {:.4} val-l1 {}",
                e.epoch,
                e.mean_gan,
                e.mean_l1,
                e.mean_disc,
                e.val_l1.map_or("-".to_string(), |v| format!("{v:.4}"))
            );
        }
    })?;
    let log = read_loss_log(dir.join(LOSS_LOG))?;
    write_loss_log(
        &smooth_loss_log(&log, SMOOTHING_WINDOW),
        dir.join("loss_smoothed.csv"),
    )?;

    let scored = evaluate(&outcome.best_generator, &test, fold)?;
    let untrained = Generator::<f32>::new(cfg.scheme, cfg.seed)?;
    let baseline = evaluate(&untrained, &test, fold)?;
    if spec.predictions {
        let preds = dir.join("preds");
        fs::create_dir_all(&preds).map_err(|e| Error::io(&preds, e))?;
        for (sample, (_, outputs)) in test.iter().zip(&scored) {
            for out in outputs {
                let path = preds.join(format!("{}_{}.png", sample.id, out.task.name()));
                triptych(sample, out)
                    .save(&path)
                    .map_err(|e| Error::Decode {
                        path: path.clone(),
                        reason: e.to_string(),
                    })?;
            }
        }
    }
    let records: Vec<MetricsRecord> = scored.into_iter().map(|(r, _)| r).collect();
    report::write_fold_metrics(&dir, &records)?;
    Ok(FoldResult {
        fold,
        train_subjects: split
            .train_subjects(fold)
            .iter()
            .map(|s| s.to_string())
            .collect(),
        test_subjects: test_subjects.iter().map(|s| s.to_string()).collect(),
        train_samples: train.len(),
        epochs: outcome.epochs.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        final_train_l1: outcome.epochs.last().map(|e| e.mean_l1).unwrap_or(f64::NAN),
        split_fingerprint: outcome.split_fingerprint,
        records,
        baseline: baseline.into_iter().map(|(r, _)| r).collect(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Trains and evaluates every scheme on every fold. All schemes share the
/// fold split derived from `spec.seed`.
pub fn run_cross_validation(spec: &RunSpec) -> Result<Report> {
    spec.validate()?;
    let started = Instant::now();
    let index = load_manifest(&spec.data)?;
    let originals = load_all(&index, spec.image_size)?;
    let split = subject_kfold(&index, spec.folds, spec.seed)?;
    let mut schemes = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let mut folds = Vec::with_capacity(spec.folds);
        for fold in 0..spec.folds {
            let result =
                run_fold(spec, scheme, &split, fold, &originals).map_err(|e| Error::Fold {
                    scheme: scheme.name().to_string(),
                    fold,
                    source: Box::new(e),
                })?;
            folds.push(result);
        }
        schemes.push(SchemeReport {
            scheme,
            parameters: count_parameters_for(&spec.scheme_config(scheme)),
            folds,
        });
    }
    let report = Report {
        spec: spec.clone(),
        split,
        schemes,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    write_report(&report, &spec.out)?;
    Ok(report)
}

/// Cross-validation over several schemes on one shared split; all six
/// schemes when `spec.schemes` is empty.
pub fn run_ablation(spec: &RunSpec) -> Result<Report> {
    let mut spec = spec.clone();
    if spec.schemes.is_empty() {
        spec.schemes = Scheme::ALL.to_vec();
    }
    run_cross_validation(&spec)
}

/// Loads a dataset at `size`, expands it with the five-way augmentation
/// and writes the result in the dataset layout.
pub fn prepare_dataset(data: &Path, size: usize, out: &Path) -> Result<usize> {
    let index = load_manifest(data)?;
    let augmented = augment_dataset(&load_all(&index, size)?)?;
    crate::data::manifest::write_dataset(out, &augmented)?;
    Ok(augmented.len())
}
