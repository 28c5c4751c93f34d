//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use image::imageops::FilterType;

use crate::data::augment::augment_dataset;
use crate::data::image::Image;
use crate::data::manifest::{load_all, load_manifest};
use crate::error::{Error, Result};
use crate::harness::{
    evaluate, make_toy_dataset, prepare_dataset, read_report, run_ablation, run_cross_validation,
    summarize, write_report, RunSpec, REPORT_FILE,
};
use crate::metrics::summary_stats;
use crate::models::{Scheme, SchemeConfig};
use crate::trainer::{infer, load_checkpoint, train_with_progress, write_outputs, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pix2pix-mt",
    version,
    about = "Multitask pix2pix: one input image to a segmentation mask and a bone-suppressed image",
    after_help = "Exit codes: 0 success, 1 usage error, 2 runtime error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (ellipse organs with rib stripes).
    MakeToy(MakeToyArgs),
    /// Resize and five-way augment a dataset into a new dataset directory.
    Prepare(PrepareArgs),
    /// Train one scheme on a whole dataset.
    Train(RunArgs),
    /// Run a checkpoint on one image and write one PNG per task.
    Infer(InferArgs),
    /// Score a checkpoint on every image of a dataset.
    Evaluate(EvaluateArgs),
    /// Subject-level k-fold cross-validation.
    Cv(RunArgs),
    /// Cross-validation of several schemes on one split (all six by default).
    Ablate(RunArgs),
    /// Rebuild summary, box-plot and table files from a report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct MakeToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of subjects (one image each).
    #[arg(long, default_value_t = 8)]
    pub subjects: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
}

/// Flags shared by `train`, `cv` and `ablate`. Unset flags fall back to the
/// config file, then to the listed defaults.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset root.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scheme(s): st-seg, st-bone, st-seg-d, st-bone-d, mt, mtdg [default: mtdg].
    #[arg(long, value_delimiter = ',')]
    pub scheme: Vec<Scheme>,
    /// Image side length, a multiple of 16 [default: 512].
    #[arg(long)]
    pub size: Option<usize>,
    /// Number of subject folds [default: 5].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Weight of the L1 term [default: 10].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Adam learning rate [default: 0.0002].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum number of epochs [default: 300].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop once an epoch's mean L1 term is at most this [default: 0.005].
    #[arg(long = "stop-l1")]
    pub stop_l1: Option<f64>,
    /// Base channel width of both networks [default: 64].
    #[arg(long = "base-width")]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip the prediction triptych PNGs.
    #[arg(long = "no-predictions")]
    pub no_predictions: bool,
    /// Print per-epoch losses to standard error.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Grayscale (or RGB, converted to luma) PNG.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report.json.
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn to_spec(&self) -> Result<RunSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RunSpec::from_toml(&text)?
            }
            None => RunSpec::default(),
        };
        if let Some(v) = &self.data {
            spec.data = v.clone();
        }
        if let Some(v) = &self.out {
            spec.out = v.clone();
        }
        if !self.scheme.is_empty() {
            spec.schemes = self.scheme.clone();
        }
        if let Some(v) = self.size {
            spec.image_size = v;
        }
        if let Some(v) = self.folds {
            spec.folds = v;
        }
        if let Some(v) = self.base_width {
            spec.base_width = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        let t = &mut spec.train;
        t.lambda = self.lambda.or(t.lambda);
        t.lr = self.lr.or(t.lr);
        t.max_epochs = self.epochs.or(t.max_epochs);
        t.stop_l1 = self.stop_l1.or(t.stop_l1);
        if self.no_predictions {
            spec.predictions = false;
        }
        spec.verbose |= self.verbose;
        Ok(spec)
    }
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let spec = args.to_spec()?;
    let [scheme] = spec.schemes[..] else {
        return Err(Error::config("train takes exactly one --scheme"));
    };
    let mut cfg: TrainConfig = spec.train_config(scheme, 0);
    cfg.checkpoint_dir = Some(spec.out.clone());
    let index = load_manifest(&spec.data)?;
    let originals = load_all(&index, spec.image_size)?;
    let train = augment_dataset(&originals)?;
    let verbose = spec.verbose;
    let outcome = train_with_progress(&cfg, &train, &originals, |e| {
        if verbose {
            eprintln!(
                "epoch {}: gan {:.4} l1 {:.4} disc {:.4}",
                e.epoch, e.mean_gan, e.mean_l1, e.mean_disc
            );
        }
    })?;
    println!(
        "trained {scheme} for {} epochs (best epoch {}), checkpoints in {}",
        outcome.epochs.len(),
        outcome.best_epoch,
        spec.out.display()
    );
    Ok(())
}

fn read_input(path: &Path, cfg: &SchemeConfig) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_luma8();
    let n = cfg.image_size as u32;
    let img = if img.dimensions() == (n, n) {
        img
    } else {
        image::imageops::resize(&img, n, n, FilterType::Triangle)
    };
    Ok(Image::from_gray(&img))
}

fn cmd_infer(args: &InferArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let x = read_input(&args.input, &ckpt.config.scheme)?;
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("output");
    for path in write_outputs(&infer(&ckpt, &x)?, &args.out, stem)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let index = load_manifest(&args.data)?;
    let samples = load_all(&index, ckpt.config.scheme.image_size)?;
    let records: Vec<_> = evaluate(&ckpt.generator, &samples, 0)?
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    crate::harness::write_fold_metrics(&args.out, &records)?;
    let refs: Vec<_> = records.iter().collect();
    let mut stats = std::collections::BTreeMap::new();
    for (metric, values) in crate::harness::metric_values(&refs) {
        let v: Vec<f64> = values.into_iter().map(|(_, x)| x).collect();
        stats.insert(metric, summary_stats(&v)?);
    }
    let path = args.out.join("evaluation.json");
    fs::write(&path, serde_json::to_string_pretty(&stats)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    println!(
        "scored {} images, results in {}",
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let report = read_report(args.out.join(REPORT_FILE))?;
    let summary = write_report(&report, &args.out)?;
    print_summary(&summary);
    Ok(())
}

fn print_summary(summary: &crate::harness::Summary) {
    for s in &summary.schemes {
        let get = |k: &str| {
            s.metrics
                .get(k)
                .map(|st| format!("{:.4}", st.mean))
                .unwrap_or("-".into())
        };
        println!(
            "{:<10} params {:>11}  dice {}  jaccard {}  rmse {}  mssim {}",
            s.scheme.name(),
            s.parameters,
            get("dice.mean"),
            get("jaccard.mean"),
            get("rmse"),
            get("mssim")
        );
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::MakeToy(a) => {
            let index = make_toy_dataset(a.subjects, a.size, a.seed, &a.out)?;
            println!("wrote {} samples to {}", index.len(), a.out.display());
        }
        Command::Prepare(a) => {
            let n = prepare_dataset(&a.data, a.size, &a.out)?;
            println!("wrote {n} samples to {}", a.out.display());
        }
        Command::Train(a) => cmd_train(a)?,
        Command::Infer(a) => cmd_infer(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Cv(a) => {
            let report = run_cross_validation(&a.to_spec()?)?;
            print_summary(&summarize(&report)?);
        }
        Command::Ablate(a) => {
            let mut spec = a.to_spec()?;
            if a.scheme.is_empty() && a.config.is_none() {
                spec.schemes.clear();
            }
            let report = run_ablation(&spec)?;
            print_summary(&summarize(&report)?);
        }
        Command::Report(a) => cmd_report(a)?,
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
