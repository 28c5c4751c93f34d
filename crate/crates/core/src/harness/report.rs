//! Report structures and the files written for them.
//!
//! ```text
//! out/report.json                 every raw record
//! out/summary.json                statistics, p-values, counts, wall clock
//! out/boxplots/<metric>.json      box-plot data per scheme
//! out/ablation.csv, ablation.md   scheme comparison table
//! out/<scheme>/fold<i>/metrics.csv, metrics_bone.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::folds::FoldSplit;
use crate::error::{Error, Result};
use crate::harness::RunSpec;
use crate::metrics::{
    paired_ttest, summary_stats, two_sample_ttest, MetricsRecord, SummaryStats, TTest,
};
use crate::models::{Scheme, Task};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BOXPLOT_DIR: &str = "boxplots";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    /// Augmented training samples.
    pub train_samples: usize,
    /// Epochs run before stopping.
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub final_train_l1: f64,
    pub split_fingerprint: String,
    /// Held-out originals scored with the selected checkpoint.
    pub records: Vec<MetricsRecord>,
    /// The same samples scored with the untrained generator.
    pub baseline: Vec<MetricsRecord>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub parameters: usize,
    pub folds: Vec<FoldResult>,
}

impl SchemeReport {
    /// Records of all folds, sorted by sample id.
    pub fn pooled(&self) -> Vec<&MetricsRecord> {
        let mut all: Vec<&MetricsRecord> = self.folds.iter().flat_map(|f| &f.records).collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }

    pub fn pooled_baseline(&self) -> Vec<&MetricsRecord> {
        let mut all: Vec<&MetricsRecord> = self.folds.iter().flat_map(|f| &f.baseline).collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub spec: RunSpec,
    pub split: FoldSplit,
    pub schemes: Vec<SchemeReport>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub tasks: Vec<Task>,
    pub parameters: usize,
    pub samples: usize,
    pub epochs: Vec<usize>,
    pub min_epochs: usize,
    pub metrics: BTreeMap<String, SummaryStats>,
    pub baseline: BTreeMap<String, SummaryStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PValueEntry {
    pub metric: String,
    pub a: Scheme,
    pub b: Scheme,
    pub n: usize,
    pub paired: TTest,
    pub two_sample: TTest,
}

/// Everything that depends on timing lives here so that summaries of
/// identical runs differ only in this field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub total_seconds: f64,
    pub fold_seconds: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub folds: usize,
    pub split_fingerprint: String,
    pub schemes: Vec<SchemeSummary>,
    pub pvalues: Vec<PValueEntry>,
    pub wall_clock: WallClock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotGroup {
    pub scheme: Scheme,
    pub stats: SummaryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotFile {
    pub metric: String,
    pub groups: Vec<BoxplotGroup>,
}

/// Per-metric `(id, value)` lists. Keys: `dice.<structure>`,
/// `jaccard.<structure>`, `fnr.<structure>`, `fpr.<structure>`,
/// `dice.mean`, `jaccard.mean`, `rmse`, `mssim`. Undefined values (FPR on
/// an empty ground truth) are skipped.
pub fn metric_values(records: &[&MetricsRecord]) -> BTreeMap<String, Vec<(String, f64)>> {
    let mut out: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut push =
        |key: String, id: &str, v: f64| out.entry(key).or_default().push((id.to_string(), v));
    for r in records {
        for s in &r.structures {
            let name = s.structure.name();
            push(format!("dice.{name}"), &r.id, s.dice);
            push(format!("jaccard.{name}"), &r.id, s.jaccard);
            push(format!("fnr.{name}"), &r.id, s.fnr);
            if let Some(f) = s.fpr {
                push(format!("fpr.{name}"), &r.id, f);
            }
        }
        if let Some(v) = r.mean_dice() {
            push("dice.mean".into(), &r.id, v);
        }
        if let Some(v) = r.mean_jaccard() {
            push("jaccard.mean".into(), &r.id, v);
        }
        if let Some(v) = r.rmse {
            push("rmse".into(), &r.id, v);
        }
        if let Some(v) = r.mssim {
            push("mssim".into(), &r.id, v);
        }
    }
    out
}

fn stats_of(records: &[&MetricsRecord]) -> Result<BTreeMap<String, SummaryStats>> {
    metric_values(records)
        .into_iter()
        .map(|(k, v)| {
            let values: Vec<f64> = v.into_iter().map(|(_, x)| x).collect();
            Ok((k, summary_stats(&values)?))
        })
        .collect()
}

/// Paired and two-sample tests for every scheme pair on every shared
/// metric. Pairing is by sample id.
pub fn pairwise_tests(report: &Report) -> Result<Vec<PValueEntry>> {
    let values: Vec<_> = report
        .schemes
        .iter()
        .map(|s| (s.scheme, metric_values(&s.pooled())))
        .collect();
    let mut out = Vec::new();
    for (i, (a, va)) in values.iter().enumerate() {
        for (b, vb) in &values[i + 1..] {
            for (metric, xs) in va {
                let Some(ys) = vb.get(metric) else {
                    continue;
                };
                let ys: BTreeMap<&str, f64> = ys.iter().map(|(id, v)| (id.as_str(), *v)).collect();
                let (pa, pb): (Vec<f64>, Vec<f64>) = xs
                    .iter()
                    .filter_map(|(id, x)| ys.get(id.as_str()).map(|y| (*x, *y)))
                    .unzip();
                if pa.len() < 2 {
                    continue;
                }
                out.push(PValueEntry {
                    metric: metric.clone(),
                    a: *a,
                    b: *b,
                    n: pa.len(),
                    paired: paired_ttest(&pa, &pb)?,
                    two_sample: two_sample_ttest(&pa, &pb)?,
                });
            }
        }
    }
    Ok(out)
}

/// Derives every statistic of a report from its raw records.
pub fn summarize(report: &Report) -> Result<Summary> {
    let mut schemes = Vec::with_capacity(report.schemes.len());
    let mut wall_clock = WallClock {
        total_seconds: report.total_seconds,
        fold_seconds: BTreeMap::new(),
    };
    for s in &report.schemes {
        let epochs: Vec<usize> = s.folds.iter().map(|f| f.epochs).collect();
        schemes.push(SchemeSummary {
            scheme: s.scheme,
            tasks: s.scheme.tasks().to_vec(),
            parameters: s.parameters,
            samples: s.pooled().len(),
            min_epochs: epochs.iter().copied().min().unwrap_or(0),
            epochs,
            metrics: stats_of(&s.pooled())?,
            baseline: stats_of(&s.pooled_baseline())?,
        });
        wall_clock.fold_seconds.insert(
            s.scheme.name().to_string(),
            s.folds.iter().map(|f| f.seconds).collect(),
        );
    }
    Ok(Summary {
        folds: report.split.k,
        split_fingerprint: report.split.fingerprint(),
        schemes,
        pvalues: pairwise_tests(report)?,
        wall_clock,
    })
}

/// Alias of [`summarize`] used when checking stored summaries.
pub fn recompute_summaries(report: &Report) -> Result<Summary> {
    summarize(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `metrics.csv` (segmentation) and `metrics_bone.csv`, each only when a
/// record carries those values.
pub fn write_fold_metrics(dir: &Path, records: &[MetricsRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if records.iter().any(|r| !r.structures.is_empty()) {
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        w.write_record(["id", "structure", "dice", "jaccard", "fnr", "fpr"])?;
        for r in records {
            for s in &r.structures {
                w.write_record([
                    r.id.clone(),
                    s.structure.name().to_string(),
                    s.dice.to_string(),
                    s.jaccard.to_string(),
                    s.fnr.to_string(),
                    opt(s.fpr),
                ])?;
            }
        }
        w.flush()
            .map_err(|e| Error::io(dir.join("metrics.csv"), e))?;
    }
    if records.iter().any(|r| r.rmse.is_some()) {
        let mut w = csv::Writer::from_path(dir.join("metrics_bone.csv"))?;
        w.write_record(["id", "rmse", "mssim"])?;
        for r in records {
            w.write_record([r.id.clone(), opt(r.rmse), opt(r.mssim)])?;
        }
        w.flush()
            .map_err(|e| Error::io(dir.join("metrics_bone.csv"), e))?;
    }
    Ok(())
}

const TABLE_METRICS: [(&str, &str); 9] = [
    ("segmentation", "dice.mean"),
    ("segmentation", "jaccard.mean"),
    ("segmentation", "dice.left-lung"),
    ("segmentation", "dice.right-lung"),
    ("segmentation", "dice.heart"),
    ("segmentation", "fnr.heart"),
    ("segmentation", "fpr.heart"),
    ("bone-suppression", "rmse"),
    ("bone-suppression", "mssim"),
];

fn table_rows(summary: &Summary) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (task, metric) in TABLE_METRICS {
        let mut row = vec![task.to_string(), metric.to_string()];
        for s in &summary.schemes {
            row.push(
                s.metrics
                    .get(metric)
                    .map(|st| format!("{:.4} ± {:.4}", st.mean, st.std))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        rows.push(row);
    }
    let mut params = vec!["properties".to_string(), "parameters".to_string()];
    let mut epochs = vec!["properties".to_string(), "min epochs".to_string()];
    for s in &summary.schemes {
        params.push(s.parameters.to_string());
        epochs.push(s.min_epochs.to_string());
    }
    rows.push(params);
    rows.push(epochs);
    rows
}

fn write_table(summary: &Summary, out: &Path) -> Result<()> {
    let mut header = vec!["task".to_string(), "metric".to_string()];
    header.extend(summary.schemes.iter().map(|s| s.scheme.name().to_string()));
    let rows = table_rows(summary);

    let mut w = csv::Writer::from_path(out.join("ablation.csv"))?;
    w.write_record(&header)?;
    for row in &rows {
        w.write_record(row)?;
    }
    w.flush()
        .map_err(|e| Error::io(out.join("ablation.csv"), e))?;

    let mut md = String::new();
    let _ = writeln!(md, "| {} |", header.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
    for row in &rows {
        let _ = writeln!(md, "| {} |", row.join(" | "));
    }
    let mut secs = vec!["properties".to_string(), "train time (s)".to_string()];
    for fold_secs in summary
        .schemes
        .iter()
        .map(|s| &summary.wall_clock.fold_seconds[s.scheme.name()])
    {
        secs.push(format!("{:.1}", fold_secs.iter().sum::<f64>()));
    }
    let _ = writeln!(md, "| {} |", secs.join(" | "));
    let path = out.join("ablation.md");
    fs::write(&path, md).map_err(|e| Error::io(&path, e))
}

/// Writes `report.json`, `summary.json`, the box-plot files and the
/// comparison table. Returns the summary.
pub fn write_report(report: &Report, out: impl AsRef<Path>) -> Result<Summary> {
    let out = out.as_ref();
    let boxplots = out.join(BOXPLOT_DIR);
    fs::create_dir_all(&boxplots).map_err(|e| Error::io(&boxplots, e))?;
    let summary = summarize(report)?;
    write_json(&out.join(REPORT_FILE), report)?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;

    let mut files: BTreeMap<&str, BoxplotFile> = BTreeMap::new();
    for s in &summary.schemes {
        for (metric, stats) in &s.metrics {
            files
                .entry(metric.as_str())
                .or_insert_with(|| BoxplotFile {
                    metric: metric.clone(),
                    groups: Vec::new(),
                })
                .groups
                .push(BoxplotGroup {
                    scheme: s.scheme,
                    stats: stats.clone(),
                });
        }
    }
    for (metric, file) in &files {
        write_json(&boxplots.join(format!("{metric}.json")), file)?;
    }
    write_table(&summary, out)?;
    Ok(summary)
}
