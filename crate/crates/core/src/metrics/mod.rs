//! Segmentation overlap scores, image similarity and summary statistics.

mod segmentation;
mod similarity;
mod stats;

pub use segmentation::{
    confusion_areas, dice, fnr, fpr, jaccard, segmentation_scores, ConfusionAreas, StructureScores,
};
pub use similarity::{
    mssim, rmse, ssim_from_moments, DYNAMIC_RANGE, SSIM_C1, SSIM_C2, SSIM_WINDOW,
};
pub use stats::{paired_ttest, quantile, summary_stats, two_sample_ttest, SummaryStats, TTest};

use serde::{Deserialize, Serialize};

/// Per-sample scores. Segmentation fields are empty and image fields
/// `None` for schemes that lack the corresponding task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub id: String,
    pub subject: String,
    pub fold: usize,
    pub structures: Vec<StructureScores>,
    pub rmse: Option<f64>,
    pub mssim: Option<f64>,
}

impl MetricsRecord {
    /// Dice averaged over the scored structures.
    pub fn mean_dice(&self) -> Option<f64> {
        mean(self.structures.iter().map(|s| s.dice))
    }

    pub fn mean_jaccard(&self) -> Option<f64> {
        mean(self.structures.iter().map(|s| s.jaccard))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
