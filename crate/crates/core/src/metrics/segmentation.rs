use serde::{Deserialize, Serialize};

use crate::data::labels::{Class, LabelMap};
use crate::error::{Error, Result};

/// Pixel counts for one structure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionAreas {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionAreas {
    /// Ground-truth area.
    pub fn gt(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Predicted area.
    pub fn pm(&self) -> u64 {
        self.tp + self.fp
    }
}

pub fn confusion_areas(pm: &LabelMap, gt: &LabelMap, structure: Class) -> Result<ConfusionAreas> {
    if pm.height() != gt.height() || pm.width() != gt.width() {
        return Err(Error::shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pm.height(),
            pm.width(),
            gt.height(),
            gt.width()
        )));
    }
    let c = structure.id();
    let mut areas = ConfusionAreas::default();
    for (&p, &g) in pm.ids().iter().zip(gt.ids()) {
        match (p == c, g == c) {
            (true, true) => areas.tp += 1,
            (true, false) => areas.fp += 1,
            (false, true) => areas.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(areas)
}

/// `2TP / (2TP + FP + FN)`; 1 when both masks are empty.
pub fn dice(a: &ConfusionAreas) -> f64 {
    let denom = 2 * a.tp + a.fp + a.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * a.tp) as f64 / denom as f64
    }
}

/// `TP / (TP + FP + FN)`; 1 when both masks are empty.
pub fn jaccard(a: &ConfusionAreas) -> f64 {
    let denom = a.tp + a.fp + a.fn_;
    if denom == 0 {
        1.0
    } else {
        a.tp as f64 / denom as f64
    }
}

/// `FN / (TP + FN)`; 0 when the ground truth is empty.
pub fn fnr(a: &ConfusionAreas) -> f64 {
    if a.gt() == 0 {
        0.0
    } else {
        a.fn_ as f64 / a.gt() as f64
    }
}

/// `FP / (TP + FN)`: false-positive area relative to the ground-truth area,
/// so it can exceed 1. Undefined (`None`) for an empty ground truth.
pub fn fpr(a: &ConfusionAreas) -> Option<f64> {
    (a.gt() != 0).then(|| a.fp as f64 / a.gt() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureScores {
    pub structure: Class,
    pub dice: f64,
    pub jaccard: f64,
    pub fnr: f64,
    pub fpr: Option<f64>,
}

impl StructureScores {
    pub fn from_areas(structure: Class, a: &ConfusionAreas) -> Self {
        Self {
            structure,
            dice: dice(a),
            jaccard: jaccard(a),
            fnr: fnr(a),
            fpr: fpr(a),
        }
    }
}

/// Scores for every organ class, in [`Class::ORGANS`] order.
pub fn segmentation_scores(pm: &LabelMap, gt: &LabelMap) -> Result<Vec<StructureScores>> {
    Class::ORGANS
        .iter()
        .map(|&c| Ok(StructureScores::from_areas(c, &confusion_areas(pm, gt, c)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ids: &[u8]) -> LabelMap {
        LabelMap::from_ids(1, ids.len(), ids.to_vec()).unwrap()
    }

    #[test]
    fn overlapping_pair_hand_counts() {
        let pm = row(&[3, 3, 0]);
        let gt = row(&[0, 3, 3]);
        let a = confusion_areas(&pm, &gt, Class::Heart).unwrap();
        assert_eq!(
            a,
            ConfusionAreas {
                tp: 1,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(dice(&a), 0.5);
        assert!((jaccard(&a) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(fnr(&a), 0.5);
        assert_eq!(fpr(&a), Some(0.5));
    }

    #[test]
    fn identical_masks_score_perfectly() {
        let m = row(&[1, 2, 3, 0, 1]);
        for s in segmentation_scores(&m, &m).unwrap() {
            assert_eq!(
                (s.dice, s.jaccard, s.fnr, s.fpr),
                (1.0, 1.0, 0.0, Some(0.0))
            );
        }
    }

    #[test]
    fn empty_ground_truth_conventions() {
        let gt = row(&[0; 6]);
        let pm = row(&[1, 1, 1, 1, 1, 0]);
        let a = confusion_areas(&pm, &gt, Class::LeftLung).unwrap();
        assert_eq!(
            a,
            ConfusionAreas {
                tp: 0,
                fp: 5,
                fn_: 0
            }
        );
        assert_eq!(
            (dice(&a), jaccard(&a), fnr(&a), fpr(&a)),
            (0.0, 0.0, 0.0, None)
        );
        let none = confusion_areas(&gt, &gt, Class::Heart).unwrap();
        assert_eq!(
            (dice(&none), jaccard(&none), fnr(&none), fpr(&none)),
            (1.0, 1.0, 0.0, None)
        );
    }

    #[test]
    fn disjoint_masks() {
        let a =
            confusion_areas(&row(&[2, 2, 0, 0]), &row(&[0, 0, 2, 2]), Class::RightLung).unwrap();
        assert_eq!((dice(&a), jaccard(&a), fnr(&a)), (0.0, 0.0, 1.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            confusion_areas(&row(&[0]), &row(&[0, 0]), Class::Heart),
            Err(Error::Shape(_))
        ));
    }
}
