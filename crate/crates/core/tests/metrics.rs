use image::{GrayImage, Luma};
use proptest::prelude::*;

use pix2pix_mt::data::{Class, LabelMap};
use pix2pix_mt::metrics::{
    confusion_areas, dice, mssim, paired_ttest, rmse, segmentation_scores, summary_stats,
    two_sample_ttest,
};
use pix2pix_mt::Error;

fn labels(n: usize) -> impl Strategy<Value = LabelMap> {
    prop::collection::vec(0u8..4, n * n).prop_map(move |ids| LabelMap::from_ids(n, n, ids).unwrap())
}

fn gray(n: u32) -> impl Strategy<Value = GrayImage> {
    prop::collection::vec(any::<u8>(), (n * n) as usize)
        .prop_map(move |px| GrayImage::from_raw(n, n, px).unwrap())
}

#[test]
fn perfect_prediction_scores() {
    let mut gt = LabelMap::filled(8, 8, Class::Background);
    gt.set(1, 1, Class::LeftLung);
    gt.set(2, 5, Class::RightLung);
    gt.set(6, 3, Class::Heart);
    for s in segmentation_scores(&gt, &gt).unwrap() {
        assert_eq!((s.dice, s.jaccard, s.fnr, s.fpr), (1.0, 1.0, 0.0, Some(0.0)));
    }
}

#[test]
fn disjoint_prediction_scores() {
    let gt = LabelMap::filled(4, 4, Class::Heart);
    let pm = LabelMap::filled(4, 4, Class::Background);
    let a = confusion_areas(&pm, &gt, Class::Heart).unwrap();
    assert_eq!((a.tp, a.fp, a.fn_), (0, 0, 16));
    assert_eq!(dice(&a), 0.0);
    let heart = &segmentation_scores(&pm, &gt).unwrap()[2];
    assert_eq!((heart.fnr, heart.fpr), (1.0, Some(0.0)));
}

#[test]
fn shape_mismatch_is_rejected() {
    let a = LabelMap::filled(4, 4, Class::Heart);
    let b = LabelMap::filled(4, 5, Class::Heart);
    assert!(matches!(segmentation_scores(&a, &b), Err(Error::Shape(_))));
    let g = GrayImage::new(8, 8);
    let h = GrayImage::new(9, 8);
    assert!(rmse(&g, &h).is_err());
    assert!(mssim(&g, &h).is_err());
    assert!(mssim(&GrayImage::new(7, 7), &GrayImage::new(7, 7)).is_err());
}

#[test]
fn rmse_of_a_constant_offset() {
    let a = GrayImage::from_pixel(10, 6, Luma([40]));
    let b = GrayImage::from_pixel(10, 6, Luma([47]));
    assert_eq!(rmse(&a, &b).unwrap(), 7.0);
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
}

#[test]
fn summary_of_known_values() {
    let s = summary_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
    assert_eq!(s.median, 3.0);
    assert_eq!((s.q25, s.q75), (2.0, 4.0));
    assert_eq!(s.outliers, vec![100.0]);
    assert_eq!(s.whisker_high, 4.0);
    assert!(summary_stats(&[]).is_err());
    assert!(summary_stats(&[1.0, f64::NAN]).is_err());
}

#[test]
fn paired_test_detects_a_consistent_shift() {
    let a = [0.91, 0.93, 0.95, 0.90, 0.94, 0.92];
    let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + 0.02 + 0.001 * i as f64).collect();
    let t = paired_ttest(&a, &b).unwrap();
    assert!(t.p < 1e-4);
    let t2 = two_sample_ttest(&a, &b).unwrap();
    assert!(t2.p > t.p);
    assert!(paired_ttest(&a, &b[..5]).is_err());
}

proptest! {
    #[test]
    fn dice_jaccard_identity(pm in labels(10), gt in labels(10)) {
        for s in segmentation_scores(&pm, &gt).unwrap() {
            prop_assert!((0.0..=1.0).contains(&s.dice));
            prop_assert!((s.jaccard - s.dice / (2.0 - s.dice)).abs() < 1e-12);
            prop_assert!(s.jaccard <= s.dice);
        }
    }

    #[test]
    fn dice_is_symmetric(pm in labels(8), gt in labels(8)) {
        let ab = segmentation_scores(&pm, &gt).unwrap();
        let ba = segmentation_scores(&gt, &pm).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert_eq!(x.dice, y.dice);
            prop_assert_eq!(x.jaccard, y.jaccard);
        }
    }

    #[test]
    fn mssim_bounds_and_symmetry(x in gray(12), y in gray(12)) {
        let xy = mssim(&x, &y).unwrap();
        let yx = mssim(&y, &x).unwrap();
        prop_assert!((xy - yx).abs() < 1e-12);
        prop_assert!(xy <= 1.0 + 1e-12 && xy >= -1.0);
        prop_assert!((mssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_is_a_metric(x in gray(6), y in gray(6), z in gray(6)) {
        let (xy, yz, xz) = (rmse(&x, &y).unwrap(), rmse(&y, &z).unwrap(), rmse(&x, &z).unwrap());
        prop_assert!(xz <= xy + yz + 1e-9);
        prop_assert_eq!(xy, rmse(&y, &x).unwrap());
    }

    #[test]
    fn summary_is_ordered(values in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let s = summary_stats(&values).unwrap();
        prop_assert!(s.whisker_low <= s.q25 && s.q25 <= s.median);
        prop_assert!(s.median <= s.q75 && s.q75 <= s.whisker_high);
        prop_assert_eq!(s.n, values.len());
        let inside = values.iter().filter(|v| **v >= s.whisker_low && **v <= s.whisker_high).count();
        prop_assert_eq!(inside + s.outliers.len(), values.len());
    }
}
