use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Box-plot summary of one group of scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics at position
/// `q (n - 1)`. `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::config("summary statistics of an empty list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "summary statistics of a non-finite value".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, var) = mean_and_var(&sorted);
    let (q25, median, q75) = (
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.75),
    );
    let iqr = q75 - q25;
    let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let inside = sorted
        .iter()
        .copied()
        .filter(|&v| v >= lo_fence && v <= hi_fence);
    let whisker_low = inside.clone().next().unwrap_or(q25);
    let whisker_high = inside.last().unwrap_or(q75);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < lo_fence || v > hi_fence)
        .collect();
    Ok(SummaryStats {
        n: sorted.len(),
        mean,
        std: var.sqrt(),
        median,
        q25,
        q75,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Two-sided Student's t result. `t` is `None` when the pooled or paired
/// variance is zero; `p` then follows the zero-variance convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: Option<f64>,
    pub p: f64,
    pub df: f64,
}

fn two_sided(mean: f64, se: f64, df: f64) -> Result<TTest> {
    if se == 0.0 {
        let p = if mean == 0.0 { 1.0 } else { 0.0 };
        return Ok(TTest { t: None, p, df });
    }
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::config(e.to_string()))?;
    Ok(TTest {
        t: Some(t),
        p: (2.0 * dist.sf(t.abs())).min(1.0),
        df,
    })
}

/// Paired test on `a[i] - b[i]` with `n - 1` degrees of freedom.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::config(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::config("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, var) = mean_and_var(&d);
    let n = d.len() as f64;
    two_sided(mean, (var / n).sqrt(), n - 1.0)
}

/// Independent two-sample test with pooled variance.
pub fn two_sample_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::config(
            "two-sample t-test needs at least 2 values per group",
        ));
    }
    let (ma, va) = mean_and_var(a);
    let (mb, vb) = mean_and_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    two_sided(ma - mb, (pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_value() {
        let s = summary_stats(&[5.0]).unwrap();
        for v in [
            s.mean,
            s.median,
            s.q25,
            s.q75,
            s.whisker_low,
            s.whisker_high,
        ] {
            assert_eq!(v, 5.0);
        }
        assert_eq!(s.std, 0.0);
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn outlier_is_fenced_off() {
        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q25, s.median, s.q75), (2.0, 3.0, 4.0));
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!((s.whisker_low, s.whisker_high), (1.0, 4.0));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(summary_stats(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn reference_paired_values() {
        // Reference values from an independent statistics package.
        let r = paired_ttest(&[1.0, 2.0, 3.0, 4.0], &[1.1, 2.2, 2.9, 4.3]).unwrap();
        assert!((r.t.unwrap() - -1.463_850_109_422_799_8).abs() < 1e-10);
        assert!((r.p - 0.239_442_598_636_002_84).abs() < 1e-9);
    }

    #[test]
    fn reference_two_sample_values() {
        let r = two_sample_ttest(&[1.0, 2.0, 3.0, 4.0], &[1.1, 2.2, 2.9, 4.3]).unwrap();
        assert!((r.t.unwrap() - -0.134_352_303_725_114_75).abs() < 1e-10);
        assert!((r.p - 0.897_517_438_317_232_1).abs() < 1e-9);
    }

    #[test]
    fn zero_variance_conventions() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(paired_ttest(&a, &a).unwrap().p, 1.0);
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let c: Vec<f64> = b.iter().map(|v| v - 1.0).collect();
        let r = paired_ttest(&b, &c).unwrap();
        assert_eq!((r.t, r.p), (None, 0.0));
        assert!(paired_ttest(&a, &a[..2]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..40), seed in any::<u64>()) {
            let base = summary_stats(&v).unwrap();
            let len = v.len();
            let mut s = seed;
            for i in (1..len).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled = summary_stats(&v).unwrap();
            prop_assert_eq!(base.median, shuffled.median);
            prop_assert_eq!(base.q25, shuffled.q25);
            prop_assert_eq!(base.q75, shuffled.q75);
            prop_assert_eq!(base.outliers, shuffled.outliers);
            prop_assert!((base.mean - shuffled.mean).abs() <= 1e-9 * (1.0 + base.mean.abs()));
        }

        #[test]
        fn ordering_and_fences(v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let s = summary_stats(&v).unwrap();
            prop_assert!(s.q25 <= s.median && s.median <= s.q75);
            let iqr = s.q75 - s.q25;
            prop_assert!(s.whisker_low >= s.q25 - 1.5 * iqr);
            prop_assert!(s.whisker_high <= s.q75 + 1.5 * iqr);
            let inside = v.iter().filter(|&&x| x >= s.q25 - 1.5 * iqr && x <= s.q75 + 1.5 * iqr).count();
            prop_assert_eq!(inside + s.outliers.len(), v.len());
        }
    }
}
