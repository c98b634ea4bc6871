//! pCVR calibration, trimmed-mean baseline estimation and
//! predicted-versus-realized gap diagnostics.

use thiserror::Error;

use crate::domain::CampaignId;

/// Calibration threshold used in production for pCVR.
pub const DEFAULT_THRESHOLD: f64 = 0.012;

/// Fraction trimmed from each end of a history before averaging.
pub const DEFAULT_TRIM: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("logarithm base must be positive and not 1, got {0}")]
    BadLogBase(f64),
    #[error("cvr history is empty")]
    EmptyHistory,
    #[error("trim fraction must be in [0, 0.5), got {0}")]
    BadTrimFraction(f64),
    #[error("trimmed cvr history averages to zero")]
    AllZeroAfterTrim,
    #[error("no samples to bucket")]
    EmptySamples,
    #[error("bucket count must be at least 1")]
    ZeroBuckets,
}

/// Compresses predictions at or above `tc` logarithmically:
/// `tc * (1 + ln(p / tc))`. Below the threshold `p` passes through.
pub fn calibrate_cvr(p: f64, tc: f64) -> Result<f64, CalibrationError> {
    if !(tc > 0.0) {
        return Err(CalibrationError::NonPositiveThreshold(tc));
    }
    if p < tc {
        Ok(p)
    } else {
        Ok(tc * (1.0 + (p / tc).ln()))
    }
}

/// [`calibrate_cvr`] with an explicit logarithm base.
pub fn calibrate_cvr_with_base(p: f64, tc: f64, base: f64) -> Result<f64, CalibrationError> {
    if !(base > 0.0) || base == 1.0 {
        return Err(CalibrationError::BadLogBase(base));
    }
    if !(tc > 0.0) {
        return Err(CalibrationError::NonPositiveThreshold(tc));
    }
    if p < tc {
        Ok(p)
    } else {
        Ok(tc * (1.0 + (p / tc).log(base)))
    }
}

/// Recent pCVR predictions of one campaign's competing ads.
#[derive(Debug, Clone, PartialEq)]
pub struct CvrHistory {
    pub campaign_id: CampaignId,
    pub observations: Vec<f64>,
}

/// Number of observations dropped from each end of a sorted list.
pub fn trim_count(n: usize, trim_fraction: f64) -> usize {
    // the epsilon keeps products such as 30 * 0.1 from flooring to 2
    (n as f64 * trim_fraction + 1e-9).floor() as usize
}

/// Trimmed mean of a campaign's pCVR history: sort, drop
/// `floor(n * trim_fraction)` values from each end, average the rest.
pub fn expected_cvr(history: &CvrHistory, trim_fraction: f64) -> Result<f64, CalibrationError> {
    trimmed_mean(&history.observations, trim_fraction)
}

pub fn trimmed_mean(values: &[f64], trim_fraction: f64) -> Result<f64, CalibrationError> {
    if values.is_empty() {
        return Err(CalibrationError::EmptyHistory);
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(CalibrationError::BadTrimFraction(trim_fraction));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = trim_count(sorted.len(), trim_fraction);
    let kept = &sorted[k..sorted.len() - k];
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    if mean > 0.0 {
        Ok(mean)
    } else {
        Err(CalibrationError::AllZeroAfterTrim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapBucket {
    pub mean_predicted: f64,
    pub mean_real: f64,
    /// `None` when the bucket realized nothing.
    pub ratio: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapCurve {
    pub buckets: Vec<GapBucket>,
}

impl GapCurve {
    /// Rows of `bucket_index,mean_pred,mean_real,ratio,count`; an
    /// undefined ratio is written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_index,mean_pred,mean_real,ratio,count\n");
        for (i, b) in self.buckets.iter().enumerate() {
            let ratio = b.ratio.map_or_else(|| "NA".to_owned(), |r| format!("{r:.6}"));
            out.push_str(&format!(
                "{i},{:.6},{:.6},{ratio},{}\n",
                b.mean_predicted, b.mean_real, b.count
            ));
        }
        out
    }
}

/// Equal-frequency buckets over `(predicted, realized)` pairs ordered by
/// the prediction. When the sample count does not divide evenly, the
/// leading buckets take one extra sample each.
pub fn gap_curve(samples: &[(f64, f64)], n_buckets: usize) -> Result<GapCurve, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptySamples);
    }
    if n_buckets == 0 {
        return Err(CalibrationError::ZeroBuckets);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = n_buckets.min(sorted.len());
    let base = sorted.len() / k;
    let extra = sorted.len() % k;

    let mut buckets = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let chunk = &sorted[start..start + len];
        start += len;
        let n = chunk.len() as f64;
        let mean_predicted = chunk.iter().map(|s| s.0).sum::<f64>() / n;
        let mean_real = chunk.iter().map(|s| s.1).sum::<f64>() / n;
        let ratio = (mean_real != 0.0).then(|| mean_predicted / mean_real);
        buckets.push(GapBucket { mean_predicted, mean_real, ratio, count: chunk.len() });
    }
    Ok(GapCurve { buckets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn below_threshold_is_identity() {
        assert_eq!(calibrate_cvr(0.010, 0.012).unwrap(), 0.010);
    }

    #[test]
    fn continuous_at_threshold() {
        assert_eq!(calibrate_cvr(0.012, 0.012).unwrap(), 0.012);
    }

    #[test]
    fn doubling_threshold_adds_ln2() {
        // 0.012 * (1 + ln 2), evaluated at 30 digits
        let expected = 0.020_317_766_166_719_344;
        assert!((calibrate_cvr(0.024, 0.012).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_threshold() {
        assert_eq!(calibrate_cvr(0.1, 0.0), Err(CalibrationError::NonPositiveThreshold(0.0)));
    }

    #[test]
    fn base_ten_compresses_less() {
        let natural = calibrate_cvr(0.1, 0.012).unwrap();
        let decimal = calibrate_cvr_with_base(0.1, 0.012, 10.0).unwrap();
        assert!(decimal < natural);
        assert_eq!(
            calibrate_cvr_with_base(0.1, 0.012, std::f64::consts::E).unwrap(),
            natural
        );
    }

    fn history(values: Vec<f64>) -> CvrHistory {
        CvrHistory { campaign_id: "c".into(), observations: values }
    }

    #[test]
    fn trimmed_mean_of_ten_values() {
        let h = history((1..=10).map(|i| i as f64 / 1000.0).collect());
        // mean of 0.002..=0.009
        let oracle = (2..=9).map(|i| i as f64 / 1000.0).sum::<f64>() / 8.0;
        assert!((expected_cvr(&h, 0.10).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.0055).abs() < 1e-15);
    }

    #[test]
    fn constant_history() {
        let h = history(vec![0.004; 17]);
        assert!((expected_cvr(&h, 0.10).unwrap() - 0.004).abs() < 1e-15);
        assert!((expected_cvr(&h, 0.3).unwrap() - 0.004).abs() < 1e-15);
    }

    #[test]
    fn small_history_keeps_everything() {
        let h = history(vec![0.001, 0.002, 0.003, 0.004, 0.1]);
        let plain = (0.001 + 0.002 + 0.003 + 0.004 + 0.1) / 5.0;
        assert!((expected_cvr(&h, 0.10).unwrap() - plain).abs() < 1e-15);
    }

    #[test]
    fn history_errors() {
        assert_eq!(expected_cvr(&history(vec![]), 0.1), Err(CalibrationError::EmptyHistory));
        assert_eq!(
            expected_cvr(&history(vec![0.0, 0.0, 0.0]), 0.1),
            Err(CalibrationError::AllZeroAfterTrim)
        );
        assert_eq!(
            expected_cvr(&history(vec![0.1]), 0.5),
            Err(CalibrationError::BadTrimFraction(0.5))
        );
    }

    #[test]
    fn gap_bucket_ratio() {
        let curve = gap_curve(&[(0.02, 0.0), (0.04, 0.02)], 1).unwrap();
        let b = &curve.buckets[0];
        assert!((b.mean_real - 0.01).abs() < 1e-15);
        assert!((b.ratio.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_have_unit_ratio() {
        let samples: Vec<_> = (1..=40).map(|i| (i as f64 / 100.0, i as f64 / 100.0)).collect();
        let curve = gap_curve(&samples, 20).unwrap();
        assert_eq!(curve.buckets.len(), 20);
        for b in &curve.buckets {
            assert!((b.ratio.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_bucket_is_undefined() {
        let curve = gap_curve(&[(0.1, 0.0), (0.2, 0.0)], 1).unwrap();
        assert_eq!(curve.buckets[0].ratio, None);
        assert!(curve.to_csv().lines().nth(1).unwrap().contains(",NA,"));
    }

    #[test]
    fn gap_curve_errors() {
        assert_eq!(gap_curve(&[], 20), Err(CalibrationError::EmptySamples));
        assert_eq!(gap_curve(&[(0.1, 0.0)], 0), Err(CalibrationError::ZeroBuckets));
    }

    proptest! {
        #[test]
        fn calibration_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, tc in 0.001f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(calibrate_cvr(lo, tc).unwrap() <= calibrate_cvr(hi, tc).unwrap());
        }

        #[test]
        fn calibration_compresses_above_threshold(p in 0.0f64..=1.0, tc in 0.001f64..0.5) {
            let f = calibrate_cvr(p, tc).unwrap();
            if p > tc {
                prop_assert!(tc <= f && f <= p);
            } else {
                prop_assert_eq!(f, p);
            }
        }

        #[test]
        fn trimmed_mean_matches_oracle(
            values in prop::collection::vec(0.0001f64..1.0, 1..1000),
            trim in 0.0f64..0.49,
        ) {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = ((values.len() as f64) * trim + 1e-9).floor() as usize;
            let kept: Vec<f64> = sorted.iter().skip(k).take(values.len() - 2 * k).copied().collect();
            let oracle = kept.iter().sum::<f64>() / kept.len() as f64;
            prop_assert_eq!(trimmed_mean(&values, trim).unwrap(), oracle);
        }

        #[test]
        fn gap_buckets_are_equal_frequency(
            samples in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..500),
            k in 1usize..40,
        ) {
            let curve = gap_curve(&samples, k).unwrap();
            let counts: Vec<usize> = curve.buckets.iter().map(|b| b.count).collect();
            prop_assert_eq!(counts.iter().sum::<usize>(), samples.len());
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            for pair in curve.buckets.windows(2) {
                prop_assert!(pair[0].mean_predicted <= pair[1].mean_predicted);
            }
        }
    }
}
