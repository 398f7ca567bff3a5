//! Split-conformal widening of preliminary intervals.
//!
//! The last `h` observations are held out as a calibration block, intervals
//! for that block are produced from the remaining prefix, and the absolute
//! residuals against the held-out truth form the conformity scores. A single
//! widening `Δ` (a finite-sample quantile of the scores) is then added on
//! both sides of every preliminary interval.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_alpha, PredictionIntervals, TimeSeries};

/// Which residuals enter the conformity score set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformitySet {
    /// `{|y_j − ŷ_j^M|}`
    PointOnly,
    /// `{|y_j − ŷ_j^L|, |y_j − ŷ_j^M|, |y_j − ŷ_j^U|}`
    AllBounds,
}

impl ConformitySet {
    pub fn as_str(self) -> &'static str {
        match self {
            ConformitySet::PointOnly => "point_only",
            ConformitySet::AllBounds => "all_bounds",
        }
    }
}

impl FromStr for ConformitySet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "point_only" | "point" => Ok(ConformitySet::PointOnly),
            "all_bounds" | "all" => Ok(ConformitySet::AllBounds),
            other => Err(Error::Config(format!("unknown conformity set '{other}'"))),
        }
    }
}

/// How the `(1 − α)` quantile of the scores is read off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileEstimator {
    /// `⌈(n + 1)(1 − α)⌉`-th smallest score, clamped to the largest.
    Conformal,
    /// `⌈n(1 − α)⌉`-th smallest score.
    Empirical,
}

impl FromStr for QuantileEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conformal" => Ok(QuantileEstimator::Conformal),
            "empirical" => Ok(QuantileEstimator::Empirical),
            other => Err(Error::Config(format!("unknown quantile estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformityScores {
    scores: Vec<f64>,
}

impl ConformityScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Calibration("no conformity scores".into()));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Calibration(
                "conformity scores must be finite and non-negative".into(),
            ));
        }
        Ok(Self { scores })
    }

    /// Residuals of intervals forecast for the calibration block against its
    /// observed values.
    pub fn from_intervals(
        truth: &[f64],
        intervals: &PredictionIntervals,
        set: ConformitySet,
    ) -> Result<Self> {
        if truth.len() != intervals.horizon() {
            return Err(Error::Dimension(format!(
                "{} calibration values for {} interval steps",
                truth.len(),
                intervals.horizon()
            )));
        }
        let mut scores = Vec::with_capacity(3 * truth.len());
        for (j, &y) in truth.iter().enumerate() {
            let m = (y - intervals.point()[j]).abs();
            match set {
                ConformitySet::PointOnly => scores.push(m),
                ConformitySet::AllBounds => {
                    scores.push((y - intervals.lower()[j]).abs());
                    scores.push(m);
                    scores.push((y - intervals.upper()[j]).abs());
                }
            }
        }
        Self::new(scores)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Shortest training prefix the forecast pipeline calibrates from when
/// holding out `h` values.
pub fn min_training_len(h: usize) -> usize {
    2 * h + 2
}

/// Splits `y_1..y_l` into the training prefix `y_1..y_{l−h}` and the
/// calibration block `y_{l−h+1}..y_l`. The prefix must be longer than `h`
/// so that it can be forecast `h` steps ahead at all.
pub fn split_series(series: &TimeSeries, h: usize) -> Result<(TimeSeries, Vec<f64>)> {
    let l = series.len();
    if h == 0 || l < 2 * h + 1 {
        return Err(Error::CalibrationSkipped(format!(
            "series '{}' of length {l} cannot hold out {h} values",
            series.id()
        )));
    }
    let train = series.head(l - h)?;
    let cal = series.values()[l - h..].to_vec();
    Ok((train, cal))
}

/// Rank (1-based) of the score used as `Δ` among `n` sorted scores.
pub fn quantile_rank(n: usize, alpha: f64, estimator: QuantileEstimator) -> usize {
    let level = 1.0 - alpha;
    let raw = match estimator {
        QuantileEstimator::Conformal => ((n + 1) as f64 * level).ceil(),
        QuantileEstimator::Empirical => (n as f64 * level).ceil(),
    };
    (raw as usize).clamp(1, n)
}

/// The calibration widening `Δ`.
pub fn compute_delta(
    scores: &ConformityScores,
    alpha: f64,
    estimator: QuantileEstimator,
) -> Result<f64> {
    validate_alpha(alpha)?;
    let mut sorted = scores.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = quantile_rank(sorted.len(), alpha, estimator);
    Ok(sorted[rank - 1])
}

/// Widens every interval by `Δ` on both sides.
pub fn calibrate_intervals(prelim: &PredictionIntervals, delta: f64) -> Result<PredictionIntervals> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Calibration(format!("widening {delta} must be non-negative")));
    }
    Ok(prelim.widened(delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Frequency;
    use proptest::prelude::*;

    fn scores(v: Vec<f64>) -> ConformityScores {
        ConformityScores::new(v).unwrap()
    }

    #[test]
    fn split_arithmetic() {
        let s = TimeSeries::new("s", (1..=10).map(f64::from).collect(), Frequency::Other).unwrap();
        let (tr, cal) = split_series(&s, 3).unwrap();
        assert_eq!(tr.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(cal, vec![8.0, 9.0, 10.0]);
        let mut joined = tr.values().to_vec();
        joined.extend(&cal);
        assert_eq!(joined.as_slice(), s.values());

        let s = TimeSeries::new("s", vec![0.5; 100], Frequency::Other).unwrap();
        let (tr, cal) = split_series(&s, 14).unwrap();
        assert_eq!((tr.len(), cal.len()), (86, 14));
    }

    #[test]
    fn split_too_short_is_skipped() {
        let s = TimeSeries::new("s", vec![1.0; 4], Frequency::Other).unwrap();
        assert!(matches!(split_series(&s, 3), Err(Error::CalibrationSkipped(_))));
        let s = TimeSeries::new("s", vec![1.0; 7], Frequency::Other).unwrap();
        assert!(split_series(&s, 3).is_ok());
        let s = TimeSeries::new("s", vec![1.0; 6], Frequency::Other).unwrap();
        assert!(split_series(&s, 3).is_err());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(compute_delta(&scores(vec![0.0; 7]), 0.05, QuantileEstimator::Conformal).unwrap(), 0.0);
        let one_to_twenty = scores((1..=20).map(f64::from).collect());
        assert_eq!(quantile_rank(20, 0.05, QuantileEstimator::Conformal), 20);
        assert_eq!(compute_delta(&one_to_twenty, 0.05, QuantileEstimator::Conformal).unwrap(), 20.0);
        assert_eq!(compute_delta(&scores(vec![5.0]), 0.05, QuantileEstimator::Conformal).unwrap(), 5.0);
        assert_eq!(compute_delta(&one_to_twenty, 0.05, QuantileEstimator::Empirical).unwrap(), 19.0);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(ConformityScores::new(vec![]), Err(Error::Calibration(_))));
        assert!(ConformityScores::new(vec![-1.0]).is_err());
    }

    #[test]
    fn score_set_sizes() {
        let pi = PredictionIntervals::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 3.0], 0.1).unwrap();
        let truth = [1.5, 0.0];
        let p = ConformityScores::from_intervals(&truth, &pi, ConformitySet::PointOnly).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 2.0]);
        let a = ConformityScores::from_intervals(&truth, &pi, ConformitySet::AllBounds).unwrap();
        assert_eq!(a.as_slice(), &[1.5, 0.5, 0.5, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn calibrate_examples() {
        let pi = PredictionIntervals::new(vec![7.0], vec![10.0], vec![13.0], 0.05).unwrap();
        let c = calibrate_intervals(&pi, 2.0).unwrap();
        assert_eq!((c.lower(), c.point(), c.upper()), (&[5.0][..], &[10.0][..], &[15.0][..]));
        assert!(c.calibrated());
        assert_eq!(c.delta(), 2.0);

        let z = calibrate_intervals(&pi, 0.0).unwrap();
        assert_eq!((z.lower(), z.point(), z.upper()), (pi.lower(), pi.point(), pi.upper()));
        assert!(z.calibrated());
        assert!(calibrate_intervals(&pi, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn widening_adds_two_delta(
            rows in proptest::collection::vec((-50.0f64..50.0, 0.0f64..10.0, 0.0f64..10.0), 1..20),
            delta in 0.0f64..5.0,
        ) {
            let point: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let lower: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
            let upper: Vec<f64> = rows.iter().map(|r| r.0 + r.2).collect();
            let pi = PredictionIntervals::new(lower, point, upper, 0.05).unwrap();
            let c = calibrate_intervals(&pi, delta).unwrap();
            for (t, (wb, wa)) in pi.widths().zip(c.widths()).enumerate() {
                prop_assert!((wa - wb - 2.0 * delta).abs() < 1e-9);
                prop_assert!(c.lower()[t] <= pi.lower()[t] && c.upper()[t] >= pi.upper()[t]);
            }
        }

        #[test]
        fn delta_is_a_score_at_the_documented_rank(
            v in proptest::collection::vec(0.0f64..100.0, 1..60),
            alpha in 0.01f64..0.5,
        ) {
            let d = compute_delta(&scores(v.clone()), alpha, QuantileEstimator::Conformal).unwrap();
            let rank = quantile_rank(v.len(), alpha, QuantileEstimator::Conformal);
            // d is the rank-th order statistic: rank−1 scores strictly below would be too few
            let below = v.iter().filter(|&&s| s < d).count();
            let at_or_below = v.iter().filter(|&&s| s <= d).count();
            prop_assert!(below < rank && rank <= at_or_below);
        }
    }
}
