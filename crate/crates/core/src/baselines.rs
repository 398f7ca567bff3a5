//! Seasonal-naive intervals.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::types::{validate_alpha, PredictionIntervals, TimeSeries};

/// `z_{1−α/2}` of the standard normal.
pub fn normal_quantile_upper(alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

/// Repeats the last observed season; the half-width at step `j` is
/// `z·σ̂·√⌈j/s⌉` with `σ̂` the root mean square of in-sample seasonal
/// differences.
pub fn seasonal_naive_intervals(series: &TimeSeries, h: usize, alpha: f64) -> Result<PredictionIntervals> {
    let y = series.values();
    let l = y.len();
    let s = series.seasonal_period();
    if l < s + 1 {
        return Err(Error::Config(format!(
            "series '{}' of length {l} is too short for seasonal period {s}",
            series.id()
        )));
    }
    if h == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let z = normal_quantile_upper(alpha)?;
    let sigma = ((s..l).map(|t| (y[t] - y[t - s]).powi(2)).sum::<f64>() / (l - s) as f64).sqrt();
    let mut lower = Vec::with_capacity(h);
    let mut point = Vec::with_capacity(h);
    let mut upper = Vec::with_capacity(h);
    for j in 1..=h {
        let p = y[l - s + (j - 1) % s];
        let half = z * sigma * (j.div_ceil(s) as f64).sqrt();
        lower.push(p - half);
        point.push(p);
        upper.push(p + half);
    }
    PredictionIntervals::new(lower, point, upper, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Frequency;

    #[test]
    fn periodic_series_has_zero_width() {
        let v: Vec<f64> = (0..24).map(|t| [1.0, 5.0, 2.0, 7.0][t % 4]).collect();
        let s = TimeSeries::with_seasonal_period("p", v, Frequency::Quarterly, 4).unwrap();
        let pi = seasonal_naive_intervals(&s, 6, 0.05).unwrap();
        assert_eq!(pi.point(), &[1.0, 5.0, 2.0, 7.0, 1.0, 5.0]);
        assert_eq!(pi.lower(), pi.point());
        assert_eq!(pi.upper(), pi.point());
    }

    #[test]
    fn constant_series_non_seasonal() {
        let s = TimeSeries::new("c", vec![2.0; 5], Frequency::Yearly).unwrap();
        let pi = seasonal_naive_intervals(&s, 3, 0.1).unwrap();
        assert_eq!(pi.point(), &[2.0; 3]);
        assert_eq!(pi.mean_width(), 0.0);
    }

    #[test]
    fn too_short() {
        let s = TimeSeries::with_seasonal_period("c", vec![1.0; 4], Frequency::Quarterly, 4).unwrap();
        assert!(matches!(seasonal_naive_intervals(&s, 2, 0.05), Err(Error::Config(_))));
    }

    #[test]
    fn widths_grow_by_season() {
        let v: Vec<f64> = (0..20).map(|t| ((t * 7) % 5) as f64).collect();
        let s = TimeSeries::with_seasonal_period("w", v, Frequency::Other, 3).unwrap();
        let pi = seasonal_naive_intervals(&s, 7, 0.05).unwrap();
        let w: Vec<f64> = pi.widths().collect();
        assert!(w.windows(2).all(|p| p[1] >= p[0]));
        assert!((w[3] / w[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((w[6] / w[0] - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile() {
        assert!((normal_quantile_upper(0.05).unwrap() - 1.959_963_984_540_054).abs() < 1e-8);
    }
}
