//! Preliminary interval estimation and the calibrated forecast built on it.
//!
//! The observed part of each completion window is divided by its mean
//! absolute value before solving, and the completed window is scaled back.

use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    calibrate_intervals, compute_delta, min_training_len, split_series, ConformityScores, ConformitySet,
};
use crate::error::{Error, Result};
use crate::solver::{solve, Diagnostics, ProxRule};
use crate::transform::{learn_transform, sliding_windows, Transform, TransformKind};
use crate::types::{make_forecast_window, ForecastConfig, PredictionIntervals, QuantileSpec, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    /// Upper bound from the exact quantile proximal step.
    Qr,
    /// Upper bound from the mean-of-candidates step.
    Mqr,
    /// Point forecast only; the band comes entirely from calibration.
    Cp,
}

impl IntervalMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalMethod::Qr => "qr",
            IntervalMethod::Mqr => "mqr",
            IntervalMethod::Cp => "cp",
        }
    }

    pub fn default_lambda(self) -> Option<f64> {
        match self {
            IntervalMethod::Qr => Some(2.0),
            IntervalMethod::Mqr => Some(20.0),
            IntervalMethod::Cp => None,
        }
    }
}

impl FromStr for IntervalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qr" => Ok(IntervalMethod::Qr),
            "mqr" => Ok(IntervalMethod::Mqr),
            "cp" => Ok(IntervalMethod::Cp),
            other => Err(Error::Config(format!("unknown interval method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub intervals: PredictionIntervals,
    pub model_size: usize,
    pub transform: TransformKind,
    /// Divisor applied to the observed window before solving.
    pub scale: f64,
    pub point: Diagnostics,
    pub upper: Option<Diagnostics>,
    /// Steps where the upper solve fell below the point forecast.
    pub ordering_fixes: usize,
}

/// Learns the transform from `values` and checks it fits model size `m`.
fn transform_for(values: &[f64], m: usize, cfg: &ForecastConfig) -> Result<Transform> {
    let samples = sliding_windows(values, m, cfg.spectral.stride)?;
    learn_transform(&samples, cfg.transform, &cfg.spectral)
}

/// Uncalibrated intervals for the `cfg.horizon` steps after `series`.
pub fn estimate_intervals(
    series: &TimeSeries,
    cfg: &ForecastConfig,
    method: IntervalMethod,
) -> Result<Estimate> {
    cfg.validate()?;
    let window = make_forecast_window(series, cfg)?;
    let m = window.model_size();
    let h = cfg.horizon;
    let transform = transform_for(series.values(), m, cfg)?;

    let observed: Vec<f64> = window.observed().collect();
    let mean_abs = observed.iter().map(|v| v.abs()).sum::<f64>() / observed.len() as f64;
    let scale = if mean_abs > 0.0 { mean_abs } else { 1.0 };
    let y: Vec<f64> = window.values.iter().map(|v| v / scale).collect();
    let omega = &window.sampling;

    let point_rule = ProxRule::Mse {
        lambda: cfg.lambda_point,
    };
    let point_sol = solve(&y, omega, &transform, &point_rule, &cfg.solver)?;
    let point: Vec<f64> = point_sol.x[m - h..].iter().map(|v| v * scale).collect();

    let (upper, upper_diag) = match method {
        IntervalMethod::Cp => (point.clone(), None),
        IntervalMethod::Qr | IntervalMethod::Mqr => {
            let lambda = cfg
                .lambda_quantile
                .or(method.default_lambda())
                .expect("quantile methods have a default weight");
            let delta = QuantileSpec::upper(cfg.alpha)?;
            let rule = if method == IntervalMethod::Qr {
                ProxRule::QrMedian { lambda, delta }
            } else {
                ProxRule::MqrMean { lambda, delta }
            };
            let sol = solve(&y, omega, &transform, &rule, &cfg.solver)?;
            let upper = sol.x[m - h..].iter().map(|v| v * scale).collect();
            (upper, Some(sol.diagnostics))
        }
    };

    let mut lower: Vec<f64> = point.iter().zip(&upper).map(|(p, u)| 2.0 * p - u).collect();
    let mut upper = upper;
    let mut ordering_fixes = 0;
    for t in 0..h {
        if upper[t] < point[t] {
            upper[t] = point[t];
            lower[t] = point[t];
            ordering_fixes += 1;
        }
    }
    if ordering_fixes > 0 {
        warn!(
            "series '{}': upper bound below the point forecast at {ordering_fixes} of {h} steps; collapsed to the point",
            series.id()
        );
    }

    Ok(Estimate {
        intervals: PredictionIntervals::new(lower, point, upper, cfg.alpha)?,
        model_size: m,
        transform: transform.kind(),
        scale,
        point: point_sol.diagnostics,
        upper: upper_diag,
        ordering_fixes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    Applied,
    Skipped,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRecord {
    pub status: CalibrationStatus,
    pub delta: f64,
    pub scores: usize,
    pub conformity_set: ConformitySet,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Forecast {
    pub preliminary: Estimate,
    pub intervals: PredictionIntervals,
    pub calibration: CalibrationRecord,
}

/// Score set actually used: the point-only method has no bounds to score.
fn effective_set(cfg: &ForecastConfig, method: IntervalMethod) -> ConformitySet {
    match method {
        IntervalMethod::Cp => ConformitySet::PointOnly,
        _ => cfg.conformity_set,
    }
}

/// Computes `Δ` by forecasting the last `h` values from the rest of the
/// series. The inner `Err` carries the reason calibration was skipped.
fn calibration_delta(
    series: &TimeSeries,
    cfg: &ForecastConfig,
    method: IntervalMethod,
) -> Result<std::result::Result<(f64, usize), String>> {
    let (train, cal) = match split_series(series, cfg.horizon) {
        Ok(split) => split,
        Err(Error::CalibrationSkipped(reason)) => return Ok(Err(reason)),
        Err(e) => return Err(e),
    };
    let need = min_training_len(cfg.horizon);
    if train.len() < need {
        return Ok(Err(format!(
            "training part of '{}' has {} values, calibration needs {need}",
            series.id(),
            train.len()
        )));
    }
    if let Some(m) = cfg.model_size {
        if m > train.len() {
            return Ok(Err(format!(
                "model size {m} exceeds the training part ({} values)",
                train.len()
            )));
        }
    }
    let est = estimate_intervals(&train, cfg, method)?;
    let scores = ConformityScores::from_intervals(&cal, &est.intervals, effective_set(cfg, method))?;
    let delta = compute_delta(&scores, cfg.alpha, cfg.quantile_estimator)?;
    Ok(Ok((delta, scores.len())))
}

/// Preliminary intervals for the future, widened by the calibration `Δ`.
pub fn forecast(series: &TimeSeries, cfg: &ForecastConfig, method: IntervalMethod) -> Result<Forecast> {
    let preliminary = estimate_intervals(series, cfg, method)?;
    let set = effective_set(cfg, method);
    let (delta, calibration) = if !cfg.calibrate {
        (
            0.0,
            CalibrationRecord {
                status: CalibrationStatus::Disabled,
                delta: 0.0,
                scores: 0,
                conformity_set: set,
                reason: None,
            },
        )
    } else {
        match calibration_delta(series, cfg, method)? {
            Ok((delta, scores)) => (
                delta,
                CalibrationRecord {
                    status: CalibrationStatus::Applied,
                    delta,
                    scores,
                    conformity_set: set,
                    reason: None,
                },
            ),
            Err(reason) => {
                warn!("calibration skipped: {reason}");
                (
                    0.0,
                    CalibrationRecord {
                        status: CalibrationStatus::Skipped,
                        delta: 0.0,
                        scores: 0,
                        conformity_set: set,
                        reason: Some(reason),
                    },
                )
            }
        }
    };
    let intervals = if calibration.status == CalibrationStatus::Disabled {
        preliminary.intervals.clone()
    } else {
        calibrate_intervals(&preliminary.intervals, delta)?
    };
    Ok(Forecast {
        preliminary,
        intervals,
        calibration,
    })
}

/// Learns the transform the forecast of `series` would use; exposed for the
/// transform dump command.
pub fn learned_transform(series: &TimeSeries, cfg: &ForecastConfig) -> Result<Transform> {
    let m = cfg.model_size_for(series.len(), series.seasonal_period())?;
    transform_for(series.values(), m, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Frequency;

    fn seasonal_ar(n: usize, seed: u64) -> TimeSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut e = 0.0;
        let values = (0..n)
            .map(|t| {
                e = 0.5 * e + rng.random_range(-1.0..1.0);
                10.0 + 3.0 * (2.0 * std::f64::consts::PI * t as f64 / 4.0).sin() + e
            })
            .collect();
        TimeSeries::with_seasonal_period("s", values, Frequency::Other, 4).unwrap()
    }

    #[test]
    fn constant_series_gives_near_zero_width() {
        let s = TimeSeries::new("c", vec![3.0; 40], Frequency::Other).unwrap();
        let cfg = ForecastConfig::new(4, 0.05);
        for method in [IntervalMethod::Qr, IntervalMethod::Cp] {
            let f = forecast(&s, &cfg, method).unwrap();
            for t in 0..4 {
                assert!((f.intervals.point()[t] - 3.0).abs() < 1e-3);
                assert!(f.intervals.upper()[t] - f.intervals.lower()[t] < 3e-3);
            }
        }
    }

    #[test]
    fn mqr_on_exactly_low_rank_data_keeps_its_shift() {
        // the solve meets the feasibility tolerance while mu is still small,
        // so the mean step's upward shift is not annealed away
        let s = TimeSeries::new("c", vec![3.0; 40], Frequency::Other).unwrap();
        let mut cfg = ForecastConfig::new(4, 0.05);
        cfg.calibrate = false;
        let e = estimate_intervals(&s, &cfg, IntervalMethod::Mqr).unwrap();
        assert!(e.intervals.mean_width() > 1.0);
        assert!(e.upper.unwrap().final_mu < 1e-2);
    }

    #[test]
    fn mqr_intervals_have_positive_width_and_contain_point() {
        let s = seasonal_ar(80, 3);
        let mut cfg = ForecastConfig::new(6, 0.05);
        cfg.calibrate = false;
        let e = estimate_intervals(&s, &cfg, IntervalMethod::Mqr).unwrap();
        assert!(e.intervals.mean_width() > 0.0);
        for t in 0..6 {
            let pi = &e.intervals;
            assert!(pi.lower()[t] <= pi.point()[t] && pi.point()[t] <= pi.upper()[t]);
            // reflection holds exactly unless the step was collapsed
            let a = pi.point()[t] - pi.lower()[t];
            let b = pi.upper()[t] - pi.point()[t];
            assert!((a - b).abs() <= 1e-9 * (1.0 + pi.point()[t].abs()));
        }
    }

    #[test]
    fn short_series_skips_calibration() {
        let s = TimeSeries::new("s", (0..12).map(f64::from).collect(), Frequency::Other).unwrap();
        let f = forecast(&s, &ForecastConfig::new(4, 0.05), IntervalMethod::Mqr).unwrap();
        assert_eq!(f.calibration.status, CalibrationStatus::Skipped);
        assert_eq!(f.intervals.delta(), 0.0);
    }

    #[test]
    fn deterministic() {
        let s = seasonal_ar(60, 9);
        let cfg = ForecastConfig::new(5, 0.1);
        let a = forecast(&s, &cfg, IntervalMethod::Mqr).unwrap();
        let b = forecast(&s, &cfg, IntervalMethod::Mqr).unwrap();
        assert_eq!(a.intervals, b.intervals);
    }

    #[test]
    fn cp_uses_point_scores() {
        let s = seasonal_ar(60, 1);
        let cfg = ForecastConfig::new(5, 0.1);
        let f = forecast(&s, &cfg, IntervalMethod::Cp).unwrap();
        assert_eq!(f.calibration.conformity_set, ConformitySet::PointOnly);
        assert_eq!(f.calibration.scores, 5);
        assert!(f.preliminary.upper.is_none());
    }
}
