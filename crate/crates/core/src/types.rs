//! Domain types shared by every stage of the forecaster.
//!
//! Documentation uses 1-based time indices (`t = 1..l` for the observed
//! series, `t = l+1..l+h` for the forecast block). Internally every vector is
//! 0-based, so observed index `i` in the docs lives at `values[i - 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::{ConformitySet, QuantileEstimator};
use crate::error::{Error, Result};
use crate::solver::SolverOpts;
use crate::transform::{SpectralOpts, TransformKind};

/// Sampling frequency of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Hourly,
    Daily,
    Weekly,
    Monthly,
    Quarterly,
    Yearly,
    Other,
}

impl Frequency {
    pub const ALL: [Frequency; 7] = [
        Frequency::Hourly,
        Frequency::Daily,
        Frequency::Weekly,
        Frequency::Monthly,
        Frequency::Quarterly,
        Frequency::Yearly,
        Frequency::Other,
    ];

    /// Seasonal period used by the MSIS scale (24 hourly, 12 monthly,
    /// 4 quarterly, 1 for yearly/weekly/daily). `None` for `Other`.
    pub fn seasonal_period(self) -> Option<usize> {
        match self {
            Frequency::Hourly => Some(24),
            Frequency::Monthly => Some(12),
            Frequency::Quarterly => Some(4),
            Frequency::Daily | Frequency::Weekly | Frequency::Yearly => Some(1),
            Frequency::Other => None,
        }
    }

    /// M4 competition forecast horizon for this frequency.
    pub fn m4_horizon(self) -> Option<usize> {
        match self {
            Frequency::Hourly => Some(48),
            Frequency::Daily => Some(14),
            Frequency::Weekly => Some(13),
            Frequency::Monthly => Some(18),
            Frequency::Quarterly => Some(8),
            Frequency::Yearly => Some(6),
            Frequency::Other => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Hourly => "hourly",
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
            Frequency::Yearly => "yearly",
            Frequency::Other => "other",
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hourly" | "h" => Ok(Frequency::Hourly),
            "daily" | "d" => Ok(Frequency::Daily),
            "weekly" | "w" => Ok(Frequency::Weekly),
            "monthly" | "m" => Ok(Frequency::Monthly),
            "quarterly" | "q" => Ok(Frequency::Quarterly),
            "yearly" | "y" => Ok(Frequency::Yearly),
            "other" => Ok(Frequency::Other),
            other => Err(Error::Config(format!("unknown frequency '{other}'"))),
        }
    }
}

/// An observed univariate series `y_1..y_l` with frequency metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    id: String,
    values: Vec<f64>,
    frequency: Frequency,
    seasonal_period: usize,
}

impl TimeSeries {
    /// Builds a series whose seasonal period follows from `frequency`.
    /// `Frequency::Other` defaults to a period of 1; use
    /// [`TimeSeries::with_seasonal_period`] to override.
    pub fn new(id: impl Into<String>, values: Vec<f64>, frequency: Frequency) -> Result<Self> {
        let period = frequency.seasonal_period().unwrap_or(1);
        Self::with_seasonal_period(id, values, frequency, period)
    }

    pub fn with_seasonal_period(
        id: impl Into<String>,
        values: Vec<f64>,
        frequency: Frequency,
        seasonal_period: usize,
    ) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::Config(format!("series '{id}' is empty")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "series '{id}' has a non-finite value at t={}",
                pos + 1
            )));
        }
        if seasonal_period == 0 {
            return Err(Error::Config("seasonal period must be at least 1".into()));
        }
        Ok(Self {
            id,
            values,
            frequency,
            seasonal_period,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn seasonal_period(&self) -> usize {
        self.seasonal_period
    }

    /// The first `len` observations, keeping the metadata.
    pub fn head(&self, len: usize) -> Result<TimeSeries> {
        if len == 0 || len > self.len() {
            return Err(Error::Config(format!(
                "cannot take {len} values from a series of length {}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            id: self.id.clone(),
            values: self.values[..len].to_vec(),
            frequency: self.frequency,
            seasonal_period: self.seasonal_period,
        })
    }
}

/// Observed-index set `Ω ⊆ {1..m}`, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSet {
    size: usize,
    indices: Vec<usize>,
    mask: Vec<bool>,
}

impl SamplingSet {
    /// Builds a sampling set over a window of `size` from 0-based indices.
    pub fn new(size: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("sampling set has repeated indices".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= size {
                return Err(Error::Dimension(format!(
                    "sampling index {} outside window of size {size}",
                    last + 1
                )));
            }
        }
        let mut mask = vec![false; size];
        for &i in &indices {
            mask[i] = true;
        }
        Ok(Self {
            size,
            indices,
            mask,
        })
    }

    /// `Ω = {1..observed}` over a window of `size`.
    pub fn prefix(size: usize, observed: usize) -> Result<Self> {
        Self::new(size, (0..observed.min(size)).collect())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Sorted 0-based indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }
}

/// Quantile level `δ ∈ (0, 1)` of the pinball loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec(f64);

impl QuantileSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta < 1.0 {
            Ok(Self(delta))
        } else {
            Err(Error::Config(format!("quantile level {delta} not in (0, 1)")))
        }
    }

    /// Level used for the upper bound of a `1 − α` interval: `δ = 1 − α/2`.
    pub fn upper(alpha: f64) -> Result<Self> {
        validate_alpha(alpha)?;
        Self::new(1.0 - alpha / 2.0)
    }

    pub fn delta(self) -> f64 {
        self.0
    }
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "significance level alpha={alpha} not in (0, 1)"
        )))
    }
}

/// Settings for one interval forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub alpha: f64,
    /// Model size `m`; `None` picks `min(l, max(4h, 3·seasonal_period))`.
    pub model_size: Option<usize>,
    pub lambda_point: f64,
    /// `None` uses the per-rule default (20 for the mean rule, 2 for the median rule).
    pub lambda_quantile: Option<f64>,
    pub calibrate: bool,
    pub conformity_set: ConformitySet,
    pub quantile_estimator: QuantileEstimator,
    pub transform: TransformKind,
    pub spectral: SpectralOpts,
    pub solver: SolverOpts,
}

impl ForecastConfig {
    pub const DEFAULT_LAMBDA_POINT: f64 = 1000.0;

    pub fn new(horizon: usize, alpha: f64) -> Self {
        Self {
            horizon,
            alpha,
            model_size: None,
            lambda_point: Self::DEFAULT_LAMBDA_POINT,
            lambda_quantile: None,
            calibrate: true,
            conformity_set: ConformitySet::AllBounds,
            quantile_estimator: QuantileEstimator::Conformal,
            transform: TransformKind::SpectralRouting,
            spectral: SpectralOpts::default(),
            solver: SolverOpts::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        validate_alpha(self.alpha)?;
        if !(self.lambda_point > 0.0 && self.lambda_point.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_point={} must be positive",
                self.lambda_point
            )));
        }
        if let Some(lq) = self.lambda_quantile {
            if !(lq > 0.0 && lq.is_finite()) {
                return Err(Error::Config(format!("lambda_quantile={lq} must be positive")));
            }
        }
        if let Some(m) = self.model_size {
            if m <= self.horizon {
                return Err(Error::Config(format!(
                    "model size {m} must exceed the horizon {}",
                    self.horizon
                )));
            }
        }
        self.solver.validate()
    }

    /// Resolves the model size for a series of length `len`.
    pub fn model_size_for(&self, len: usize, seasonal_period: usize) -> Result<usize> {
        let h = self.horizon;
        let m = match self.model_size {
            Some(m) => m,
            None => len.min((4 * h).max(3 * seasonal_period)),
        };
        if m > len {
            return Err(Error::Config(format!(
                "model size exceeds series length ({m} > {len})"
            )));
        }
        if h >= m {
            return Err(Error::Config(format!(
                "horizon {h} must be smaller than the model size {m}"
            )));
        }
        Ok(m)
    }
}

/// Completion window of size `m`: the last `m − h` observations followed by
/// `h` unobserved slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    /// Observed part followed by the initialization value in unobserved slots.
    pub values: Vec<f64>,
    pub sampling: SamplingSet,
}

impl ForecastWindow {
    pub fn model_size(&self) -> usize {
        self.values.len()
    }

    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.sampling.indices().iter().map(|&i| self.values[i])
    }
}

/// Builds the completion window for forecasting `cfg.horizon` steps ahead.
pub fn make_forecast_window(series: &TimeSeries, cfg: &ForecastConfig) -> Result<ForecastWindow> {
    let m = cfg.model_size_for(series.len(), series.seasonal_period())?;
    let h = cfg.horizon;
    let observed = &series.values()[series.len() - (m - h)..];
    let fill = observed.iter().sum::<f64>() / observed.len() as f64;
    let mut values = observed.to_vec();
    values.resize(m, fill);
    Ok(ForecastWindow {
        values,
        sampling: SamplingSet::prefix(m, m - h)?,
    })
}

/// Per-step `lower ≤ point ≤ upper` triples for the forecast block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionIntervals {
    lower: Vec<f64>,
    point: Vec<f64>,
    upper: Vec<f64>,
    alpha: f64,
    calibrated: bool,
    delta: f64,
}

impl PredictionIntervals {
    /// Uncalibrated intervals. Fails if lengths differ or ordering is violated.
    pub fn new(lower: Vec<f64>, point: Vec<f64>, upper: Vec<f64>, alpha: f64) -> Result<Self> {
        validate_alpha(alpha)?;
        if lower.len() != point.len() || upper.len() != point.len() {
            return Err(Error::Dimension(format!(
                "interval lengths differ: lower {}, point {}, upper {}",
                lower.len(),
                point.len(),
                upper.len()
            )));
        }
        for (t, ((l, p), u)) in lower.iter().zip(&point).zip(&upper).enumerate() {
            if !(l.is_finite() && p.is_finite() && u.is_finite()) {
                return Err(Error::Solver(format!("non-finite interval at step {}", t + 1)));
            }
            if !(l <= p && p <= u) {
                return Err(Error::Config(format!(
                    "interval ordering violated at step {}: {l} <= {p} <= {u}",
                    t + 1
                )));
            }
        }
        Ok(Self {
            lower,
            point,
            upper,
            alpha,
            calibrated: false,
            delta: 0.0,
        })
    }

    pub(crate) fn widened(&self, delta: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|l| l - delta).collect(),
            point: self.point.clone(),
            upper: self.upper.iter().map(|u| u + delta).collect(),
            alpha: self.alpha,
            calibrated: true,
            delta,
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn calibrated(&self) -> bool {
        self.calibrated
    }

    /// Calibration widening `Δ`; zero when uncalibrated.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> usize {
        self.point.len()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l)
    }

    pub fn mean_width(&self) -> f64 {
        self.widths().sum::<f64>() / self.horizon().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("s", values, Frequency::Yearly).unwrap()
    }

    #[test]
    fn seasonal_periods_follow_frequency() {
        assert_eq!(Frequency::Hourly.seasonal_period(), Some(24));
        assert_eq!(Frequency::Monthly.seasonal_period(), Some(12));
        assert_eq!(Frequency::Quarterly.seasonal_period(), Some(4));
        for f in [Frequency::Yearly, Frequency::Weekly, Frequency::Daily] {
            assert_eq!(f.seasonal_period(), Some(1));
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(TimeSeries::new("x", vec![1.0, f64::NAN], Frequency::Yearly).is_err());
        assert!(TimeSeries::new("x", vec![f64::INFINITY], Frequency::Yearly).is_err());
        assert!(TimeSeries::new("x", vec![], Frequency::Yearly).is_err());
    }

    #[test]
    fn window_takes_last_observations() {
        let s = series(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut cfg = ForecastConfig::new(2, 0.05);
        cfg.model_size = Some(4);
        let w = make_forecast_window(&s, &cfg).unwrap();
        assert_eq!(w.observed().collect::<Vec<_>>(), vec![4.0, 5.0]);
        assert_eq!(w.sampling.indices(), &[0, 1]);
        // unobserved slots hold the observed mean
        assert_eq!(&w.values[2..], &[4.5, 4.5]);
    }

    #[test]
    fn window_of_length_one_is_invalid() {
        let s = series(vec![7.0]);
        let mut cfg = ForecastConfig::new(1, 0.05);
        cfg.model_size = Some(1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(make_forecast_window(&s, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn window_covering_whole_series() {
        let s = series((1..=100).map(f64::from).collect());
        let mut cfg = ForecastConfig::new(6, 0.05);
        cfg.model_size = Some(100);
        let w = make_forecast_window(&s, &cfg).unwrap();
        assert_eq!(w.sampling.len(), 94);
        assert_eq!(w.sampling.indices(), (0..94).collect::<Vec<_>>().as_slice());
        assert_eq!(w.observed().collect::<Vec<_>>(), s.values()[6..].to_vec());
    }

    #[test]
    fn model_size_larger_than_series_is_rejected() {
        let s = series(vec![1.0; 5]);
        let mut cfg = ForecastConfig::new(2, 0.05);
        cfg.model_size = Some(6);
        let err = make_forecast_window(&s, &cfg).unwrap_err();
        assert!(err.to_string().contains("model size exceeds series length"));
    }

    #[test]
    fn default_model_size() {
        let cfg = ForecastConfig::new(6, 0.05);
        assert_eq!(cfg.model_size_for(100, 1).unwrap(), 24);
        assert_eq!(cfg.model_size_for(100, 12).unwrap(), 36);
        assert_eq!(cfg.model_size_for(10, 1).unwrap(), 10);
        assert!(cfg.model_size_for(6, 1).is_err());
    }

    #[test]
    fn window_is_pure_and_sized() {
        let s = series((0..40).map(|t| (t as f64).sin()).collect());
        let cfg = ForecastConfig::new(5, 0.1);
        let a = make_forecast_window(&s, &cfg).unwrap();
        let b = make_forecast_window(&s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sampling.len(), a.model_size() - cfg.horizon);
    }

    #[test]
    fn quantile_spec_bounds() {
        assert!(QuantileSpec::new(0.0).is_err());
        assert!(QuantileSpec::new(1.0).is_err());
        assert_eq!(QuantileSpec::upper(0.05).unwrap().delta(), 0.975);
    }

    #[test]
    fn sampling_set_validation() {
        assert!(SamplingSet::new(3, vec![0, 3]).is_err());
        assert!(SamplingSet::new(3, vec![1, 1]).is_err());
        let s = SamplingSet::new(5, vec![4, 0, 2]).unwrap();
        assert_eq!(s.indices(), &[0, 2, 4]);
        assert!(s.contains(2) && !s.contains(1));
    }

    #[test]
    fn intervals_enforce_ordering() {
        assert!(PredictionIntervals::new(vec![1.0], vec![0.0], vec![2.0], 0.05).is_err());
        assert!(PredictionIntervals::new(vec![0.0], vec![1.0], vec![2.0], 0.05).is_ok());
        assert!(PredictionIntervals::new(vec![0.0], vec![1.0, 2.0], vec![2.0], 0.05).is_err());
    }
}
