//! Interval scores: MSIS, coverage and absolute coverage difference.
//!
//! Coverage uses closed intervals. Corpus coverage pools every forecast point
//! of every series, while corpus MSIS is the plain mean of per-series values.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One evaluated forecast: in-sample history, ground truth and the bounds.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub in_sample: &'a [f64],
    pub future: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub alpha: f64,
    pub seasonal_period: usize,
}

impl EvalInput<'_> {
    fn check(&self) -> Result<()> {
        let h = self.future.len();
        if h == 0 {
            return Err(Error::Metric("no forecast points".into()));
        }
        if self.lower.len() != h || self.upper.len() != h {
            return Err(Error::Metric(format!(
                "{h} future values but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.lower.iter().zip(self.upper).any(|(l, u)| l > u) {
            return Err(Error::Metric("lower bound above upper bound".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Metric(format!("alpha={} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.future.len()
    }

    pub fn covered_points(&self) -> usize {
        self.future
            .iter()
            .zip(self.lower.iter().zip(self.upper))
            .filter(|(y, (l, u))| *l <= *y && *y <= *u)
            .count()
    }

    pub fn mean_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper)
            .map(|(l, u)| u - l)
            .sum::<f64>()
            / self.lower.len() as f64
    }
}

/// Mean absolute seasonal difference of the in-sample part.
pub fn seasonal_scale(in_sample: &[f64], seasonal_period: usize) -> Result<f64> {
    let n = in_sample.len();
    let s = seasonal_period;
    if s == 0 || n <= s {
        return Err(Error::Metric(format!(
            "in-sample length {n} must exceed the seasonal period {s}"
        )));
    }
    let scale = (s..n)
        .map(|t| (in_sample[t] - in_sample[t - s]).abs())
        .sum::<f64>()
        / (n - s) as f64;
    if scale <= 0.0 {
        return Err(Error::Metric("degenerate scale".into()));
    }
    Ok(scale)
}

pub fn msis(input: &EvalInput) -> Result<f64> {
    input.check()?;
    let scale = seasonal_scale(input.in_sample, input.seasonal_period)?;
    let penalty = 2.0 / input.alpha;
    let total: f64 = input
        .future
        .iter()
        .zip(input.lower.iter().zip(input.upper))
        .map(|(&y, (&l, &u))| {
            let mut s = u - l;
            if y < l {
                s += penalty * (l - y);
            }
            if y > u {
                s += penalty * (y - u);
            }
            s
        })
        .sum();
    Ok(total / input.horizon() as f64 / scale)
}

/// Share of all `(series, step)` pairs whose truth lies inside its interval.
pub fn coverage(inputs: &[EvalInput]) -> Result<f64> {
    let mut covered = 0;
    let mut total = 0;
    for input in inputs {
        input.check()?;
        covered += input.covered_points();
        total += input.horizon();
    }
    if total == 0 {
        return Err(Error::Metric("no forecast points".into()));
    }
    Ok(covered as f64 / total as f64)
}

pub fn acd(coverage: f64, target: f64) -> f64 {
    (target - coverage).abs()
}

/// One row of an evaluation report. Failed series carry `error` and no scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub id: String,
    pub msis: Option<f64>,
    pub covered_points: usize,
    pub points: usize,
    pub mean_width: Option<f64>,
    pub delta: Option<f64>,
    pub calibration: Option<String>,
    /// RMS misfit of the upper-bound solve on observed entries, in units of
    /// the window's mean absolute value.
    pub upper_fit_rms: Option<f64>,
    pub error: Option<String>,
}

impl SeriesReport {
    pub fn failed(id: impl Into<String>, error: &Error) -> Self {
        Self {
            id: id.into(),
            msis: None,
            covered_points: 0,
            points: 0,
            mean_width: None,
            delta: None,
            calibration: None,
            upper_fit_rms: None,
            error: Some(error.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub schema_version: u32,
    pub method: String,
    pub alpha: f64,
    pub series: usize,
    pub failed: usize,
    /// Mean of per-series MSIS over series that produced a finite score.
    pub mean_msis: Option<f64>,
    pub coverage: Option<f64>,
    pub acd: Option<f64>,
    pub mean_width: Option<f64>,
    pub coverage_aggregation: &'static str,
    pub msis_aggregation: &'static str,
    pub rows: Vec<SeriesReport>,
}

impl CorpusReport {
    /// Aggregates rows in the order given.
    pub fn from_rows(method: impl Into<String>, alpha: f64, rows: Vec<SeriesReport>) -> Self {
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        let scored: Vec<f64> = rows.iter().filter_map(|r| r.msis).collect();
        let mean_msis = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
        let points: usize = rows.iter().map(|r| r.points).sum();
        let covered: usize = rows.iter().map(|r| r.covered_points).sum();
        let coverage = (points > 0).then(|| covered as f64 / points as f64);
        let widths: Vec<f64> = rows.iter().filter_map(|r| r.mean_width).collect();
        let mean_width = (!widths.is_empty()).then(|| widths.iter().sum::<f64>() / widths.len() as f64);
        Self {
            schema_version: SCHEMA_VERSION,
            method: method.into(),
            alpha,
            series: rows.len(),
            failed,
            mean_msis,
            coverage,
            acd: coverage.map(|c| acd(c, 1.0 - alpha)),
            mean_width,
            coverage_aggregation: "pooled over all forecast points",
            msis_aggregation: "mean of per-series values",
            rows,
        }
    }

    /// Per-series rows followed by an `__aggregate__` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "id",
            "msis",
            "covered_points",
            "points",
            "mean_width",
            "delta",
            "calibration",
            "upper_fit_rms",
            "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                opt(r.msis),
                r.covered_points.to_string(),
                r.points.to_string(),
                opt(r.mean_width),
                opt(r.delta),
                r.calibration.clone().unwrap_or_default(),
                opt(r.upper_fit_rms),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let covered: usize = self.rows.iter().map(|r| r.covered_points).sum();
        let points: usize = self.rows.iter().map(|r| r.points).sum();
        w.write_record([
            "__aggregate__".to_string(),
            opt(self.mean_msis),
            covered.to_string(),
            points.to_string(),
            opt(self.mean_width),
            String::new(),
            String::new(),
            String::new(),
            format!("failed={}", self.failed),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input<'a>(ins: &'a [f64], fut: &'a [f64], l: &'a [f64], u: &'a [f64], alpha: f64, s: usize) -> EvalInput<'a> {
        EvalInput {
            in_sample: ins,
            future: fut,
            lower: l,
            upper: u,
            alpha,
            seasonal_period: s,
        }
    }

    #[test]
    fn msis_examples() {
        let ins = [1.0, 2.0, 3.0, 4.0];
        let v = msis(&input(&ins, &[1.0, 1.5], &[0.0, 0.0], &[2.0, 2.0], 0.05, 1)).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = msis(&input(&ins, &[-0.1], &[0.0], &[1.0], 0.05, 1)).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        let v = msis(&input(&ins, &[2.0, 3.0], &[2.0, 3.0], &[2.0, 3.0], 0.05, 1)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn msis_errors() {
        let flat = [1.0, 2.0, 1.0, 2.0];
        let e = msis(&input(&flat, &[1.0], &[0.0], &[2.0], 0.05, 2)).unwrap_err();
        assert_eq!(e, Error::Metric("degenerate scale".into()));
        assert!(msis(&input(&flat, &[1.0], &[0.0], &[2.0], 0.05, 4)).is_err());
    }

    #[test]
    fn coverage_is_closed() {
        let ins = [1.0, 2.0, 3.0];
        let a = input(&ins, &[2.0, 5.0], &[1.0, 1.0], &[2.0, 4.0], 0.05, 1);
        assert_eq!(coverage(&[a]).unwrap(), 0.5);
        assert!(coverage(&[]).is_err());
    }

    #[test]
    fn acd_examples() {
        assert!((acd(0.98, 0.95) - 0.03).abs() < 1e-12);
        assert_eq!(acd(0.95, 0.95), 0.0);
        assert!((acd(0.90, 0.95) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn report_aggregation() {
        let rows = vec![
            SeriesReport {
                id: "a".into(),
                msis: Some(2.0),
                covered_points: 3,
                points: 4,
                mean_width: Some(1.0),
                delta: Some(0.1),
                calibration: Some("applied".into()),
                upper_fit_rms: None,
                error: None,
            },
            SeriesReport::failed("b", &Error::Solver("diverged".into())),
            SeriesReport {
                id: "c".into(),
                msis: Some(4.0),
                covered_points: 4,
                points: 4,
                mean_width: Some(3.0),
                delta: Some(0.0),
                calibration: Some("skipped".into()),
                upper_fit_rms: None,
                error: None,
            },
        ];
        let r = CorpusReport::from_rows("mqr", 0.05, rows);
        assert_eq!((r.series, r.failed), (3, 1));
        assert_eq!(r.mean_msis, Some(3.0));
        assert_eq!(r.coverage, Some(7.0 / 8.0));
        assert!((r.acd.unwrap() - 0.075).abs() < 1e-12);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().last().unwrap().starts_with("__aggregate__,3,7,8,2,"));
        assert!(r.to_json().unwrap().contains("\"schema_version\": 1"));
    }

    proptest! {
        #[test]
        fn msis_is_scale_free(
            ins in proptest::collection::vec(-100.0f64..100.0, 6..30),
            rows in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0, 0.0f64..50.0), 1..10),
            c in 0.01f64..1000.0,
        ) {
            let fut: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let lo: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let up: Vec<f64> = rows.iter().map(|r| r.1 + r.2).collect();
            let base = msis(&input(&ins, &fut, &lo, &up, 0.05, 1));
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let sc = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let (ins2, fut2, lo2, up2) = (sc(&ins), sc(&fut), sc(&lo), sc(&up));
            let scaled = msis(&input(&ins2, &fut2, &lo2, &up2, 0.05, 1)).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-9 * base.abs().max(1e-300));
        }

        #[test]
        fn msis_does_not_increase_as_uncovered_bound_approaches(
            y in 5.0f64..10.0,
            u in 0.0f64..4.0,
            step in 0.0f64..1.0,
        ) {
            let ins = [0.0, 1.0, 3.0, 2.0];
            let before = msis(&input(&ins, &[y], &[-1.0], &[u], 0.1, 1)).unwrap();
            let u2 = u + step * (y - u);
            let after = msis(&input(&ins, &[y], &[-1.0], &[u2], 0.1, 1)).unwrap();
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn acd_is_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assert_eq!(acd(a, b), acd(b, a));
        }
    }
}
