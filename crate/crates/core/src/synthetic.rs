//! Seeded synthetic series for tests, sweeps and the `synth` command.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::CorpusEntry;
use crate::error::{Error, Result};
use crate::types::{Frequency, TimeSeries};

/// Level + sinusoidal season + linear trend + AR(1) noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Seasonal {
    pub len: usize,
    pub horizon: usize,
    pub period: usize,
    pub level: f64,
    pub season_amp: f64,
    pub trend: f64,
    pub phi: f64,
    pub noise_sd: f64,
}

impl Default for Ar1Seasonal {
    fn default() -> Self {
        Self {
            len: 60,
            horizon: 6,
            period: 4,
            level: 50.0,
            season_amp: 5.0,
            trend: 0.0,
            phi: 0.5,
            noise_sd: 1.0,
        }
    }
}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn normal(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::Config(format!("noise sd {sd}: {e}")))
}

fn split(id: String, mut values: Vec<f64>, horizon: usize, freq: Frequency, period: usize) -> Result<CorpusEntry> {
    let future = values.split_off(values.len() - horizon);
    Ok(CorpusEntry {
        series: TimeSeries::with_seasonal_period(id, values, freq, period)?,
        future,
    })
}

impl Ar1Seasonal {
    pub fn generate(&self, id: impl Into<String>, rng: &mut impl Rng) -> Result<CorpusEntry> {
        if self.period == 0 || self.horizon == 0 || self.len == 0 {
            return Err(Error::Config("length, horizon and period must be positive".into()));
        }
        let noise = normal(self.noise_sd)?;
        let phase = rng.random_range(0.0..2.0 * PI);
        // start the AR(1) noise from its stationary distribution
        let mut e = if self.phi.abs() < 1.0 {
            noise.sample(rng) / (1.0 - self.phi * self.phi).sqrt()
        } else {
            0.0
        };
        let n = self.len + self.horizon;
        let values = (0..n)
            .map(|t| {
                if t > 0 {
                    e = self.phi * e + noise.sample(rng);
                }
                let w = 2.0 * PI * t as f64 / self.period as f64;
                self.level + self.trend * t as f64 + self.season_amp * (w + phase).sin() + e
            })
            .collect();
        split(id.into(), values, self.horizon, Frequency::Other, self.period)
    }

    pub fn corpus(&self, count: usize, seed: u64) -> Result<Vec<CorpusEntry>> {
        (0..count)
            .map(|i| self.generate(format!("S{}", i + 1), &mut rng_for(seed, i as u64)))
            .collect()
    }
}

/// Yearly-style corpus: random lengths, levels, drifts and local trend
/// changes, multiplicative noise whose scale differs per series, and an
/// occasional level shift. Horizon 6, seasonal period 1.
pub fn yearly_like_corpus(count: usize, seed: u64) -> Result<Vec<CorpusEntry>> {
    let h = 6;
    (0..count)
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let len = rng.random_range(20..=50);
            let level: f64 = 10f64.powf(rng.random_range(2.0..4.0));
            let mut growth: f64 = rng.random_range(-0.03..0.08);
            let vol: f64 = rng.random_range(0.01..0.06);
            let trend_vol = vol * rng.random_range(0.0..0.3);
            let shift_at = rng.random_range(0..len + h);
            let shift: f64 = if rng.random_bool(0.2) { rng.random_range(-0.2..0.2) } else { 0.0 };
            let z = normal(1.0)?;
            let mut log_level = level.ln();
            let values = (0..len + h)
                .map(|t| {
                    growth += trend_vol * z.sample(&mut rng);
                    log_level += growth + vol * z.sample(&mut rng);
                    if t == shift_at {
                        log_level += shift;
                    }
                    log_level.exp()
                })
                .collect();
            split(format!("Y{}", i + 1), values, h, Frequency::Yearly, 1)
        })
        .collect()
}

/// `Σ a·cos(2π f t / m + φ)` over `(f, a, φ)` triples, `t = 0..m`.
pub fn band_limited(m: usize, components: &[(usize, f64, f64)]) -> Vec<f64> {
    (0..m)
        .map(|t| {
            components
                .iter()
                .map(|&(f, a, p)| a * (2.0 * PI * (f * t) as f64 / m as f64 + p).cos())
                .sum()
        })
        .collect()
}
