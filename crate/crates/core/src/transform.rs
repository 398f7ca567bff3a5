//! Column-orthogonal transforms `A ∈ R^{q×m}` (`q = 2m`, `AᵀA = I_m`) that map
//! a completion window into a space where it is convolutionally low-rank.
//!
//! Three learners are provided:
//!
//! * [`TransformKind::PaddedIdentity`] stacks `I_m` on top of an `m × m` zero
//!   block, so the solver works on the zero-padded window. The padded vector
//!   has full convolutional rank whenever the window is nonzero.
//! * [`TransformKind::PeriodicIdentity`] stacks two copies of `I_m / √2`.
//!   `𝒜_m(Ax)` is then two stacked copies of the `m × m` circulant of `x`
//!   divided by `√2`, which has the same singular values as the circulant, so
//!   the solver reduces exactly to plain convolution nuclear norm
//!   minimization of the window with kernel size `m`.
//! * [`TransformKind::SpectralRouting`] estimates the average power spectrum
//!   of sliding training windows and splits every window `z` into a dominant
//!   band `u = Pz` and a residual `r = Rz` (both frequency-domain gain
//!   filters with `a_f² + b_f² = 1`). The output is `[u + r; u − r] / √2`:
//!   the dominant band repeats with period `m` inside the `2m`-long output,
//!   so its DFT is supported on the even bins and its convolutional rank
//!   equals the number of dominant frequency coefficients, while the residual
//!   is routed to the odd bins.

use std::f64::consts::{PI, SQRT_2};
use std::io::{BufRead, Write};
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    PaddedIdentity,
    PeriodicIdentity,
    SpectralRouting,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::PaddedIdentity => "padded_identity",
            TransformKind::PeriodicIdentity => "periodic_identity",
            TransformKind::SpectralRouting => "spectral_routing",
        }
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "padded_identity" | "identity" | "padded" => Ok(TransformKind::PaddedIdentity),
            "periodic_identity" | "periodic" => Ok(TransformKind::PeriodicIdentity),
            "spectral_routing" | "spectral" => Ok(TransformKind::SpectralRouting),
            other => Err(Error::Config(format!("unknown transform '{other}'"))),
        }
    }
}

/// Tuning knobs of the spectral routing learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOpts {
    /// Share of the average non-DC energy the dominant band must capture.
    pub energy_threshold: f64,
    /// Width (in frequency ranks) of the logistic gain ramp.
    pub ramp_width: f64,
    /// Step between consecutive training windows.
    pub stride: usize,
}

impl Default for SpectralOpts {
    fn default() -> Self {
        Self {
            energy_threshold: 0.95,
            ramp_width: 2.0,
            stride: 1,
        }
    }
}

/// Sliding windows `y_i ∈ R^m` stored as the columns of an `m × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSamples {
    windows: DMatrix<f64>,
}

impl TrainingSamples {
    pub fn windows(&self) -> &DMatrix<f64> {
        &self.windows
    }

    pub fn window_len(&self) -> usize {
        self.windows.nrows()
    }

    pub fn count(&self) -> usize {
        self.windows.ncols()
    }
}

/// Column `i` (0-based) is `values[i·stride .. i·stride + m]`.
pub fn extract_training_samples(
    series: &TimeSeries,
    m: usize,
    stride: usize,
) -> Result<TrainingSamples> {
    sliding_windows(series.values(), m, stride)
}

pub(crate) fn sliding_windows(values: &[f64], m: usize, stride: usize) -> Result<TrainingSamples> {
    let l = values.len();
    if m == 0 || m > l {
        return Err(Error::Config(format!(
            "window length {m} must lie in 1..={l}"
        )));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let n = (l - m) / stride + 1;
    let windows = DMatrix::from_fn(m, n, |r, c| values[c * stride + r]);
    Ok(TrainingSamples { windows })
}

/// A learned `q × m` transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    matrix: DMatrix<f64>,
    kind: TransformKind,
}

impl Transform {
    pub fn padded_identity(m: usize) -> Self {
        let mut matrix = DMatrix::zeros(2 * m, m);
        for i in 0..m {
            matrix[(i, i)] = 1.0;
        }
        Self {
            matrix,
            kind: TransformKind::PaddedIdentity,
        }
    }

    pub fn periodic_identity(m: usize) -> Self {
        let mut matrix = DMatrix::zeros(2 * m, m);
        for i in 0..m {
            matrix[(i, i)] = 1.0 / SQRT_2;
            matrix[(m + i, i)] = 1.0 / SQRT_2;
        }
        Self {
            matrix,
            kind: TransformKind::PeriodicIdentity,
        }
    }

    /// Wraps an arbitrary matrix after checking column orthonormality.
    pub fn from_matrix(matrix: DMatrix<f64>, kind: TransformKind) -> Result<Self> {
        let t = Self { matrix, kind };
        let err = t.orthogonality_error();
        if err >= 1e-8 {
            return Err(Error::Dimension(format!(
                "transform is not column-orthonormal (‖AᵀA − I‖_F = {err:e})"
            )));
        }
        Ok(t)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    /// Output length `q`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Model size `m`.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `‖AᵀA − I_m‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let m = self.cols();
        (self.matrix.transpose() * &self.matrix - DMatrix::identity(m, m)).norm()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x))
            .as_slice()
            .to_vec()
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        (self.matrix.tr_mul(&DVector::from_column_slice(v)))
            .as_slice()
            .to_vec()
    }

    /// Writes the matrix as CSV: a `q,m,learner_tag` header line followed by
    /// `q` rows of `m` values (row-major, shortest round-trip formatting).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{},{},{}", self.rows(), self.cols(), self.kind.as_str())?;
        for r in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|c| self.matrix[(r, c)].to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingest("empty transform dump".into()))??;
        let parts: Vec<&str> = header.trim().split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Ingest(format!("bad transform header '{header}'")));
        }
        let q: usize = parts[0]
            .parse()
            .map_err(|_| Error::Ingest(format!("bad row count '{}'", parts[0])))?;
        let m: usize = parts[1]
            .parse()
            .map_err(|_| Error::Ingest(format!("bad column count '{}'", parts[1])))?;
        let kind: TransformKind = parts[2].parse()?;
        let mut data = Vec::with_capacity(q * m);
        for (r, line) in lines.enumerate().take(q) {
            let line = line?;
            for (c, cell) in line.trim().split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row: r + 2,
                    column: c + 1,
                    message: format!("'{cell}' is not a number"),
                })?;
                data.push(v);
            }
        }
        if data.len() != q * m {
            return Err(Error::Ingest(format!(
                "expected {} values, found {}",
                q * m,
                data.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(q, m, &data), kind)
    }
}

/// Learns a transform from training windows.
pub fn learn_transform(
    samples: &TrainingSamples,
    kind: TransformKind,
    opts: &SpectralOpts,
) -> Result<Transform> {
    let m = samples.window_len();
    match kind {
        TransformKind::PaddedIdentity => Ok(Transform::padded_identity(m)),
        TransformKind::PeriodicIdentity => Ok(Transform::periodic_identity(m)),
        TransformKind::SpectralRouting => {
            if samples.windows().iter().all(|&v| v == 0.0) {
                warn!("all training windows are zero; falling back to the padded identity");
                return Ok(Transform::padded_identity(m));
            }
            let gains = routing_gains(samples, opts);
            Ok(spectral_routing_matrix(&gains))
        }
    }
}

/// Orthonormal real DFT basis of `R^m`: row `i` is a unit basis vector and
/// `freq[i]` its frequency index in `0..=m/2`.
pub(crate) struct RealDft {
    pub basis: DMatrix<f64>,
    pub freq: Vec<usize>,
}

pub(crate) fn real_dft(m: usize) -> RealDft {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(m);
    let scale0 = 1.0 / (m as f64).sqrt();
    let scale = (2.0 / m as f64).sqrt();
    rows.push((0, vec![scale0; m]));
    for f in 1..=(m - 1) / 2 {
        let w = 2.0 * PI * f as f64 / m as f64;
        rows.push((f, (0..m).map(|t| scale * (w * t as f64).cos()).collect()));
        rows.push((f, (0..m).map(|t| scale * (w * t as f64).sin()).collect()));
    }
    if m.is_multiple_of(2) && m > 1 {
        let nyq = (0..m)
            .map(|t| if t % 2 == 0 { scale0 } else { -scale0 })
            .collect();
        rows.push((m / 2, nyq));
    }
    let freq = rows.iter().map(|(f, _)| *f).collect();
    let data: Vec<f64> = rows.into_iter().flat_map(|(_, r)| r).collect();
    RealDft {
        basis: DMatrix::from_row_slice(m, m, &data),
        freq,
    }
}

/// Per-frequency dominant-band gains `a_f` (the residual gain is
/// `sqrt(1 − a_f²)`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingGains {
    pub window_len: usize,
    pub dominant: Vec<f64>,
    /// Number of non-DC frequencies selected by the energy threshold.
    pub selected: usize,
}

/// Average power per frequency over the training windows.
pub fn average_power_spectrum(samples: &TrainingSamples) -> Vec<f64> {
    let m = samples.window_len();
    let dft = real_dft(m);
    let coeffs = &dft.basis * samples.windows();
    let mut power = vec![0.0; m / 2 + 1];
    for (row, &f) in dft.freq.iter().enumerate() {
        power[f] += coeffs.row(row).iter().map(|c| c * c).sum::<f64>();
    }
    let n = samples.count() as f64;
    power.iter_mut().for_each(|p| *p /= n);
    power
}

pub(crate) fn routing_gains(samples: &TrainingSamples, opts: &SpectralOpts) -> RoutingGains {
    let m = samples.window_len();
    let power = average_power_spectrum(samples);
    // DC is always routed to the dominant band; the threshold ranks the rest
    let mut order: Vec<usize> = (1..power.len()).collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&f| power[f]).sum();
    let mut selected = 0;
    if total > 0.0 {
        let mut acc = 0.0;
        for &f in &order {
            acc += power[f];
            selected += 1;
            if acc >= opts.energy_threshold * total {
                break;
            }
        }
    }
    let mut dominant = vec![0.0; power.len()];
    dominant[0] = 1.0;
    if selected > 0 {
        let width = opts.ramp_width.max(f64::EPSILON);
        let steep = 12.0 / width;
        let centre = selected as f64 - 1.0 + width / 2.0;
        for (rank, &f) in order.iter().enumerate() {
            let a2 = 1.0 / (1.0 + (steep * (rank as f64 - centre)).exp());
            dominant[f] = a2.sqrt();
        }
    }
    RoutingGains {
        window_len: m,
        dominant,
        selected,
    }
}

fn spectral_routing_matrix(gains: &RoutingGains) -> Transform {
    let m = gains.window_len;
    let dft = real_dft(m);
    let a: Vec<f64> = dft.freq.iter().map(|&f| gains.dominant[f]).collect();
    let b: Vec<f64> = a.iter().map(|&ai| (1.0 - ai * ai).max(0.0).sqrt()).collect();
    let filter = |g: &[f64]| {
        let scaled = DMatrix::from_fn(m, m, |r, c| g[r] * dft.basis[(r, c)]);
        dft.basis.tr_mul(&scaled)
    };
    let p = filter(&a);
    let r = filter(&b);
    let mut matrix = DMatrix::zeros(2 * m, m);
    matrix
        .view_mut((0, 0), (m, m))
        .copy_from(&((&p + &r) / SQRT_2));
    matrix
        .view_mut((m, 0), (m, m))
        .copy_from(&((&p - &r) / SQRT_2));
    Transform {
        matrix,
        kind: TransformKind::SpectralRouting,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Frequency;

    fn ts(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("t", values, Frequency::Other).unwrap()
    }

    #[test]
    fn sliding_windows_stride_one() {
        let s = extract_training_samples(&ts(vec![1.0, 2.0, 3.0, 4.0]), 3, 1).unwrap();
        assert_eq!(s.count(), 2);
        assert_eq!(s.windows().column(0).as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.windows().column(1).as_slice(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_window_when_m_equals_length() {
        let v = vec![4.0, 1.0, 5.0];
        let s = extract_training_samples(&ts(v.clone()), 3, 1).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.windows().column(0).as_slice(), v.as_slice());
    }

    #[test]
    fn strided_windows() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = extract_training_samples(&ts(v), 4, 2).unwrap();
        assert_eq!(s.count(), 4);
        let starts: Vec<f64> = (0..4).map(|c| s.windows()[(0, c)]).collect();
        assert_eq!(starts, vec![1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn window_longer_than_series() {
        assert!(matches!(
            extract_training_samples(&ts(vec![1.0, 2.0]), 3, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn real_dft_is_orthonormal() {
        for m in [1, 2, 5, 8, 13] {
            let f = real_dft(m).basis;
            let err = (&f * f.transpose() - DMatrix::identity(m, m)).norm();
            assert!(err < 1e-12, "m={m}: {err}");
        }
    }

    #[test]
    fn padded_identity_layout() {
        let t = Transform::padded_identity(3);
        assert_eq!(t.rows(), 6);
        assert_eq!(t.orthogonality_error(), 0.0);
        assert_eq!(t.apply(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn periodic_identity_duplicates_the_window() {
        let t = Transform::periodic_identity(4);
        assert!(t.orthogonality_error() < 1e-12);
        let v = t.apply(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&v[..4], &v[4..]);
    }

    #[test]
    fn zero_samples_fall_back_to_padded_identity() {
        let s = extract_training_samples(&ts(vec![0.0; 10]), 4, 1).unwrap();
        let t = learn_transform(&s, TransformKind::SpectralRouting, &SpectralOpts::default())
            .unwrap();
        assert_eq!(t.kind(), TransformKind::PaddedIdentity);
    }

    #[test]
    fn spectral_routing_is_orthonormal() {
        let v: Vec<f64> = (0..80)
            .map(|t| 10.0 + (t as f64 * 0.7).sin() + 0.3 * ((t * t) as f64 * 0.01).cos())
            .collect();
        for m in [5, 12, 24] {
            let s = extract_training_samples(&ts(v.clone()), m, 1).unwrap();
            let t = learn_transform(&s, TransformKind::SpectralRouting, &SpectralOpts::default())
                .unwrap();
            assert_eq!(t.rows(), 2 * m);
            assert!(t.orthogonality_error() < 1e-8);
        }
    }

    #[test]
    fn csv_dump_round_trips() {
        let v: Vec<f64> = (0..30).map(|t| (t as f64 * 0.4).cos()).collect();
        let s = extract_training_samples(&ts(v), 6, 1).unwrap();
        let t = learn_transform(&s, TransformKind::SpectralRouting, &SpectralOpts::default())
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("12,6,spectral_routing\n"));
        let back = Transform::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }
}
