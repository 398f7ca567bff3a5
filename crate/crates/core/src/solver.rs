//! ADMM solver for
//!
//! ```text
//! min_x ‖𝒜_k(Ax)‖_* + data(x)
//! ```
//!
//! split as `Z = 𝒜_k(Ax)`. Each iteration thresholds the singular values of
//! `𝒜_k(Ax) + W/μ` at `1/μ` (Z-step), applies one of the proximal rules in
//! [`ProxRule`] around `x_g0 = −Aᵀ𝒜_k*(W − μZ)/(μk)` (x-step), then takes a
//! dual ascent step on `W` and grows `μ` geometrically.
//!
//! The x-step is closed form because `𝒜_k*𝒜_k = k·I` and `AᵀA = I`, which
//! turns the coupling term into `(μk/2)‖x − x_g0‖²`.

use log::{debug, warn};
use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::convop::ConvOperator;
use crate::error::{Error, Result};
use crate::transform::Transform;
use crate::types::{QuantileSpec, SamplingSet};

/// `argmin_x ½(x − z)² + β·ℓ_Q(x, y)`: the median of `z + βδ`,
/// `z + β(δ − 1)` and `y`.
pub fn prox_quantile_median(z: f64, y: f64, beta: f64, delta: f64) -> f64 {
    let hi = z + beta * delta;
    let lo = z + beta * (delta - 1.0);
    y.clamp(lo, hi)
}

/// Mean of the same three candidates as [`prox_quantile_median`]:
/// `(2z + y)/3 + β(2δ − 1)/3`. Continuous in all arguments.
pub fn prox_quantile_mean(z: f64, y: f64, beta: f64, delta: f64) -> f64 {
    let hi = z + beta * delta;
    let lo = z + beta * (delta - 1.0);
    (hi + lo + y) / 3.0
}

/// Pinball loss `δ(y − x)⁺ + (1 − δ)(x − y)⁺` of predicting `x` for `y`.
pub fn quantile_loss(x: f64, y: f64, delta: f64) -> f64 {
    delta * (y - x).max(0.0) + (1.0 - delta) * (x - y).max(0.0)
}

/// Singular value thresholding: `U·max(Σ − τ, 0)·Vᵀ`.
pub fn svt(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Config(format!("threshold {tau} must be non-negative")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("svt input has non-finite entries".into()));
    }
    let svd = decompose(m)?;
    Ok(shrink(&svd, tau, m.nrows(), m.ncols()))
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().sum()
}

fn decompose(m: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.clone(), true, true, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Solver(format!(
            "SVD did not converge on a {}x{} matrix (‖M‖_F = {:e}, max |m_ij| = {:e})",
            m.nrows(),
            m.ncols(),
            m.norm(),
            m.amax()
        ))
    })
}

fn shrink(
    svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tau: f64,
    rows: usize,
    cols: usize,
) -> DMatrix<f64> {
    let u = svd.u.as_ref().expect("U requested");
    let vt = svd.v_t.as_ref().expect("Vᵀ requested");
    let keep: Vec<(usize, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (s > tau).then_some((i, s - tau)))
        .collect();
    if keep.is_empty() {
        return DMatrix::zeros(rows, cols);
    }
    let us = DMatrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c].0)] * keep[c].1);
    let vk = DMatrix::from_fn(keep.len(), cols, |r, c| vt[(keep[r].0, c)]);
    us * vk
}

/// Data-fit term and its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ProxRule {
    /// `(λk/2)·Σ_Ω (x_i − y_i)²`; gives the point forecast.
    Mse { lambda: f64 },
    /// `λ·Σ_Ω ℓ_Q(x_i, y_i)` with the exact (median) proximal step.
    QrMedian { lambda: f64, delta: QuantileSpec },
    /// Same objective, with the median replaced by the mean of the three
    /// candidate points.
    MqrMean { lambda: f64, delta: QuantileSpec },
}

impl ProxRule {
    pub fn lambda(&self) -> f64 {
        match *self {
            ProxRule::Mse { lambda }
            | ProxRule::QrMedian { lambda, .. }
            | ProxRule::MqrMean { lambda, .. } => lambda,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProxRule::Mse { .. } => "mse",
            ProxRule::QrMedian { .. } => "qr_median",
            ProxRule::MqrMean { .. } => "mqr_mean",
        }
    }

    fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("rule weight {lambda} must be positive")));
        }
        Ok(())
    }

    /// Data term evaluated at `x` over the observed entries.
    pub fn data_term(&self, x: &[f64], y: &[f64], omega: &SamplingSet, k: usize) -> f64 {
        let idx = omega.indices();
        match *self {
            ProxRule::Mse { lambda } => {
                0.5 * lambda
                    * k as f64
                    * idx.iter().map(|&i| (x[i] - y[i]).powi(2)).sum::<f64>()
            }
            ProxRule::QrMedian { lambda, delta } | ProxRule::MqrMean { lambda, delta } => {
                lambda
                    * idx
                        .iter()
                        .map(|&i| quantile_loss(x[i], y[i], delta.delta()))
                        .sum::<f64>()
            }
        }
    }
}

/// The x-step: entries outside `Ω` keep `x_g0`; observed entries follow
/// `rule`, with `β = λ/(μk)` for the quantile rules.
pub fn admm_x_update(
    x_g0: &[f64],
    y: &[f64],
    omega: &SamplingSet,
    rule: &ProxRule,
    mu: f64,
    k: usize,
) -> Vec<f64> {
    let mut x = x_g0.to_vec();
    let kf = k as f64;
    for &i in omega.indices() {
        x[i] = match *rule {
            ProxRule::Mse { lambda } => (mu * x_g0[i] + lambda * y[i]) / (mu + lambda),
            ProxRule::QrMedian { lambda, delta } => {
                prox_quantile_median(x_g0[i], y[i], lambda / (mu * kf), delta.delta())
            }
            ProxRule::MqrMean { lambda, delta } => {
                prox_quantile_mean(x_g0[i], y[i], lambda / (mu * kf), delta.delta())
            }
        };
    }
    x
}

/// Penalty schedule and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOpts {
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    /// Feasibility tolerance on `‖𝒜_k(Ax) − Z‖_F`, relative to the norm of
    /// `𝒜_k(Ax₀)` at the starting point (1 if that is zero).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            mu0: 1e-4,
            rho: 1.05,
            mu_max: 1e8,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl SolverOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu_max >= self.mu0 && self.rho >= 1.0 && self.tol > 0.0) {
            return Err(Error::Config(format!("invalid solver options {self:?}")));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Reads options from a TOML table; missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let opts: SolverOpts =
            toml::from_str(text).map_err(|e| Error::Config(format!("solver config: {e}")))?;
        opts.validate()?;
        Ok(opts)
    }
}

/// ADMM variables at one iteration.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub z: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub mu: f64,
    pub iter: usize,
    pub feas_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rule: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub feas_residual: f64,
    pub final_mu: f64,
    pub objective_init: f64,
    pub objective_final: f64,
    /// Root-mean-square of `x_i − y_i` over `Ω` at the returned iterate.
    pub observed_fit_rms: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// `‖𝒜_k(Ax)‖_* + data(x)`.
pub fn objective(
    x: &[f64],
    y: &[f64],
    omega: &SamplingSet,
    transform: &Transform,
    rule: &ProxRule,
) -> Result<f64> {
    objective_with_kernel(x, y, omega, transform, rule, transform.rows() / 2)
}

fn objective_with_kernel(
    x: &[f64],
    y: &[f64],
    omega: &SamplingSet,
    transform: &Transform,
    rule: &ProxRule,
    k: usize,
) -> Result<f64> {
    let q = transform.rows();
    let op = ConvOperator::new(q, k)?;
    let mut c = DMatrix::zeros(q, k);
    op.apply_into(&transform.apply(x), &mut c);
    Ok(nuclear_norm(&c) + rule.data_term(x, y, omega, k))
}

/// Runs ADMM on a completion window. `window` holds the observations at the
/// indices in `omega`; other entries are ignored.
pub fn solve(
    window: &[f64],
    omega: &SamplingSet,
    transform: &Transform,
    rule: &ProxRule,
    opts: &SolverOpts,
) -> Result<Solution> {
    let q = transform.rows();
    if !q.is_multiple_of(2) || q < 2 {
        return Err(Error::Dimension(format!("transform row count {q} must be even")));
    }
    solve_with_kernel(window, omega, transform, rule, opts, q / 2)
}

/// [`solve`] with an explicit kernel size `k ∈ 1..=q`.
pub fn solve_with_kernel(
    window: &[f64],
    omega: &SamplingSet,
    transform: &Transform,
    rule: &ProxRule,
    opts: &SolverOpts,
    k: usize,
) -> Result<Solution> {
    let m = window.len();
    let q = transform.rows();
    if transform.cols() != m || omega.size() != m {
        return Err(Error::Dimension(format!(
            "window of size {m}, sampling set over {}, transform {}x{}",
            omega.size(),
            q,
            transform.cols()
        )));
    }
    if omega.is_empty() {
        return Err(Error::Config("no observed entries in the window".into()));
    }
    rule.validate()?;
    opts.validate()?;
    if omega.indices().iter().any(|&i| !window[i].is_finite()) {
        return Err(Error::Config("observations must be finite".into()));
    }

    let kf = k as f64;
    let op = ConvOperator::new(q, k)?;
    let a = transform.matrix();

    let mean = omega.indices().iter().map(|&i| window[i]).sum::<f64>() / omega.len() as f64;
    let x0: Vec<f64> = (0..m)
        .map(|i| if omega.contains(i) { window[i] } else { mean })
        .collect();
    let objective_init = objective_with_kernel(&x0, window, omega, transform, rule, k)?;

    let mut conv = DMatrix::zeros(q, k);
    op.apply_into(&transform.apply(&x0), &mut conv);
    let feas_scale = match conv.norm() {
        n if n > 0.0 => n,
        _ => 1.0,
    };
    let mut state = SolverState {
        x: x0,
        z: conv.clone(),
        w: DMatrix::zeros(q, k),
        mu: opts.mu0,
        iter: 0,
        feas_residual: f64::INFINITY,
    };
    let mut best = (f64::INFINITY, state.x.clone());
    let mut adj = vec![0.0; q];
    let mut window_start = f64::INFINITY;
    let mut converged = false;

    while state.iter < opts.max_iter {
        let mu = state.mu;
        // Z-step
        let target = &conv + &state.w / mu;
        let svd = decompose(&target)?;
        state.z = shrink(&svd, 1.0 / mu, q, k);

        // x-step
        let g = &state.w - &state.z * mu;
        op.adjoint_into(&g, &mut adj);
        let scale = -1.0 / (mu * kf);
        let x_g0: Vec<f64> = a
            .tr_mul(&nalgebra::DVector::from_column_slice(&adj))
            .iter()
            .map(|v| v * scale)
            .collect();
        state.x = admm_x_update(&x_g0, window, omega, rule, mu, k);

        // dual and penalty updates
        op.apply_into(&transform.apply(&state.x), &mut conv);
        let resid = &conv - &state.z;
        state.w += &resid * mu;
        state.feas_residual = resid.norm() / feas_scale;
        state.mu = (mu * opts.rho).min(opts.mu_max);
        state.iter += 1;

        if !state.feas_residual.is_finite() || state.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!(
                "{} solve diverged at iteration {} (mu = {mu:e})",
                rule.name(),
                state.iter
            )));
        }
        if state.feas_residual < best.0 {
            best = (state.feas_residual, state.x.clone());
        }
        if state.iter % 50 == 1 {
            if state.feas_residual > window_start {
                debug!(
                    "feasibility residual rose over 50 iterations ({window_start:e} -> {:e})",
                    state.feas_residual
                );
            }
            window_start = state.feas_residual;
        }
        if state.feas_residual < opts.tol {
            converged = true;
            break;
        }
    }

    let (feas_residual, x) = if converged {
        (state.feas_residual, state.x)
    } else {
        warn!(
            "{} solve stopped after {} iterations (residual {:e})",
            rule.name(),
            state.iter,
            best.0
        );
        best
    };
    let objective_final = objective_with_kernel(&x, window, omega, transform, rule, k)?;
    let observed_fit_rms = (omega
        .indices()
        .iter()
        .map(|&i| (x[i] - window[i]).powi(2))
        .sum::<f64>()
        / omega.len() as f64)
        .sqrt();
    Ok(Solution {
        x,
        diagnostics: Diagnostics {
            rule: rule.name(),
            iterations: state.iter,
            converged,
            feas_residual,
            final_mu: state.mu,
            objective_init,
            objective_final,
            observed_fit_rms,
        },
    })
}
