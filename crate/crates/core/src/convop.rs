//! Circular convolution map `x ↦ 𝒜_k(x)` and its adjoint.
//!
//! `𝒜_k(x)` is the `n × k` matrix made of the first `k` columns of the
//! circulant matrix generated by `x ∈ R^n`: column `j` is `x` circularly
//! shifted down by `j` positions (0-based), so entry `(i, j)` is
//! `x[(i − j) mod n]`. Its rank is the convolutional rank of `x`.
//!
//! The adjoint sums each column back after undoing its shift, giving
//! `𝒜_k*(𝒜_k(x)) = k·x`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense convolution matrix of `x` with kernel size `k`.
pub fn conv_matrix(x: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let op = ConvOperator::new(x.len(), k)?;
    let mut out = DMatrix::zeros(x.len(), k);
    op.apply_into(x, &mut out);
    Ok(out)
}

/// Adjoint `𝒜_k*(M)` of an `n × k` matrix; `r[p] = Σ_j M[(p + j) mod n, j]`.
pub fn conv_adjoint(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let op = ConvOperator::new(m.nrows(), m.ncols())?;
    let mut out = vec![0.0; m.nrows()];
    op.adjoint_into(m, &mut out);
    Ok(out)
}

/// Matrix-free form of `𝒜_k` for a fixed signal length, used inside the
/// solver loop to avoid reallocating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvOperator {
    n: usize,
    k: usize,
}

impl ConvOperator {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Dimension(format!(
                "kernel size {k} must lie in 1..={n}"
            )));
        }
        Ok(Self { n, k })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    /// Writes `𝒜_k(x)` into `out` (shape `n × k`).
    pub fn apply_into(&self, x: &[f64], out: &mut DMatrix<f64>) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.shape(), (self.n, self.k));
        let n = self.n;
        for j in 0..self.k {
            let col = &mut out.column_mut(j);
            // rows j..n read x[0..n-j], rows 0..j wrap around
            for i in 0..j {
                col[i] = x[n - j + i];
            }
            for i in j..n {
                col[i] = x[i - j];
            }
        }
    }

    /// Writes `𝒜_k*(m)` into `out` (length `n`).
    pub fn adjoint_into(&self, m: &DMatrix<f64>, out: &mut [f64]) {
        debug_assert_eq!(m.shape(), (self.n, self.k));
        debug_assert_eq!(out.len(), self.n);
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.k {
            let col = m.column(j);
            for p in 0..n - j {
                out[p] += col[p + j];
            }
            for p in n - j..n {
                out[p] += col[p + j - n];
            }
        }
    }
}
