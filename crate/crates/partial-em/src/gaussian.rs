//! Numerically stable multivariate Gaussian evaluation.
//!
//! Everything the EM variants need from a Gaussian: a regularized Cholesky
//! factorization cached per component, log-density evaluation through a
//! triangular solve, and a max-shifted `log_sum_exp`. All probability
//! arithmetic stays in log space until responsibilities are normalized.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837877066409345483560659472811_f64;

/// A symmetric positive-definite matrix together with its cached lower
/// Cholesky factor and log-determinant.
///
/// The stored matrix already includes whatever ridge was applied to make the
/// factorization succeed; `applied_ridge` records that amount.
#[derive(Debug, Clone)]
pub struct Covariance {
    matrix: Array2<f64>,
    factor: Array2<f64>,
    log_det: f64,
    applied_ridge: f64,
}

impl Covariance {
    /// The (ridged) covariance matrix.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    /// Lower-triangular Cholesky factor `L` with `L·Lᵀ = matrix`.
    pub fn factor(&self) -> ArrayView2<'_, f64> {
        self.factor.view()
    }

    /// `log det(matrix) = 2·Σ log L[i][i]`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// The ridge that was actually added to the input matrix.
    pub fn applied_ridge(&self) -> f64 {
        self.applied_ridge
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// One mixture component: mean, covariance, and mixing weight.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    pub mean: Array1<f64>,
    pub cov: Covariance,
    pub weight: f64,
}

impl GaussianComponent {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Plain Cholesky decomposition; fails on any non-positive pivot.
fn try_cholesky(m: &Array2<f64>) -> Option<Array2<f64>> {
    let d = m.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut diag = m[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !diag.is_finite() || diag <= 0.0 {
            return None;
        }
        let root = diag.sqrt();
        l[[j, j]] = root;
        for i in (j + 1)..d {
            let mut v = m[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / root;
        }
    }
    Some(l)
}

/// Factorize `matrix + ridge·I`, escalating the ridge by ×10 on failure.
///
/// Escalation starts from the requested ridge (or from a scale-relative
/// floor when the request is zero) and gives up once the ridge would exceed
/// `1e-2 · trace/d`, at which point the matrix is reported singular. The
/// ridge that actually went into the returned matrix is recorded on it.
pub fn cholesky_regularized(matrix: &Array2<f64>, ridge: f64) -> Result<Covariance> {
    let d = matrix.nrows();
    if d == 0 || matrix.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d.max(1),
            got: matrix.ncols(),
        });
    }
    debug_assert!(is_symmetric(matrix), "covariance input must be symmetric");

    let mean_diag = matrix.diag().sum() / d as f64;
    let cap = 1e-2 * mean_diag;
    // Floor used only when escalation is needed but the request was 0.
    let floor = if mean_diag > 0.0 {
        1e-12 * mean_diag
    } else {
        f64::MIN_POSITIVE
    };

    let mut ridge_now = ridge.max(0.0);
    loop {
        let ridged = add_ridge(matrix, ridge_now);
        if let Some(factor) = try_cholesky(&ridged) {
            let log_det = 2.0 * factor.diag().iter().map(|v| v.ln()).sum::<f64>();
            return Ok(Covariance {
                matrix: ridged,
                factor,
                log_det,
                applied_ridge: ridge_now,
            });
        }
        let next = if ridge_now == 0.0 { floor } else { ridge_now * 10.0 };
        if next > cap || !next.is_finite() {
            return Err(Error::SingularCovariance {
                applied_ridge: ridge_now,
            });
        }
        ridge_now = next;
    }
}

fn add_ridge(matrix: &Array2<f64>, ridge: f64) -> Array2<f64> {
    let mut out = matrix.clone();
    if ridge != 0.0 {
        for i in 0..out.nrows() {
            out[[i, i]] += ridge;
        }
    }
    out
}

fn is_symmetric(m: &Array2<f64>) -> bool {
    let d = m.nrows();
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

/// `log Φ(x | μ, Σ) = −(d/2)·log 2π − ½·log det Σ − ½·‖L⁻¹(x−μ)‖²`.
///
/// The quadratic form is evaluated by forward substitution against the cached
/// factor; nothing underflow-prone is ever exponentiated.
pub fn log_density(x: ArrayView1<'_, f64>, comp: &GaussianComponent) -> Result<f64> {
    let d = comp.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let l = &comp.cov.factor;
    // Solve L·y = x − μ in place.
    let mut y = vec![0.0_f64; d];
    for i in 0..d {
        let mut v = x[i] - comp.mean[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    let quad: f64 = y.iter().map(|v| v * v).sum();
    Ok(-0.5 * d as f64 * LN_2PI - 0.5 * comp.cov.log_det - 0.5 * quad)
}

/// Max-shifted `log Σ exp(vᵢ)`; exact for a single element and well behaved
/// when every input is −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty(), "log_sum_exp needs at least one value");
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if values.len() == 1 {
        return values[0];
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
