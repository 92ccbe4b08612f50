//! Synthetic dataset generation from an explicit mixture specification.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::cholesky_regularized;
use crate::model::Dataset;

/// A ground-truth mixture to sample from: a weight simplex, K mean vectors,
/// and K SPD covariance matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

impl MixtureSpec {
    /// The univariate benchmark density 0.3·Φ(x,−2,1) + 0.7·Φ(x,2,1).
    pub fn example1() -> Self {
        Self {
            weights: vec![0.3, 0.7],
            means: vec![vec![-2.0], vec![2.0]],
            covariances: vec![vec![vec![1.0]], vec![vec![1.0]]],
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture spec needs K >= 1".into()));
        }
        if self.means.len() != k || self.covariances.len() != k {
            return Err(Error::InvalidArgument(format!(
                "spec has {} weights but {} means and {} covariances",
                k,
                self.means.len(),
                self.covariances.len()
            )));
        }
        if self.weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::InvalidArgument(
                "spec weights must be positive and finite".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "spec weights sum to {total}, expected 1"
            )));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("spec dimension must be >= 1".into()));
        }
        for (j, m) in self.means.iter().enumerate() {
            if m.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.len(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "mean of component {j} has a non-finite entry"
                )));
            }
        }
        for (j, c) in self.covariances.iter().enumerate() {
            if c.len() != d || c.iter().any(|row| row.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.len(),
                });
            }
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "covariance of component {j} has a non-finite entry"
                )));
            }
        }
        Ok(())
    }
}

/// Draw `n` points: a component index from the weights, then a Gaussian draw
/// from that component via its Cholesky factor. Labels record the drawing
/// component (0-based). Deterministic for a given seed.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    let k = spec.k();
    let d = spec.dim();

    // Factor every covariance once; a non-SPD covariance is a spec error.
    let mut factors = Vec::with_capacity(k);
    for (j, c) in spec.covariances.iter().enumerate() {
        let flat: Vec<f64> = c.iter().flatten().copied().collect();
        let m = Array2::from_shape_vec((d, d), flat).expect("validated shape");
        let cov = cholesky_regularized(&m, 0.0).map_err(|_| {
            Error::InvalidArgument(format!("covariance of component {j} is not SPD"))
        })?;
        if cov.applied_ridge() > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "covariance of component {j} is not SPD"
            )));
        }
        factors.push(cov.factor().to_owned());
    }
    let means: Vec<Array1<f64>> = spec.means.iter().map(|m| Array1::from_vec(m.clone())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picker = WeightedIndex::new(&spec.weights)
        .map_err(|e| Error::InvalidArgument(format!("bad mixture weights: {e}")))?;

    let mut points = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let j = picker.sample(&mut rng);
        labels.push(j as i64);
        let z = Array1::from_iter((0..d).map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v
        }));
        let x = &means[j] + &factors[j].dot(&z);
        points.row_mut(i).assign(&x);
    }
    Dataset::new(points, Some(labels))
}
