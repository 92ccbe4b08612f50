//! PCA preprocessing: eigendecomposition of the global covariance with a
//! deterministic sign convention.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// A fitted projection: the data mean, an orthonormal D×d basis (columns are
/// principal directions, strongest first), and the variance each direction
/// explains.
#[derive(Debug, Clone)]
pub struct PcaTransform {
    pub mean: Array1<f64>,
    pub basis: Array2<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaTransform {
    pub fn d_in(&self) -> usize {
        self.basis.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.basis.ncols()
    }

    /// Project a dataset onto the retained subspace; labels ride along.
    pub fn project(&self, data: &Dataset) -> Result<Dataset> {
        if data.d() != self.d_in() {
            return Err(Error::DimensionMismatch {
                expected: self.d_in(),
                got: data.d(),
            });
        }
        let mut centered = data.points().to_owned();
        for mut row in centered.rows_mut() {
            row -= &self.mean;
        }
        let projected = centered.dot(&self.basis);
        Dataset::new(projected, data.labels().map(|l| l.to_vec()))
    }
}

/// Fit a `d_out`-dimensional PCA: eigendecompose the biased covariance of
/// the data and keep the top `d_out` eigenpairs by eigenvalue.
///
/// Each basis vector's sign is fixed so its largest-magnitude entry is
/// positive, making the transform reproducible. Fails with `RankDeficient`
/// if the covariance has fewer than `d_out` positive eigenvalues.
pub fn fit_pca(data: &Dataset, d_out: usize) -> Result<PcaTransform> {
    let n = data.n();
    let d = data.d();
    if d_out == 0 {
        return Err(Error::InvalidArgument("d_out must be at least 1".into()));
    }
    if d_out > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "d_out = {d_out} exceeds min(N, D) = {}",
            n.min(d)
        )));
    }

    let mut mean = Array1::<f64>::zeros(d);
    for i in 0..n {
        mean += &data.point(i);
    }
    mean /= n as f64;

    let mut centered = data.points().to_owned();
    for mut row in centered.rows_mut() {
        row -= &mean;
    }
    let cov = centered.t().dot(&centered) / n as f64;

    let cov_na = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = cov_na.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let positive = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > lambda_max * 1e-12 && eig.eigenvalues[i] > 0.0)
        .count();
    if positive < d_out {
        return Err(Error::RankDeficient {
            positive,
            requested: d_out,
        });
    }

    let mut basis = Array2::<f64>::zeros((d, d_out));
    let mut explained_variance = Vec::with_capacity(d_out);
    for (col, &src) in order[..d_out].iter().enumerate() {
        explained_variance.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        // Deterministic sign: the largest-magnitude entry is positive.
        let mut pivot = 0usize;
        for i in 1..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let flip = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            basis[[i, col]] = flip * v[i];
        }
    }

    Ok(PcaTransform {
        mean,
        basis,
        explained_variance,
    })
}
