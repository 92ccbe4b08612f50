//! Core data containers: observations, mixture parameters, responsibilities,
//! per-point policy state, and the run report.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianComponent;

/// An N×d observation matrix with optional integer ground-truth labels.
///
/// Labels ride along for evaluation only; fitting never reads them.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    /// Build a dataset, validating finiteness and label length.
    ///
    /// N = 0 is representable (e.g. an ingest filter that matched nothing) but
    /// rejected by `initialize`/`fit`, which require N ≥ 1.
    pub fn new(points: Array2<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if points.nrows() > 0 && points.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if let Some(bad) = points.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite observation entry {bad}"
            )));
        }
        if let Some(ref l) = labels {
            if l.len() != points.nrows() {
                return Err(Error::ShapeMismatch {
                    a_rows: l.len(),
                    a_cols: 1,
                    b_rows: points.nrows(),
                    b_cols: 1,
                });
            }
        }
        Ok(Self { points, labels })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, n: usize) -> ArrayView1<'_, f64> {
        self.points.row(n)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Replace the point matrix (e.g. after a PCA projection), keeping labels.
    pub fn with_points(&self, points: Array2<f64>) -> Result<Self> {
        Self::new(points, self.labels.clone())
    }
}

/// The mixture parameter set Θ: K components over a shared dimension.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
}

impl MixtureModel {
    /// Build a model, validating weight normalization and dimension agreement.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs K >= 1".into()));
        }
        let d = components[0].dim();
        for c in &components {
            if c.dim() != d || c.cov.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
            if c.weight.is_nan() || c.weight <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "component weight {} must be positive",
                    c.weight
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }
}

/// The N×K row-stochastic responsibility matrix w (the q distributions).
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    weights: Array2<f64>,
}

impl MembershipMatrix {
    /// Uniform responsibilities 1/K — the state before any E-step.
    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            weights: Array2::from_elem((n, k), 1.0 / k as f64),
        }
    }

    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        let m = Self { weights };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn k(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.weights.row(n)
    }

    pub(crate) fn set_row(&mut self, n: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.k());
        for (j, v) in values.iter().enumerate() {
            self.weights[[n, j]] = *v;
        }
    }

    /// Check the row-stochastic invariant: entries in [0,1], rows sum to 1
    /// within 1e-10.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.weights.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for &v in row.iter() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "membership entry {v} outside [0,1] in row {i}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "membership row {i} sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Serialize to CSV with header `point_id,w_0,…,w_{K−1}` at 17
    /// significant digits (exact f64 round trip).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "point_id")?;
        for k in 0..self.k() {
            write!(out, ",w_{k}")?;
        }
        writeln!(out)?;
        for (i, row) in self.weights.rows().into_iter().enumerate() {
            write!(out, "{i}")?;
            for v in row.iter() {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Row-wise argmax with ties broken toward the lowest component index.
pub fn hard_assign(w: &MembershipMatrix) -> Vec<usize> {
    w.weights
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

/// Per-point policy bookkeeping: current cluster, consecutive-assignment
/// streak, and the active flag.
///
/// `streak[n] == 0` means point n has never been assigned; `cluster[n]` is
/// meaningful only once the streak is positive.
#[derive(Debug, Clone)]
pub struct ActiveState {
    pub cluster: Vec<usize>,
    pub streak: Vec<u32>,
    pub active: Vec<bool>,
}

impl ActiveState {
    pub fn new(n: usize) -> Self {
        Self {
            cluster: vec![0; n],
            streak: vec![0; n],
            active: vec![true; n],
        }
    }

    pub fn n(&self) -> usize {
        self.active.len()
    }
}

/// Why a fit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    ActiveSetEmpty,
    MaxIterations,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::Converged => "converged",
            Termination::ActiveSetEmpty => "active_set_empty",
            Termination::MaxIterations => "max_iterations",
        };
        f.write_str(s)
    }
}

/// Density-evaluation counters, split by purpose so E-step work can be
/// compared across policies without the convergence-test overhead muddying
/// the numbers.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct DensityEvals {
    /// Evaluations spent computing responsibilities for active points.
    pub e_step: u64,
    /// Evaluations spent on the per-iteration observed log-likelihood.
    pub loglik: u64,
    /// Evaluations spent on optional F-function tracing.
    pub f_function: u64,
    /// Sum of the above.
    pub total: u64,
}

impl DensityEvals {
    pub(crate) fn finish(mut self) -> Self {
        self.total = self.e_step + self.loglik + self.f_function;
        self
    }
}

/// JSON-friendly view of a mixture model: `weights`, `means`, `covariances`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

impl From<&MixtureModel> for ModelJson {
    fn from(m: &MixtureModel) -> Self {
        let weights = m.components().iter().map(|c| c.weight).collect();
        let means = m
            .components()
            .iter()
            .map(|c| c.mean.to_vec())
            .collect();
        let covariances = m
            .components()
            .iter()
            .map(|c| {
                c.cov
                    .matrix()
                    .rows()
                    .into_iter()
                    .map(|r| r.to_vec())
                    .collect()
            })
            .collect();
        Self {
            weights,
            means,
            covariances,
        }
    }
}

/// Echo of the configuration that produced a report, for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub policy: String,
    pub tol: f64,
    pub max_iter: usize,
    /// The ridge actually used (explicit value or the resolved default).
    pub ridge: f64,
    pub seed: u64,
    pub init: String,
    pub cov: String,
    pub trace_f: bool,
    pub threads: Option<usize>,
}

/// Everything observable about one fit: traces, counters, final parameters.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub iterations: usize,
    pub termination: Termination,
    /// Observed mean log-likelihood after each iteration's M-step.
    pub loglik_trace: Vec<f64>,
    /// F values after each half-step, alternating post-E, post-M; empty
    /// unless F tracing was enabled.
    pub f_trace: Vec<f64>,
    /// |A_X| at the start of each iteration.
    pub active_counts: Vec<usize>,
    pub density_evals: DensityEvals,
    pub wall_time_secs: f64,
    #[serde(rename = "model", serialize_with = "serialize_model")]
    pub final_model: MixtureModel,
    pub config_echo: ConfigEcho,
}

fn serialize_model<S>(model: &MixtureModel, ser: S) -> std::result::Result<S::Ok, S::Error>
where
    S: serde::Serializer,
{
    ModelJson::from(model).serialize(ser)
}
