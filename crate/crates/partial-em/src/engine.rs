//! The EM loop with a pluggable partial E-step, plus its numerical kernels.
//!
//! One iteration performs, in order:
//!
//! 1. E-step on the current active set only — rows outside it keep their
//!    stale responsibilities;
//! 2. M-step over the *entire* responsibility matrix;
//! 3. observed log-likelihood of the new parameters and the convergence
//!    test `|Δ total log-likelihood| / N < tol`;
//! 4. policy update producing the next active set.
//!
//! The loop stops on convergence, on an empty next active set, or when the
//! iteration budget runs out.
//!
//! All reductions (M-step moments, log-likelihood, F values) are chunked:
//! per-chunk partial sums are computed in parallel, then combined
//! sequentially in chunk order, so every result is bit-identical no matter
//! how many threads run. The E-step parallelizes across rows and writes the
//! finished rows back in subset order for the same reason.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_regularized, log_density, log_sum_exp, GaussianComponent};
use crate::model::{
    hard_assign, ActiveState, ConfigEcho, Dataset, DensityEvals, MembershipMatrix, MixtureModel,
    RunReport, Termination,
};
use crate::policies::{full_update, ActiveSetPolicy, PolicyObs};

/// Rows per reduction chunk. Partials are combined sequentially in chunk
/// order, making parallel reductions deterministic.
const CHUNK: usize = 1024;

/// How the initial means are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    /// k-means++ D²-weighted selection of data points as means.
    #[default]
    KMeansPP,
    /// Uniformly sampled distinct data points as means.
    RandomPoints,
}

impl InitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitMethod::KMeansPP => "kmeans++",
            InitMethod::RandomPoints => "random_points",
        }
    }
}

/// Covariance structure estimated in the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovKind {
    #[default]
    Full,
    Diag,
}

impl CovKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CovKind::Full => "full",
            CovKind::Diag => "diag",
        }
    }
}

/// Everything a fit needs besides the data, K, and the policy.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Convergence threshold on |Δ total log-likelihood| / N. A negative
    /// value disables the test, turning `max_iter` into a fixed budget.
    pub tol: f64,
    pub max_iter: usize,
    /// Covariance ridge. `None` resolves to 1e-6 × the mean global variance
    /// of the data, so the default scales with the problem.
    pub ridge: Option<f64>,
    pub seed: u64,
    pub init: InitMethod,
    pub cov: CovKind,
    /// Record F after every half-step (doubles the density-evaluation cost).
    pub trace_f: bool,
    /// Size of the rayon pool to run under; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            ridge: None,
            seed: 0,
            init: InitMethod::KMeansPP,
            cov: CovKind::Full,
            trace_f: false,
            threads: None,
        }
    }
}

/// A completed fit: final parameters, the responsibility matrix as the loop
/// left it (stale rows included), and the full run report.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MixtureModel,
    pub membership: MembershipMatrix,
    pub report: RunReport,
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect()
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-dimension biased variances of the whole dataset.
fn global_diag_variances(data: &Dataset) -> Array1<f64> {
    let n = data.n();
    let d = data.d();
    let pts = data.points();
    let mut mean = Array1::<f64>::zeros(d);
    for i in 0..n {
        mean += &pts.row(i);
    }
    mean /= n as f64;
    let mut var = Array1::<f64>::zeros(d);
    for i in 0..n {
        for j in 0..d {
            let diff = pts[[i, j]] - mean[j];
            var[j] += diff * diff;
        }
    }
    var / n as f64
}

/// The ridge a config resolves to on this dataset: the explicit value if one
/// was given, otherwise 1e-6 × the mean global variance.
pub fn resolve_ridge(data: &Dataset, config: &FitConfig) -> f64 {
    match config.ridge {
        Some(r) => r,
        None => {
            let var = global_diag_variances(data);
            1e-6 * var.mean().unwrap_or(0.0)
        }
    }
}

/// Recompute responsibilities for the rows in `subset`; all other rows keep
/// their previous values. Returns the number of density evaluations spent
/// (|subset| · K).
pub fn e_step(
    data: &Dataset,
    model: &MixtureModel,
    subset: &[usize],
    w: &mut MembershipMatrix,
) -> Result<usize> {
    let k = model.k();
    if data.d() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.d(),
        });
    }
    if w.n() != data.n() || w.k() != k {
        return Err(Error::ShapeMismatch {
            a_rows: w.n(),
            a_cols: w.k(),
            b_rows: data.n(),
            b_cols: k,
        });
    }
    let log_weights: Vec<f64> = model.components().iter().map(|c| c.weight.ln()).collect();
    let rows: Vec<Vec<f64>> = subset
        .par_iter()
        .map(|&n| -> Result<Vec<f64>> {
            let x = data.point(n);
            let mut logs = vec![0.0; k];
            for (j, comp) in model.components().iter().enumerate() {
                logs[j] = log_weights[j] + log_density(x, comp)?;
            }
            let lse = log_sum_exp(&logs);
            Ok(logs.iter().map(|&l| (l - lse).exp()).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    for (&n, row) in subset.iter().zip(rows.iter()) {
        w.set_row(n, row);
    }
    Ok(subset.len() * k)
}

/// M-step over the full responsibility matrix with full covariances.
pub fn m_step(data: &Dataset, w: &MembershipMatrix, ridge: f64) -> Result<MixtureModel> {
    m_step_with(data, w, ridge, CovKind::Full)
}

/// M-step with a choice of covariance structure.
///
/// Uses the closed forms: π_k = N_k/N, μ_k = Σ w·x / N_k, Σ_k the biased
/// responsibility-weighted scatter around μ_k. A component whose mass N_k
/// falls below 10·ε·N has collapsed; it is reseeded at the point the current
/// model explains worst (lowest maximum responsibility), given the global
/// diagonal covariance and weight 1/K, and the weights are renormalized.
pub fn m_step_with(
    data: &Dataset,
    w: &MembershipMatrix,
    ridge: f64,
    cov: CovKind,
) -> Result<MixtureModel> {
    let n = data.n();
    let d = data.d();
    let k = w.k();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot run an M-step on an empty dataset".into(),
        ));
    }
    if w.n() != n {
        return Err(Error::ShapeMismatch {
            a_rows: w.n(),
            a_cols: k,
            b_rows: n,
            b_cols: d,
        });
    }
    let ranges = chunk_ranges(n);
    let wm = w.weights();
    let pts = data.points();

    // First pass: component masses and weighted coordinate sums.
    let moment_partials: Vec<(Array1<f64>, Array2<f64>)> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let mut nk = Array1::<f64>::zeros(k);
            let mut sums = Array2::<f64>::zeros((k, d));
            for i in s..e {
                let x = pts.row(i);
                for j in 0..k {
                    let wij = wm[[i, j]];
                    nk[j] += wij;
                    if wij != 0.0 {
                        sums.row_mut(j).scaled_add(wij, &x);
                    }
                }
            }
            (nk, sums)
        })
        .collect();
    let mut nk = Array1::<f64>::zeros(k);
    let mut sums = Array2::<f64>::zeros((k, d));
    for (pn, ps) in &moment_partials {
        nk += pn;
        sums += ps;
    }

    let collapse_floor = 10.0 * f64::EPSILON * n as f64;
    let collapsed: Vec<bool> = (0..k).map(|j| nk[j] < collapse_floor).collect();

    let mut means = Array2::<f64>::zeros((k, d));
    for j in 0..k {
        if !collapsed[j] {
            let mj = &sums.row(j) / nk[j];
            means.row_mut(j).assign(&mj);
        }
    }

    // Reseed collapsed components at the worst-explained points: those with
    // the lowest maximum responsibility (ties broken by index).
    let n_collapsed = collapsed.iter().filter(|&&c| c).count();
    if n_collapsed > 0 {
        let mut worst: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let m = w.row(i).iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                (m, i)
            })
            .collect();
        worst.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut slot = 0usize;
        for j in 0..k {
            if collapsed[j] {
                let pick = worst[slot.min(n - 1)].1;
                slot += 1;
                means.row_mut(j).assign(&pts.row(pick));
                log::warn!(
                    "component {j} collapsed (mass {:.3e} < {:.3e}); reseeding at point {pick}",
                    nk[j],
                    collapse_floor
                );
            }
        }
    }

    // Second pass: responsibility-weighted scatter around the new means.
    let scatter_partials: Vec<Vec<Array2<f64>>> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let mut scat = vec![Array2::<f64>::zeros((d, d)); k];
            for i in s..e {
                let x = pts.row(i);
                for j in 0..k {
                    if collapsed[j] {
                        continue;
                    }
                    let wij = wm[[i, j]];
                    if wij == 0.0 {
                        continue;
                    }
                    match cov {
                        CovKind::Full => {
                            for a in 0..d {
                                let da = (x[a] - means[[j, a]]) * wij;
                                for b in a..d {
                                    scat[j][[a, b]] += da * (x[b] - means[[j, b]]);
                                }
                            }
                        }
                        CovKind::Diag => {
                            for a in 0..d {
                                let da = x[a] - means[[j, a]];
                                scat[j][[a, a]] += wij * da * da;
                            }
                        }
                    }
                }
            }
            scat
        })
        .collect();
    let mut scatters = vec![Array2::<f64>::zeros((d, d)); k];
    for chunk in &scatter_partials {
        for (total, part) in scatters.iter_mut().zip(chunk.iter()) {
            *total += part;
        }
    }

    let global_diag = if n_collapsed > 0 {
        Some(Array2::from_diag(&global_diag_variances(data)))
    } else {
        None
    };

    let mut raw_weights = vec![0.0; k];
    for j in 0..k {
        raw_weights[j] = if collapsed[j] {
            1.0 / k as f64
        } else {
            nk[j] / n as f64
        };
    }
    let weight_total: f64 = raw_weights.iter().sum();

    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let cov_matrix = if collapsed[j] {
            global_diag.as_ref().unwrap().clone()
        } else {
            let mut s = &scatters[j] / nk[j];
            // Mirror the accumulated upper triangle.
            for a in 0..d {
                for b in (a + 1)..d {
                    s[[b, a]] = s[[a, b]];
                }
            }
            s
        };
        components.push(GaussianComponent {
            mean: means.row(j).to_owned(),
            cov: cholesky_regularized(&cov_matrix, ridge)?,
            weight: raw_weights[j] / weight_total,
        });
    }
    MixtureModel::new(components)
}

/// Total observed log-likelihood Σ_n log Σ_k π_k φ_k(x_n).
pub fn observed_loglik(data: &Dataset, model: &MixtureModel) -> Result<f64> {
    let k = model.k();
    if data.d() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.d(),
        });
    }
    let log_weights: Vec<f64> = model.components().iter().map(|c| c.weight.ln()).collect();
    let partials: Vec<f64> = chunk_ranges(data.n())
        .par_iter()
        .map(|&(s, e)| -> Result<f64> {
            let mut acc = 0.0;
            let mut logs = vec![0.0; k];
            for i in s..e {
                let x = data.point(i);
                for (j, comp) in model.components().iter().enumerate() {
                    logs[j] = log_weights[j] + log_density(x, comp)?;
                }
                acc += log_sum_exp(&logs);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(partials.iter().sum())
}

/// The free-energy lower bound
/// F(Θ, q) = Σ_n Σ_k q_nk (log π_k + log φ_k(x_n)) + Σ_n H(q_n),
/// with 0·log 0 = 0. Tight (equal to the observed log-likelihood) exactly
/// when q is the posterior under Θ.
pub fn f_function(data: &Dataset, model: &MixtureModel, q: &MembershipMatrix) -> Result<f64> {
    let k = model.k();
    if data.d() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.d(),
        });
    }
    if q.n() != data.n() || q.k() != k {
        return Err(Error::ShapeMismatch {
            a_rows: q.n(),
            a_cols: q.k(),
            b_rows: data.n(),
            b_cols: k,
        });
    }
    let log_weights: Vec<f64> = model.components().iter().map(|c| c.weight.ln()).collect();
    let qm = q.weights();
    let partials: Vec<f64> = chunk_ranges(data.n())
        .par_iter()
        .map(|&(s, e)| -> Result<f64> {
            let mut acc = 0.0;
            for i in s..e {
                let x = data.point(i);
                for (j, comp) in model.components().iter().enumerate() {
                    let qij = qm[[i, j]];
                    if qij > 0.0 {
                        let log_joint = log_weights[j] + log_density(x, comp)?;
                        acc += qij * (log_joint - qij.ln());
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(partials.iter().sum())
}

/// The stopping rule: |cur − prev| / N < tol on total log-likelihoods.
pub fn converged(prev_total: f64, cur_total: f64, n: usize, tol: f64) -> bool {
    ((cur_total - prev_total).abs() / n as f64) < tol
}

/// k-means++ D²-weighted selection of `k` distinct row indices.
pub(crate) fn kmeans_pp_select(
    points: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InitFailure(format!(
            "cannot choose {k} centers from {n} points"
        )));
    }
    let mut chosen = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let dist = WeightedIndex::new(&d2)
                .map_err(|e| Error::InitFailure(format!("degenerate D² weights: {e}")))?;
            dist.sample(rng)
        } else {
            // Every remaining point coincides with a chosen center; fall back
            // to a uniform pick among unchosen indices.
            let unchosen: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unchosen[rng.random_range(0..unchosen.len())]
        };
        chosen.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            let dd = sq_dist(points.row(i), points.row(next));
            if dd < *slot {
                *slot = dd;
            }
        }
    }
    Ok(chosen)
}

/// Build the starting model: means are data points chosen by `config.init`,
/// every covariance is the global diagonal covariance (plus ridge), and the
/// weights are uniform.
pub fn initialize(data: &Dataset, k: usize, config: &FitConfig) -> Result<MixtureModel> {
    let n = data.n();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot initialize from an empty dataset".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InitFailure(format!(
            "k = {k} exceeds the number of data points {n}"
        )));
    }
    let ridge = resolve_ridge(data, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let indices = match config.init {
        InitMethod::KMeansPP => kmeans_pp_select(data.points(), k, &mut rng)?,
        InitMethod::RandomPoints => rand::seq::index::sample(&mut rng, n, k).into_vec(),
    };
    let cov_matrix = Array2::from_diag(&global_diag_variances(data));
    let weight = 1.0 / k as f64;
    let mut components = Vec::with_capacity(k);
    for &idx in &indices {
        components.push(GaussianComponent {
            mean: data.point(idx).to_owned(),
            cov: cholesky_regularized(&cov_matrix, ridge)?,
            weight,
        });
    }
    MixtureModel::new(components)
}

/// Run EM to termination under the given active-set policy.
pub fn fit(
    data: &Dataset,
    k: usize,
    policy: &dyn ActiveSetPolicy,
    config: &FitConfig,
) -> Result<FitResult> {
    match config.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("failed to build thread pool: {e}")))?;
            pool.install(|| fit_inner(data, k, policy, config))
        }
        None => fit_inner(data, k, policy, config),
    }
}

fn fit_inner(
    data: &Dataset,
    k: usize,
    policy: &dyn ActiveSetPolicy,
    config: &FitConfig,
) -> Result<FitResult> {
    let start = Instant::now();
    let n = data.n();
    let ridge = resolve_ridge(data, config);
    let mut model = initialize(data, k, config)?;
    let mut w = MembershipMatrix::uniform(n, k);
    let mut state = ActiveState::new(n);
    let mut active = full_update(n);

    let mut loglik_trace = Vec::new();
    let mut f_trace = Vec::new();
    let mut active_counts = Vec::new();
    let mut evals = DensityEvals::default();
    let full_pass = (n as u64) * (k as u64);

    let mut prev_total = f64::NAN;
    let mut termination = Termination::MaxIterations;
    let mut iterations = config.max_iter;

    for i in 0..config.max_iter {
        active_counts.push(active.len());
        evals.e_step += e_step(data, &model, &active, &mut w)? as u64;
        if config.trace_f {
            f_trace.push(f_function(data, &model, &w)?);
            evals.f_function += full_pass;
        }
        model = m_step_with(data, &w, ridge, config.cov)?;
        if config.trace_f {
            f_trace.push(f_function(data, &model, &w)?);
            evals.f_function += full_pass;
        }
        let total = observed_loglik(data, &model)?;
        evals.loglik += full_pass;
        loglik_trace.push(total / n as f64);

        if i > 0 && converged(prev_total, total, n, config.tol) {
            termination = Termination::Converged;
            iterations = i + 1;
            break;
        }
        prev_total = total;

        let assignments = hard_assign(&w);
        let obs = PolicyObs {
            w: &w,
            assignments: &assignments,
            active: &active,
            iteration: i,
        };
        let next = policy.next_active(&obs, &mut state);
        if next.is_empty() {
            termination = Termination::ActiveSetEmpty;
            iterations = i + 1;
            break;
        }
        active = next;
    }

    let report = RunReport {
        iterations,
        termination,
        loglik_trace,
        f_trace,
        active_counts,
        density_evals: evals.finish(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        final_model: model.clone(),
        config_echo: ConfigEcho {
            k,
            policy: policy.name(),
            tol: config.tol,
            max_iter: config.max_iter,
            ridge,
            seed: config.seed,
            init: config.init.as_str().to_string(),
            cov: config.cov.as_str().to_string(),
            trace_f: config.trace_f,
            threads: config.threads,
        },
    };
    Ok(FitResult {
        model,
        membership: w,
        report,
    })
}
