//! Acceptance gate: one test per criterion, each ending in a single
//! `ACCEPTANCE C<n> <name>: PASS` line (a panic conveys FAIL).
//!
//! Shared fixtures are built once behind `OnceLock`s: the 1-d two-component
//! benchmark dataset and the digit-image block (2000 synthetic images of the
//! classes {1,2,4,5,6}, round-tripped through the IDX loader, projected to
//! 50 principal components, then fitted under a fixed 60-iteration budget by
//! the full policy and five tau policies).

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use ndarray::Array2;
use partial_em::{
    classification_error, cholesky_regularized, confusion_matrix, converged, e_step, f_function,
    fit, fit_pca, full_update, hard_assign, initialize, kmeans, load_idx, log_density, m_step,
    membership_error, observed_loglik, resolve_ridge, sample_mixture, save_idx_images,
    save_idx_labels, ActiveSetPolicy, ActiveState, ConfusionMatrix, Dataset, FitConfig, FitResult,
    Full, GaussianComponent, Lazy, LazyConfig, MembershipMatrix, MixtureModel, MixtureSpec,
    PolicyObs, Star, StarConfig, Tau, Termination, LN_2PI,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seed for the 1-d benchmark sample (criteria 1–4, 7, 11).
const C4_DATA_SEED: u64 = 0;
/// Seed for the synthetic digit images (criteria 5–7).
const C56_GEN_SEED: u64 = 1;

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

static EXAMPLE1: OnceLock<Dataset> = OnceLock::new();

/// 1000 points from the 1-d mixture 0.3·N(−2,1) + 0.7·N(2,1).
fn example1_data() -> &'static Dataset {
    EXAMPLE1.get_or_init(|| {
        sample_mixture(&MixtureSpec::example1(), 1000, C4_DATA_SEED).expect("benchmark sample")
    })
}

struct DigitsBlock {
    data: Dataset,
    full: FitResult,
    /// (tau, fit) for tau in {5, 10, 15, 20, 25}.
    taus: Vec<(u32, FitResult)>,
    /// Active sets returned by the tau=10 policy, in order.
    tau10_sets: Vec<Vec<usize>>,
    build_secs: f64,
}

static DIGITS: OnceLock<DigitsBlock> = OnceLock::new();

fn digits_block() -> &'static DigitsBlock {
    DIGITS.get_or_init(|| {
        let start = Instant::now();
        let (pixels, labels) = common::surrogate_digits(400, C56_GEN_SEED);

        // Round-trip through the IDX loader with the digit filter, exactly as
        // a real image corpus would enter.
        let dir = tempfile::tempdir().expect("tempdir");
        let images_path = dir.path().join("images.idx");
        let labels_path = dir.path().join("labels.idx");
        save_idx_images(&images_path, pixels.view(), 28, 28).expect("write images");
        save_idx_labels(&labels_path, &labels).expect("write labels");
        let data = load_idx(&images_path, &labels_path, Some(&[1, 2, 4, 5, 6])).expect("load idx");
        assert_eq!(data.n(), 2000, "all five classes survive the filter");

        let transform = fit_pca(&data, 50).expect("pca");
        let data = transform.project(&data).expect("projection");

        // Fixed budget so every policy sees the identical iteration window.
        let config = FitConfig {
            tol: -1.0,
            max_iter: 60,
            seed: 0,
            ..FitConfig::default()
        };
        let full = fit(&data, 5, &Full, &config).expect("full fit");
        let mut taus = Vec::new();
        let mut tau10_sets = Vec::new();
        for tau in [5u32, 10, 15, 20, 25] {
            let result = if tau == 10 {
                let recorder = Recording::new(Tau::new(10));
                let r = fit(&data, 5, &recorder, &config).expect("tau fit");
                tau10_sets = recorder.into_log();
                r
            } else {
                fit(&data, 5, &Tau::new(tau), &config).expect("tau fit")
            };
            taus.push((tau, result));
        }
        DigitsBlock {
            data,
            full,
            taus,
            tau10_sets,
            build_secs: start.elapsed().as_secs_f64(),
        }
    })
}

/// Policy wrapper that logs every active set the inner policy returns.
struct Recording<P> {
    inner: P,
    log: Mutex<Vec<Vec<usize>>>,
}

impl<P> Recording<P> {
    fn new(inner: P) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    fn into_log(self) -> Vec<Vec<usize>> {
        self.log.into_inner().expect("log mutex")
    }
}

impl<P: ActiveSetPolicy> ActiveSetPolicy for Recording<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn next_active(&self, obs: &PolicyObs<'_>, state: &mut ActiveState) -> Vec<usize> {
        let next = self.inner.next_active(obs, state);
        self.log.lock().expect("log mutex").push(next.clone());
        next
    }
}

/// Is `sub` (sorted, deduped) a subset of `sup` (sorted, deduped)?
fn is_subset(sub: &[usize], sup: &[usize]) -> bool {
    let mut it = sup.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

/// Flatten (weight, mean, variance) per component, sorted by mean ascending.
/// Only meaningful for 1-d models.
fn sorted_params_1d(model: &MixtureModel) -> Vec<f64> {
    let mut comps: Vec<(f64, f64, f64)> = model
        .components()
        .iter()
        .map(|c| (c.weight, c.mean[0], c.cov.matrix()[[0, 0]]))
        .collect();
    comps.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite means"));
    comps.into_iter().flat_map(|(w, m, v)| [w, m, v]).collect()
}

/// Every parameter of the model in component order: weight, mean entries,
/// covariance entries.
fn flatten_params(model: &MixtureModel) -> Vec<f64> {
    let mut out = Vec::new();
    for c in model.components() {
        out.push(c.weight);
        out.extend(c.mean.iter().copied());
        out.extend(c.cov.matrix().iter().copied());
    }
    out
}

// ---------------------------------------------------------------------------
// Criterion 1: a tau beyond any reachable streak reduces to the full policy
// ---------------------------------------------------------------------------

struct ManualTrace {
    params: Vec<Vec<f64>>,
    loglik: Vec<f64>,
}

/// Drive the EM loop through the public kernels, recording the parameters
/// after every M-step. Mirrors the packaged fit loop operation for operation.
fn manual_em(
    data: &Dataset,
    k: usize,
    policy: &dyn ActiveSetPolicy,
    config: &FitConfig,
) -> ManualTrace {
    let n = data.n();
    let ridge = resolve_ridge(data, config);
    let mut model = initialize(data, k, config).expect("init");
    let mut w = MembershipMatrix::uniform(n, k);
    let mut state = ActiveState::new(n);
    let mut active = full_update(n);
    let mut params = Vec::new();
    let mut loglik = Vec::new();
    let mut prev_total = f64::NAN;
    for i in 0..config.max_iter {
        e_step(data, &model, &active, &mut w).expect("e-step");
        model = m_step(data, &w, ridge).expect("m-step");
        params.push(flatten_params(&model));
        let total = observed_loglik(data, &model).expect("loglik");
        loglik.push(total / n as f64);
        if i > 0 && converged(prev_total, total, n, config.tol) {
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
            break;
        }
        active = next;
    }
    ManualTrace { params, loglik }
}

#[test]
fn c01_unreachable_tau_reduces_to_full_policy() {
    let start = Instant::now();
    let data = example1_data();
    let config = FitConfig::default();
    let tau_inf = Tau::new((10 * config.max_iter) as u32);

    let full_trace = manual_em(data, 2, &Full, &config);
    let tau_trace = manual_em(data, 2, &tau_inf, &config);
    assert_eq!(
        full_trace.params.len(),
        tau_trace.params.len(),
        "both policies must run the same number of iterations"
    );
    let mut max_diff = 0.0_f64;
    for (a, b) in full_trace.params.iter().zip(&tau_trace.params) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            max_diff = max_diff.max((x - y).abs());
        }
    }
    assert!(
        max_diff <= 1e-12,
        "per-iteration parameter traces diverged by {max_diff:.3e}"
    );

    // The packaged fit must agree with the kernel-level loop bit for bit.
    let fit_full = fit(data, 2, &Full, &config).expect("full fit");
    let fit_tau = fit(data, 2, &tau_inf, &config).expect("tau fit");
    assert_eq!(fit_full.report.loglik_trace, full_trace.loglik);
    assert_eq!(fit_tau.report.loglik_trace, tau_trace.loglik);
    assert_eq!(fit_full.report.iterations, full_trace.params.len());

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion took {elapsed:.1}s, budget is 5s");
    println!(
        "ACCEPTANCE C1 unreachable-tau reduction: PASS \
         ({} iterations, max param diff {max_diff:.1e}, {elapsed:.2}s)",
        full_trace.params.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: full-policy log-likelihood never decreases
// ---------------------------------------------------------------------------

#[test]
fn c02_full_policy_loglik_is_monotone() {
    let mut worst = f64::INFINITY;
    for seed in 0..20u64 {
        let data = sample_mixture(&MixtureSpec::example1(), 1000, seed).expect("sample");
        let config = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let result = fit(&data, 2, &Full, &config).expect("fit");
        let trace = &result.report.loglik_trace;
        for i in 1..trace.len() {
            let step = trace[i] - trace[i - 1];
            worst = worst.min(step);
            assert!(
                step >= -1e-10,
                "seed {seed}: log-likelihood fell by {step:.3e} at iteration {i}"
            );
        }
    }
    println!("ACCEPTANCE C2 monotone likelihood: PASS (20 seeds, worst step {worst:.1e})");
}

// ---------------------------------------------------------------------------
// Criterion 3: partial E-steps still improve F; F is tight after full E-steps
// ---------------------------------------------------------------------------

#[test]
fn c03_f_function_monotone_and_tight() {
    let data = example1_data();
    let n = data.n();
    let mut min_increment = f64::INFINITY;
    let mut max_gap = 0.0_f64;
    for tau in [3u32, 10] {
        for seed in 0..10u64 {
            let config = FitConfig {
                seed,
                trace_f: true,
                ..FitConfig::default()
            };
            let result = fit(data, 2, &Tau::new(tau), &config).expect("fit");
            let f = &result.report.f_trace;
            assert_eq!(f.len(), 2 * result.report.iterations);

            // The first E-step's increment is measured against the uniform
            // starting responsibilities.
            let model0 = initialize(data, 2, &config).expect("init");
            let w0 = MembershipMatrix::uniform(n, 2);
            let f_start = f_function(data, &model0, &w0).expect("f");
            min_increment = min_increment.min(f[0] - f_start);
            assert!(
                f[0] >= f_start - 1e-10,
                "tau {tau} seed {seed}: first E-step lowered F by {:.3e}",
                f_start - f[0]
            );
            for i in 1..f.len() {
                let inc = f[i] - f[i - 1];
                min_increment = min_increment.min(inc);
                assert!(
                    inc >= -1e-10,
                    "tau {tau} seed {seed}: F fell by {inc:.3e} at half-step {i}"
                );
            }

            // After any full E-step, F equals the observed log-likelihood of
            // the model the E-step used.
            let counts = &result.report.active_counts;
            let loglik = &result.report.loglik_trace;
            for (i, &count) in counts.iter().enumerate() {
                if count < n {
                    continue;
                }
                let expected = if i == 0 {
                    observed_loglik(data, &model0).expect("loglik")
                } else {
                    loglik[i - 1] * n as f64
                };
                let gap = (f[2 * i] - expected).abs();
                max_gap = max_gap.max(gap);
                assert!(
                    gap <= 1e-10,
                    "tau {tau} seed {seed}: F is {gap:.3e} away from the \
                     log-likelihood after the full E-step at iteration {i}"
                );
            }
        }
    }
    println!(
        "ACCEPTANCE C3 F-function monotonicity and tightness: PASS \
         (min increment {min_increment:.1e}, max tightness gap {max_gap:.1e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: 1-d benchmark finals, and tau(50)/tau(60) matching full
// ---------------------------------------------------------------------------

#[test]
fn c04_benchmark_finals_and_large_tau_agreement() {
    let data = example1_data();
    let target = [0.29, -2.12, 0.98, 0.71, 2.0, 1.13];
    let mut passes = 0;
    let mut tau_max_diff = 0.0_f64;
    for seed in 0..10u64 {
        let config = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let full = fit(data, 2, &Full, &config).expect("full fit");
        let params = sorted_params_1d(&full.model);
        let in_box = params
            .iter()
            .zip(&target)
            .all(|(got, want)| (got - want).abs() <= 0.15);
        if !in_box {
            continue;
        }
        passes += 1;
        for tau in [50u32, 60] {
            let partial = fit(data, 2, &Tau::new(tau), &config).expect("tau fit");
            let tau_params = sorted_params_1d(&partial.model);
            for (a, b) in params.iter().zip(&tau_params) {
                let diff = (a - b).abs();
                tau_max_diff = tau_max_diff.max(diff);
                assert!(
                    diff <= 0.02,
                    "seed {seed} tau {tau}: final parameter differs from full by {diff:.4}"
                );
            }
        }
    }
    assert!(
        passes >= 8,
        "only {passes}/10 seeds landed within 0.15 of the benchmark parameters"
    );
    println!(
        "ACCEPTANCE C4 benchmark finals: PASS \
         ({passes}/10 seeds in the box, tau(50)/tau(60) diff <= {tau_max_diff:.1e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: membership error shrinks with tau on the digit block
// ---------------------------------------------------------------------------

#[test]
fn c05_digit_block_membership_error_trend() {
    let block = digits_block();
    let labels = block.data.labels().expect("labeled data");
    let full_ce =
        classification_error(&hard_assign(&block.full.membership), labels).expect("ce");

    let mut errors = Vec::new();
    for (tau, result) in &block.taus {
        let me = membership_error(&result.membership, &block.full.membership).expect("me");
        errors.push((*tau, me));
    }
    for pair in errors.windows(2) {
        assert!(
            pair[1].1 <= pair[0].1 + 1e-9,
            "membership error rose from tau {} ({:.4}) to tau {} ({:.4})",
            pair[0].0,
            pair[0].1,
            pair[1].0,
            pair[1].1
        );
    }
    let (_, me25) = *errors.last().expect("five taus");
    assert!(me25 < 0.01, "membership error at tau=25 is {me25:.4}");

    let tau25 = &block.taus.last().expect("five taus").1;
    let ce25 = classification_error(&hard_assign(&tau25.membership), labels).expect("ce");
    assert!(
        (ce25 - full_ce).abs() <= 0.005,
        "classification error at tau=25 ({ce25:.4}) is too far from full ({full_ce:.4})"
    );
    assert!(
        block.build_secs < 600.0,
        "digit block took {:.0}s, budget is 600s",
        block.build_secs
    );
    let curve: Vec<String> = errors.iter().map(|(t, e)| format!("{t}:{e:.4}")).collect();
    println!(
        "ACCEPTANCE C5 digit-block trend: PASS \
         (me {}, ce full {full_ce:.4} vs tau25 {ce25:.4}, built in {:.0}s)",
        curve.join(" "),
        block.build_secs
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: tau(10) spends well under 70% of the full policy's E-step work
// ---------------------------------------------------------------------------

#[test]
fn c06_estep_work_reduction() {
    let block = digits_block();
    let tau10 = &block
        .taus
        .iter()
        .find(|(tau, _)| *tau == 10)
        .expect("tau 10 present")
        .1;
    // The tau run may drain its active set before the budget runs out, so
    // compare E-step work over the iteration window both runs executed.
    let window = tau10
        .report
        .iterations
        .min(block.full.report.iterations);
    assert!(window >= 1);
    let window_evals = |counts: &[usize]| -> u64 {
        counts[..window].iter().map(|&c| c as u64).sum::<u64>() * 5
    };
    let full_evals = window_evals(&block.full.report.active_counts);
    let tau_evals = window_evals(&tau10.report.active_counts);
    let ratio = tau_evals as f64 / full_evals as f64;
    assert!(
        ratio < 0.7,
        "tau(10) spent {tau_evals} E-step evaluations vs full's {full_evals} \
         over {window} iterations (ratio {ratio:.3})"
    );
    println!("ACCEPTANCE C6 E-step work reduction: PASS (ratio {ratio:.3} over {window} iterations)");
}

// ---------------------------------------------------------------------------
// Criterion 7: structural invariants of the three policies' active sets
// ---------------------------------------------------------------------------

#[test]
fn c07_active_set_invariants() {
    // Tau nesting on the digit block's tau=10 run.
    let block = digits_block();
    assert!(!block.tau10_sets.is_empty());
    assert!(block.tau10_sets[0].iter().all(|&i| i < block.data.n()));
    for pair in block.tau10_sets.windows(2) {
        assert!(
            is_subset(&pair[1], &pair[0]),
            "tau active sets must be nested"
        );
    }
    let tau10_first = block.tau10_sets.first().expect("sets").len();
    let tau10_last = block.tau10_sets.last().expect("sets").len();

    // Tau nesting with aggressive deactivation on the 1-d benchmark data.
    let data = example1_data();
    let config = FitConfig::default();
    let tau3 = Recording::new(Tau::new(3));
    fit(data, 2, &tau3, &config).expect("tau(3) fit");
    let tau3_sets = tau3.into_log();
    assert!(!tau3_sets.is_empty());
    for pair in tau3_sets.windows(2) {
        assert!(
            is_subset(&pair[1], &pair[0]),
            "tau(3) active sets must be nested"
        );
    }

    // Star: active-set sizes never grow.
    let star = Recording::new(Star(StarConfig::new(None)));
    fit(data, 2, &star, &config).expect("star fit");
    let star_sets = star.into_log();
    assert!(!star_sets.is_empty());
    for pair in star_sets.windows(2) {
        assert!(
            pair[1].len() <= pair[0].len(),
            "star active-set sizes must be non-increasing"
        );
    }

    // Lazy: scheduled iterations refresh every point exactly.
    let lazy = Recording::new(Lazy(LazyConfig::default()));
    fit(data, 2, &lazy, &config).expect("lazy fit");
    let lazy_sets = lazy.into_log();
    let everything: Vec<usize> = (0..data.n()).collect();
    let mut scheduled = 0;
    for (i, set) in lazy_sets.iter().enumerate() {
        if (i + 1) % 5 == 0 {
            assert_eq!(
                set, &everything,
                "lazy must refresh the whole dataset at iteration {i}"
            );
            scheduled += 1;
        }
    }
    assert!(scheduled >= 1, "the lazy run never reached a scheduled refresh");

    println!(
        "ACCEPTANCE C7 active-set invariants: PASS \
         (tau10 sets {tau10_first}->{tau10_last}, tau3 sets {}, star sets {}, \
          {scheduled} scheduled lazy refreshes)",
        tau3_sets.len(),
        star_sets.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: brute-force oracles on random small instances
// ---------------------------------------------------------------------------

/// Invert via Gauss-Jordan with partial pivoting; also return the determinant.
fn invert_with_det(m: &Array2<f64>) -> (Array2<f64>, f64) {
    let d = m.nrows();
    let mut a = m.clone();
    let mut inv = Array2::<f64>::eye(d);
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&r, &s| a[[r, col]].abs().partial_cmp(&a[[s, col]].abs()).unwrap())
            .unwrap();
        if pivot != col {
            for j in 0..d {
                a.swap((col, j), (pivot, j));
                inv.swap((col, j), (pivot, j));
            }
            det = -det;
        }
        let p = a[[col, col]];
        assert!(p != 0.0, "singular test matrix");
        det *= p;
        for j in 0..d {
            a[[col, j]] /= p;
            inv[[col, j]] /= p;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = a[[r, col]];
            if f != 0.0 {
                for j in 0..d {
                    let ac = a[[col, j]];
                    let ic = inv[[col, j]];
                    a[[r, j]] -= f * ac;
                    inv[[r, j]] -= f * ic;
                }
            }
        }
    }
    (inv, det)
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros((d, d));
    for v in a.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let mut spd = a.dot(&a.t());
    let boost = 0.5 + rng.random_range(0.0..1.0);
    for i in 0..d {
        spd[[i, i]] += boost;
    }
    spd
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let mut pts = Array2::<f64>::zeros((n, d));
    for v in pts.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = 2.0 * z;
    }
    pts
}

fn random_row_stochastic(rng: &mut ChaCha8Rng, n: usize, k: usize) -> MembershipMatrix {
    let mut w = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let logits: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..k {
            w[[i, j]] = exps[j] / sum;
        }
    }
    MembershipMatrix::from_weights(w).expect("row stochastic")
}

fn random_model(rng: &mut ChaCha8Rng, k: usize, d: usize) -> MixtureModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .into_iter()
        .map(|r| {
            let mut mean = ndarray::Array1::<f64>::zeros(d);
            for v in mean.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = 2.0 * z;
            }
            GaussianComponent {
                mean,
                cov: cholesky_regularized(&random_spd(rng, d), 0.0).expect("spd"),
                weight: r / total,
            }
        })
        .collect();
    MixtureModel::new(comps).expect("model")
}

fn oracle_log_density(
    x: ndarray::ArrayView1<'_, f64>,
    mean: &ndarray::Array1<f64>,
    cov: &Array2<f64>,
) -> f64 {
    let d = mean.len();
    let (inv, det) = invert_with_det(cov);
    let diff: Vec<f64> = (0..d).map(|i| x[i] - mean[i]).collect();
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad += diff[i] * inv[[i, j]] * diff[j];
        }
    }
    -0.5 * (d as f64 * LN_2PI + det.ln() + quad)
}

#[test]
fn c08_kernels_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE57);
    let instances = 120;

    // log_density against inverse-and-determinant arithmetic.
    for _ in 0..instances {
        let d = rng.random_range(1..=5);
        let cov = random_spd(&mut rng, d);
        let mut mean = ndarray::Array1::<f64>::zeros(d);
        for v in mean.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = 2.0 * z;
        }
        let comp = GaussianComponent {
            mean: mean.clone(),
            cov: cholesky_regularized(&cov, 0.0).expect("spd"),
            weight: 1.0,
        };
        let x = random_points(&mut rng, 1, d);
        let got = log_density(x.row(0), &comp).expect("log density");
        let want = oracle_log_density(x.row(0), &mean, &cov);
        assert!(
            (got - want).abs() <= 1e-9,
            "log_density disagrees with the inverse-based oracle: {got} vs {want}"
        );
    }

    // m_step against the direct re-estimation formulas.
    for _ in 0..instances {
        let d = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let n = rng.random_range(k.max(2)..=20);
        let pts = random_points(&mut rng, n, d);
        let data = Dataset::new(pts.clone(), None).expect("data");
        let w = random_row_stochastic(&mut rng, n, k);
        let model = m_step(&data, &w, 1e-9).expect("m-step");
        for (j, comp) in model.components().iter().enumerate() {
            let nk: f64 = (0..n).map(|i| w.weights()[[i, j]]).sum();
            let weight_want = nk / n as f64;
            assert!((comp.weight - weight_want).abs() <= 1e-9);
            let mut mean_want = vec![0.0; d];
            for i in 0..n {
                for c in 0..d {
                    mean_want[c] += w.weights()[[i, j]] * pts[[i, c]];
                }
            }
            for v in mean_want.iter_mut() {
                *v /= nk;
            }
            for (c, &want) in mean_want.iter().enumerate() {
                assert!((comp.mean[c] - want).abs() <= 1e-9);
            }
            let ridge = comp.cov.applied_ridge();
            let got_cov = comp.cov.matrix();
            for r in 0..d {
                for c in 0..d {
                    let mut scatter = 0.0;
                    for i in 0..n {
                        scatter += w.weights()[[i, j]]
                            * (pts[[i, r]] - mean_want[r])
                            * (pts[[i, c]] - mean_want[c]);
                    }
                    let mut want = scatter / nk;
                    if r == c {
                        want += ridge;
                    }
                    assert!(
                        (got_cov[[r, c]] - want).abs() <= 1e-9,
                        "covariance entry ({r},{c}) disagrees: {} vs {want}",
                        got_cov[[r, c]]
                    );
                }
            }
        }
    }

    // f_function against a double loop over points and components.
    for _ in 0..instances {
        let d = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let n = rng.random_range(2..=20);
        let pts = random_points(&mut rng, n, d);
        let data = Dataset::new(pts.clone(), None).expect("data");
        let model = random_model(&mut rng, k, d);
        let q = random_row_stochastic(&mut rng, n, k);
        let got = f_function(&data, &model, &q).expect("f");
        let mut want = 0.0;
        for i in 0..n {
            for (j, comp) in model.components().iter().enumerate() {
                let qij = q.weights()[[i, j]];
                if qij > 0.0 {
                    let log_joint = comp.weight.ln()
                        + oracle_log_density(pts.row(i), &comp.mean, &comp.cov.matrix().to_owned());
                    want += qij * (log_joint - qij.ln());
                }
            }
        }
        assert!(
            (got - want).abs() <= 1e-9,
            "f_function disagrees with the double-loop oracle: {got} vs {want}"
        );
    }

    // membership_error against an independent greedy matcher.
    for _ in 0..instances {
        let k = rng.random_range(2..=4);
        let n = rng.random_range(2..=20);
        let a = random_row_stochastic(&mut rng, n, k);
        let b = random_row_stochastic(&mut rng, n, k);
        let got = membership_error(&a, &b).expect("me");
        let want = oracle_membership_error(&a, &b);
        assert!(
            (got - want).abs() <= 1e-9,
            "membership_error disagrees with the replayed oracle: {got} vs {want}"
        );
    }

    // confusion_matrix against hash-map tabulation.
    for _ in 0..instances {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(2..=20);
        let label_pool = [3i64, 7, 9, 11];
        let assignments: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let labels: Vec<i64> = (0..n)
            .map(|_| label_pool[rng.random_range(0..label_pool.len())])
            .collect();
        let got = confusion_matrix(&assignments, &labels).expect("confusion");
        let want = oracle_confusion(&assignments, &labels);
        assert_eq!(got.row_labels, want.row_labels);
        assert_eq!(got.col_labels, want.col_labels);
        assert_eq!(got.counts, want.counts);
    }

    println!("ACCEPTANCE C8 oracle equivalence: PASS ({instances} instances per kernel)");
}

fn argmax_row(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

fn oracle_membership_error(a: &MembershipMatrix, b: &MembershipMatrix) -> f64 {
    let n = a.n();
    let k = a.k();
    let hard = |m: &MembershipMatrix| -> Vec<usize> {
        (0..n)
            .map(|i| argmax_row(&m.row(i).to_vec()))
            .collect()
    };
    let ha = hard(a);
    let hb = hard(b);
    let mut counts = vec![vec![0u64; k]; k];
    for i in 0..n {
        counts[ha[i]][hb[i]] += 1;
    }
    let mut perm = vec![usize::MAX; k];
    let mut used_a = vec![false; k];
    let mut used_b = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(u64, usize, usize)> = None;
        for i in 0..k {
            if used_a[i] {
                continue;
            }
            for j in 0..k {
                if used_b[j] {
                    continue;
                }
                if best.is_none() || counts[i][j] > best.unwrap().0 {
                    best = Some((counts[i][j], i, j));
                }
            }
        }
        let (_, i, j) = best.unwrap();
        perm[i] = j;
        used_a[i] = true;
        used_b[j] = true;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..n {
        for (i, &p) in perm.iter().enumerate() {
            let diff = a.weights()[[r, i]] - b.weights()[[r, p]];
            num += diff * diff;
        }
        for j in 0..k {
            den += b.weights()[[r, j]] * b.weights()[[r, j]];
        }
    }
    num.sqrt() / den.sqrt()
}

fn oracle_confusion(assignments: &[usize], labels: &[i64]) -> ConfusionMatrix {
    let mut per_cluster: HashMap<usize, HashMap<i64, u64>> = HashMap::new();
    for (&a, &l) in assignments.iter().zip(labels) {
        *per_cluster.entry(a).or_default().entry(l).or_default() += 1;
    }
    let mut majority: HashMap<usize, i64> = HashMap::new();
    for (&cluster, tallies) in &per_cluster {
        let mut best: Option<(u64, i64)> = None;
        for (&label, &count) in tallies {
            best = Some(match best {
                None => (count, label),
                Some((bc, bl)) => {
                    if count > bc || (count == bc && label < bl) {
                        (count, label)
                    } else {
                        (bc, bl)
                    }
                }
            });
        }
        majority.insert(cluster, best.unwrap().1);
    }
    let mut cells: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    let mut rows: BTreeSet<i64> = BTreeSet::new();
    let mut cols: BTreeSet<i64> = BTreeSet::new();
    for (&a, &l) in assignments.iter().zip(labels) {
        let pred = majority[&a];
        *cells.entry((pred, l)).or_default() += 1;
        rows.insert(pred);
        cols.insert(l);
    }
    let row_labels: Vec<i64> = rows.into_iter().collect();
    let col_labels: Vec<i64> = cols.into_iter().collect();
    let counts = row_labels
        .iter()
        .map(|&r| {
            col_labels
                .iter()
                .map(|&c| cells.get(&(r, c)).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    ConfusionMatrix {
        row_labels,
        col_labels,
        counts,
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: IDX parsing and re-serialization are byte-exact
// ---------------------------------------------------------------------------

#[test]
fn c09_idx_round_trip_is_byte_exact() {
    let mut image_bytes: Vec<u8> = Vec::new();
    image_bytes.extend(0x0000_0803u32.to_be_bytes());
    image_bytes.extend(2u32.to_be_bytes());
    image_bytes.extend(2u32.to_be_bytes());
    image_bytes.extend(3u32.to_be_bytes());
    image_bytes.extend([0, 51, 102, 153, 204, 255]);
    image_bytes.extend([255, 0, 128, 64, 32, 16]);
    let mut label_bytes: Vec<u8> = Vec::new();
    label_bytes.extend(0x0000_0801u32.to_be_bytes());
    label_bytes.extend(2u32.to_be_bytes());
    label_bytes.extend([7u8, 2]);

    let dir = tempfile::tempdir().expect("tempdir");
    let images_in = dir.path().join("in-images.idx");
    let labels_in = dir.path().join("in-labels.idx");
    std::fs::write(&images_in, &image_bytes).expect("write");
    std::fs::write(&labels_in, &label_bytes).expect("write");

    let data = load_idx(&images_in, &labels_in, None).expect("parse");
    assert_eq!(data.n(), 2);
    assert_eq!(data.d(), 6);
    assert_eq!(data.labels(), Some(&[7i64, 2][..]));

    let images_out = dir.path().join("out-images.idx");
    let labels_out = dir.path().join("out-labels.idx");
    save_idx_images(&images_out, data.points(), 2, 3).expect("serialize");
    save_idx_labels(&labels_out, data.labels().unwrap()).expect("serialize");
    assert_eq!(
        std::fs::read(&images_out).expect("read"),
        image_bytes,
        "image bytes must survive the round trip exactly"
    );
    assert_eq!(
        std::fs::read(&labels_out).expect("read"),
        label_bytes,
        "label bytes must survive the round trip exactly"
    );
    println!("ACCEPTANCE C9 IDX bit-exactness: PASS");
}

// ---------------------------------------------------------------------------
// Criterion 10: k-means baseline on well-separated blobs
// ---------------------------------------------------------------------------

#[test]
fn c10_kmeans_recovers_separated_blobs() {
    let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let spec = MixtureSpec {
        weights: vec![0.25; 4],
        means: vec![
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![0.0, 10.0],
            vec![10.0, 10.0],
        ],
        covariances: vec![eye.clone(), eye.clone(), eye.clone(), eye],
    };
    let data = sample_mixture(&spec, 800, 0).expect("sample");
    let km = kmeans(&data, 4, 0, 100, 1e-6).expect("kmeans");
    let ce = classification_error(&km.assignments, data.labels().unwrap()).expect("ce");
    assert!(ce < 0.02, "classification error on 10-sigma blobs is {ce:.4}");
    println!("ACCEPTANCE C10 k-means baseline: PASS (classification error {ce:.4})");
}

// ---------------------------------------------------------------------------
// Criterion 11: star terminates cleanly; accuracy is deliberately unasserted
// ---------------------------------------------------------------------------

#[test]
fn c11_star_terminates() {
    let data = example1_data();
    let config = FitConfig::default();
    let star = Recording::new(Star(StarConfig::new(None)));
    let result = fit(data, 2, &star, &config).expect("star fit");
    assert!(result.report.iterations >= 1);
    assert!(matches!(
        result.report.termination,
        Termination::Converged | Termination::ActiveSetEmpty | Termination::MaxIterations
    ));
    let sets = star.into_log();
    for pair in sets.windows(2) {
        assert!(pair[1].len() <= pair[0].len());
    }
    println!(
        "ACCEPTANCE C11 star termination: PASS ({} iterations, {})",
        result.report.iterations, result.report.termination
    );
}
