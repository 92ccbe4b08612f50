//! Command-line driver for the `partial-em` Gaussian-mixture engine.
//!
//! Subcommands:
//!
//! * `fit`     — fit a mixture to a dataset and emit a JSON run report
//! * `compare` — race several E-step policies on identical data and init
//! * `gen`     — sample a labeled synthetic dataset from a mixture spec
//! * `contour` — tabulate mean log-likelihood over a grid of two means
//!
//! `fit` exits 0 when the run converged or drained its active set, 2 when it
//! stopped only because the iteration budget ran out, and 1 on any error.
//! The other subcommands exit 0 on success and 1 on error. Given the same
//! flags and inputs, every subcommand produces byte-identical outputs apart
//! from wall-time fields.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{array, Array2};
use partial_em::{
    classification_error, cholesky_regularized, confusion_matrix, fit, fit_pca, hard_assign,
    load_csv, load_idx, membership_error, observed_loglik, sample_mixture, save_points_csv,
    ActiveSetPolicy, CovKind, Dataset, FitConfig, FitResult, Full, GaussianComponent, Lazy,
    LazyConfig, MixtureModel, MixtureSpec, ModelJson, Star, StarConfig, Tau, Termination,
};

type CliResult<T> = Result<T, String>;

fn fail<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(msg.into())
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests land on stdout and exit 0; genuine
            // usage errors land on stderr and exit 1.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Fit(args) => cmd_fit(*args),
        Command::Compare(args) => cmd_compare(*args).map(|()| 0),
        Command::Gen(args) => cmd_gen(args).map(|()| 0),
        Command::Contour(args) => cmd_contour(args).map(|()| 0),
    }
}

/// Gaussian-mixture clustering with partial E-step policies.
#[derive(Parser, Debug)]
#[command(name = "partial-em", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a mixture model and write the run report as JSON.
    Fit(Box<FitArgs>),
    /// Fit several policies on identical data and init; print a table.
    Compare(Box<CompareArgs>),
    /// Sample a labeled synthetic dataset from a mixture specification.
    Gen(GenArgs),
    /// Tabulate the mean log-likelihood of a two-component 1-d mixture
    /// over a grid of candidate means.
    Contour(ContourArgs),
}

// ---------------------------------------------------------------------------
// Shared input handling
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DataFormat {
    Csv,
    Idx,
}

#[derive(Clone, Copy, Debug)]
enum PcaArg {
    Off,
    Dims(usize),
}

fn parse_pca(s: &str) -> Result<PcaArg, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(PcaArg::Off);
    }
    match s.parse::<usize>() {
        Ok(d) if d >= 1 => Ok(PcaArg::Dims(d)),
        _ => Err(format!(
            "expected a positive dimension count or \"off\", got {s:?}"
        )),
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Input data file: CSV (one point per row) or IDX images.
    #[arg(long)]
    input: PathBuf,

    /// IDX label file; required when the input is IDX.
    #[arg(long)]
    input_labels: Option<PathBuf>,

    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<DataFormat>,

    /// Treat the last CSV column as an integer class label.
    #[arg(long)]
    labeled: bool,

    /// Keep only rows whose label is in this comma-separated list
    /// (e.g. 1,2,4,5,6).
    #[arg(long, value_delimiter = ',')]
    digits: Option<Vec<u8>>,

    /// Project onto this many principal components before fitting,
    /// or "off" to fit in the original space.
    #[arg(long, default_value = "off", value_parser = parse_pca)]
    pca: PcaArg,
}

fn infer_format(path: &Path) -> CliResult<DataFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "csv" => Ok(DataFormat::Csv),
        "idx" | "ubyte" | "idx3-ubyte" | "idx1-ubyte" => Ok(DataFormat::Idx),
        _ => fail(format!(
            "cannot infer the input format of {}; pass --format csv|idx",
            path.display()
        )),
    }
}

/// Keep only the rows whose label appears in `keep`.
fn filter_by_labels(data: &Dataset, keep: &[u8]) -> CliResult<Dataset> {
    let labels = data
        .labels()
        .ok_or("--digits needs labeled data; pass --labeled for CSV input")?;
    let keep: Vec<i64> = keep.iter().map(|&d| i64::from(d)).collect();
    let rows: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| keep.contains(l))
        .map(|(i, _)| i)
        .collect();
    let mut points = Array2::<f64>::zeros((rows.len(), data.d()));
    let mut kept_labels = Vec::with_capacity(rows.len());
    for (dst, &src) in rows.iter().enumerate() {
        points.row_mut(dst).assign(&data.point(src));
        kept_labels.push(labels[src]);
    }
    Dataset::new(points, Some(kept_labels)).map_err(|e| e.to_string())
}

fn load_input(args: &InputArgs) -> CliResult<Dataset> {
    let format = match args.format {
        Some(f) => f,
        None => infer_format(&args.input)?,
    };
    let mut data = match format {
        DataFormat::Csv => load_csv(&args.input, args.labeled)
            .map_err(|e| format!("failed to read {}: {e}", args.input.display()))?,
        DataFormat::Idx => {
            let labels_path = args
                .input_labels
                .as_ref()
                .ok_or("--input-labels is required for idx input")?;
            load_idx(&args.input, labels_path, args.digits.as_deref())
                .map_err(|e| format!("failed to read {}: {e}", args.input.display()))?
        }
    };
    if format == DataFormat::Csv {
        if let Some(digits) = &args.digits {
            data = filter_by_labels(&data, digits)?;
        }
    }
    if data.n() == 0 {
        return fail("no data rows left after loading and filtering");
    }
    match args.pca {
        PcaArg::Off => Ok(data),
        PcaArg::Dims(d) => {
            let transform = fit_pca(&data, d).map_err(|e| format!("PCA failed: {e}"))?;
            transform
                .project(&data)
                .map_err(|e| format!("PCA projection failed: {e}"))
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(t) = flag {
        if t == 0 {
            return fail("--threads must be at least 1");
        }
        return Ok(Some(t));
    }
    match std::env::var("PARTIAL_EM_THREADS") {
        Ok(raw) => {
            let t = raw.trim().parse::<usize>().ok().filter(|&t| t >= 1).ok_or(
                format!("PARTIAL_EM_THREADS must be a positive integer, got {raw:?}"),
            )?;
            Ok(Some(t))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => fail(format!("PARTIAL_EM_THREADS: {e}")),
    }
}

// ---------------------------------------------------------------------------
// Policy specification
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyName {
    Full,
    Tau,
    Lazy,
    Star,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CovName {
    Full,
    Diag,
}

impl CovName {
    fn to_kind(self) -> CovKind {
        match self {
            CovName::Full => CovKind::Full,
            CovName::Diag => CovKind::Diag,
        }
    }
}

/// A fully resolved policy choice, buildable into a boxed policy.
#[derive(Clone, Copy, Debug, PartialEq)]
enum PolicySpec {
    Full,
    Tau(u32),
    Lazy(f64, usize),
    Star(Option<f64>),
}

impl PolicySpec {
    fn validate(&self) -> CliResult<()> {
        match *self {
            PolicySpec::Full => Ok(()),
            PolicySpec::Tau(t) if t >= 1 => Ok(()),
            PolicySpec::Tau(_) => fail("tau streak must be at least 1"),
            PolicySpec::Lazy(threshold, every) => {
                if !(threshold.is_finite() && 0.0 < threshold && threshold < 1.0) {
                    return fail("lazy threshold must be strictly between 0 and 1");
                }
                if every < 1 {
                    return fail("lazy full-refresh period must be at least 1");
                }
                Ok(())
            }
            PolicySpec::Star(Some(x)) if !(x.is_finite() && 0.0 < x && x <= 1.0) => {
                fail("star tail fraction must be in (0, 1]")
            }
            PolicySpec::Star(_) => Ok(()),
        }
    }

    fn build(&self) -> Box<dyn ActiveSetPolicy> {
        match *self {
            PolicySpec::Full => Box::new(Full),
            PolicySpec::Tau(tau) => Box::new(Tau::new(tau)),
            PolicySpec::Lazy(threshold, every) => Box::new(Lazy(LazyConfig::new(threshold, every))),
            PolicySpec::Star(tail) => Box::new(Star(StarConfig::new(tail))),
        }
    }
}

/// Parse one entry of a `--policies` list:
/// `full | tau:<streak> | lazy[:<threshold>[:<period>]] | star[:<tail>]`.
fn parse_policy_spec(s: &str) -> CliResult<PolicySpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || {
        format!(
            "unrecognized policy {s:?}; expected full, tau:<streak>, \
             lazy[:<threshold>[:<period>]], or star[:<tail-fraction>]"
        )
    };
    let spec = match (parts[0], parts.len()) {
        ("full", 1) => PolicySpec::Full,
        ("tau", 2) => {
            let tau = parts[1].parse::<u32>().map_err(|_| bad())?;
            PolicySpec::Tau(tau)
        }
        ("lazy", 1) => PolicySpec::Lazy(0.9, 5),
        ("lazy", 2) => {
            let threshold = parts[1].parse::<f64>().map_err(|_| bad())?;
            PolicySpec::Lazy(threshold, 5)
        }
        ("lazy", 3) => {
            let threshold = parts[1].parse::<f64>().map_err(|_| bad())?;
            let every = parts[2].parse::<usize>().map_err(|_| bad())?;
            PolicySpec::Lazy(threshold, every)
        }
        ("star", 1) => PolicySpec::Star(None),
        ("star", 2) => {
            let tail = parts[1].parse::<f64>().map_err(|_| bad())?;
            PolicySpec::Star(Some(tail))
        }
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Number of mixture components.
    #[arg(long)]
    k: usize,

    /// E-step policy: which points get fresh responsibilities each iteration.
    #[arg(long, value_enum, default_value = "full")]
    policy: PolicyName,

    /// Streak length after which tau deactivates a point
    /// (required with --policy tau).
    #[arg(long)]
    tau: Option<u32>,

    /// Responsibility threshold for the lazy policy [default: 0.9].
    #[arg(long)]
    lazy_threshold: Option<f64>,

    /// Lazy policy: refresh every point each time this many iterations pass
    /// [default: 5].
    #[arg(long)]
    lazy_every: Option<usize>,

    /// Star policy: keep this fraction of each cluster active (lowest
    /// responsibilities first) instead of the heap's leaf layer.
    #[arg(long)]
    star_tail: Option<f64>,

    /// Covariance structure.
    #[arg(long, value_enum, default_value = "full")]
    cov: CovName,

    /// Ridge added to every covariance diagonal
    /// [default: 1e-6 x the mean global variance].
    #[arg(long)]
    ridge: Option<f64>,

    /// Convergence threshold on |change in total log-likelihood| / N;
    /// a negative value disables the test so --max-iter is a fixed budget.
    #[arg(long, default_value_t = 1e-6, allow_hyphen_values = true)]
    tol: f64,

    /// Iteration budget.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,

    /// RNG seed for initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Record the F-function after every half-step (post-E and post-M).
    #[arg(long)]
    trace_f: bool,

    /// Worker threads; falls back to $PARTIAL_EM_THREADS, then to one thread
    /// per core. Results are bit-identical for any value.
    #[arg(long)]
    threads: Option<usize>,

    /// Write the run report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write the final responsibility matrix as CSV.
    #[arg(long)]
    emit_membership: Option<PathBuf>,

    /// Print the cluster-vs-label confusion table to stderr
    /// (labeled data only).
    #[arg(long)]
    print_confusion: bool,
}

fn fit_policy_spec(args: &FitArgs) -> CliResult<PolicySpec> {
    let spec = match args.policy {
        PolicyName::Full => PolicySpec::Full,
        PolicyName::Tau => {
            let tau = args.tau.ok_or("--policy tau requires --tau <streak>")?;
            PolicySpec::Tau(tau)
        }
        PolicyName::Lazy => PolicySpec::Lazy(
            args.lazy_threshold.unwrap_or(0.9),
            args.lazy_every.unwrap_or(5),
        ),
        PolicyName::Star => PolicySpec::Star(args.star_tail),
    };
    spec.validate()?;
    Ok(spec)
}

fn cmd_fit(args: FitArgs) -> CliResult<i32> {
    let spec = fit_policy_spec(&args)?;
    let data = load_input(&args.input)?;
    let config = FitConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        ridge: args.ridge,
        seed: args.seed,
        cov: args.cov.to_kind(),
        trace_f: args.trace_f,
        threads: resolve_threads(args.threads)?,
        ..FitConfig::default()
    };
    let policy = spec.build();
    let result = fit(&data, args.k, policy.as_ref(), &config).map_err(|e| e.to_string())?;

    if let Some(path) = &args.emit_membership {
        result
            .membership
            .save_csv(path)
            .map_err(|e| format!("failed to write {}: {e}", path.display()))?;
    }

    let mut json = serde_json::to_value(&result.report).map_err(|e| e.to_string())?;
    if let Some(labels) = data.labels() {
        let assignments = hard_assign(&result.membership);
        let ce = classification_error(&assignments, labels).map_err(|e| e.to_string())?;
        let confusion = confusion_matrix(&assignments, labels).map_err(|e| e.to_string())?;
        if args.print_confusion {
            eprintln!("{confusion}");
        }
        let evaluation = serde_json::json!({
            "classification_error": ce,
            "confusion_matrix": confusion,
        });
        json.as_object_mut()
            .expect("run report serializes to a JSON object")
            .insert("evaluation".into(), evaluation);
    } else if args.print_confusion {
        return fail("--print-confusion needs labeled data");
    }
    let mut text = serde_json::to_string_pretty(&json).map_err(|e| e.to_string())?;
    text.push('\n');
    write_output(&args.out, &text)?;

    let report = &result.report;
    let last = report.loglik_trace.last().copied();
    eprintln!(
        "fit: {} after {} iterations, mean log-likelihood {}, {} density evaluations",
        report.termination,
        report.iterations,
        last.map_or_else(|| "n/a".into(), |v| format!("{v:.6}")),
        report.density_evals.total,
    );

    Ok(match report.termination {
        Termination::Converged | Termination::ActiveSetEmpty => 0,
        Termination::MaxIterations => 2,
    })
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Number of mixture components.
    #[arg(long)]
    k: usize,

    /// Comma-separated policies to race, e.g. full,tau:100,tau:25,lazy,star.
    /// Entries: full | tau:<streak> | lazy[:<threshold>[:<period>]]
    /// | star[:<tail-fraction>]. A full run is always included as the
    /// reference for membership error.
    #[arg(long, value_delimiter = ',', required = true)]
    policies: Vec<String>,

    /// Covariance structure.
    #[arg(long, value_enum, default_value = "full")]
    cov: CovName,

    /// Ridge added to every covariance diagonal
    /// [default: 1e-6 x the mean global variance].
    #[arg(long)]
    ridge: Option<f64>,

    /// Convergence threshold on |change in total log-likelihood| / N;
    /// a negative value disables the test so --max-iter is a fixed budget.
    #[arg(long, default_value_t = 1e-6, allow_hyphen_values = true)]
    tol: f64,

    /// Iteration budget.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,

    /// RNG seed for initialization (shared by every run).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads; falls back to $PARTIAL_EM_THREADS.
    #[arg(long)]
    threads: Option<usize>,

    /// Also write the comparison as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CompareRow {
    method: String,
    iterations: usize,
    membership_error: f64,
    density_evals: u64,
    wall_time_secs: f64,
    classification_error: Option<f64>,
}

fn render_table(rows: &[CompareRow]) -> String {
    const HEADERS: [&str; 6] = [
        "method",
        "iterations",
        "membership_error",
        "density_evals",
        "wall_time",
        "classification_error",
    ];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.iterations.to_string(),
                format!("{:.6}", r.membership_error),
                r.density_evals.to_string(),
                format!("{:.3}s", r.wall_time_secs),
                r.classification_error
                    .map_or_else(|| "-".to_string(), |v| format!("{v:.6}")),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, header) in HEADERS.iter().enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        if i == 0 {
            out.push_str(&format!("{header:<width$}", width = widths[i]));
        } else {
            out.push_str(&format!("{header:>width$}", width = widths[i]));
        }
    }
    out.push('\n');
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                out.push_str(&format!("{cell:<width$}", width = widths[i]));
            } else {
                out.push_str(&format!("{cell:>width$}", width = widths[i]));
            }
        }
        out.push('\n');
    }
    out
}

/// Quote a CSV field when it contains a delimiter (policy names like
/// "lazy(0.9,5)" hold commas).
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from(
        "method,iterations,membership_error,density_evals,wall_time_secs,classification_error\n",
    );
    for r in rows {
        let ce = r
            .classification_error
            .map_or_else(String::new, |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6},{}\n",
            csv_field(&r.method),
            r.iterations,
            r.membership_error,
            r.density_evals,
            r.wall_time_secs,
            ce,
        ));
    }
    out
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let mut specs = Vec::with_capacity(args.policies.len() + 1);
    for raw in &args.policies {
        specs.push(parse_policy_spec(raw.trim())?);
    }
    // Membership error is measured against a full E-step run, so make sure
    // one is present; if the user listed one, reuse it.
    if !specs.contains(&PolicySpec::Full) {
        specs.insert(0, PolicySpec::Full);
    }
    let data = load_input(&args.input)?;
    let config = FitConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        ridge: args.ridge,
        seed: args.seed,
        cov: args.cov.to_kind(),
        threads: resolve_threads(args.threads)?,
        ..FitConfig::default()
    };

    let mut results: Vec<(String, FitResult)> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let policy = spec.build();
        let name = policy.name();
        let result = fit(&data, args.k, policy.as_ref(), &config)
            .map_err(|e| format!("{name} fit failed: {e}"))?;
        results.push((name, result));
    }
    let ref_idx = specs
        .iter()
        .position(|s| *s == PolicySpec::Full)
        .expect("a full run is always present");
    let reference = results[ref_idx].1.membership.clone();

    let mut rows = Vec::with_capacity(results.len());
    for (name, result) in &results {
        let me = membership_error(&result.membership, &reference).map_err(|e| e.to_string())?;
        let ce = match data.labels() {
            Some(labels) => Some(
                classification_error(&hard_assign(&result.membership), labels)
                    .map_err(|e| e.to_string())?,
            ),
            None => None,
        };
        rows.push(CompareRow {
            method: name.clone(),
            iterations: result.report.iterations,
            membership_error: me,
            density_evals: result.report.density_evals.e_step,
            wall_time_secs: result.report.wall_time_secs,
            classification_error: ce,
        });
    }

    print!("{}", render_table(&rows));
    if let Some(path) = &args.out {
        fs::write(path, render_csv(&rows))
            .map_err(|e| format!("failed to write {}: {e}", path.display()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct GenArgs {
    /// Use the built-in two-component 1-d example: weights 0.3/0.7,
    /// means -2/+2, unit variances.
    #[arg(long, conflicts_with = "spec")]
    example1: bool,

    /// JSON mixture specification file with weights, means, covariances.
    #[arg(long)]
    spec: Option<PathBuf>,

    /// Number of points to sample.
    #[arg(long)]
    n: usize,

    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output CSV path (labels included as the last column).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let spec = if args.example1 {
        MixtureSpec::example1()
    } else {
        let path = args.spec.as_ref().ok_or("pass --example1 or --spec <json>")?;
        let text = fs::read_to_string(path)
            .map_err(|e| format!("failed to read {}: {e}", path.display()))?;
        serde_json::from_str::<MixtureSpec>(&text)
            .map_err(|e| format!("bad mixture spec {}: {e}", path.display()))?
    };
    let data = sample_mixture(&spec, args.n, args.seed).map_err(|e| e.to_string())?;
    save_points_csv(&args.out, &data)
        .map_err(|e| format!("failed to write {}: {e}", args.out.display()))?;
    eprintln!(
        "gen: wrote {} points of dimension {} to {}",
        data.n(),
        data.d(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// contour
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct ContourArgs {
    /// 1-d input data CSV.
    #[arg(long)]
    input: PathBuf,

    /// Treat the last CSV column as an integer class label.
    #[arg(long)]
    labeled: bool,

    /// Grid of candidate means: mu1_min:mu1_max:steps,mu2_min:mu2_max:steps.
    #[arg(long, default_value = "-4:4:81,-4:4:81", allow_hyphen_values = true)]
    grid: String,

    /// Mixture weights of the two components (normalized to sum to 1).
    #[arg(long, default_value = "0.3,0.7")]
    weights: String,

    /// Variances of the two components.
    #[arg(long, default_value = "1,1")]
    vars: String,

    /// Evaluate the fitted means from this run-report JSON as an extra row
    /// tagged "fit" (means sorted ascending onto the mu1/mu2 axes).
    #[arg(long)]
    at_fit: Option<PathBuf>,

    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct GridAxis {
    min: f64,
    max: f64,
    steps: usize,
}

fn parse_axis(s: &str) -> CliResult<GridAxis> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return fail(format!("grid axis must be min:max:steps, got {s:?}"));
    }
    let min = parts[0]
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("bad grid bound {:?}", parts[0]))?;
    let max = parts[1]
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("bad grid bound {:?}", parts[1]))?;
    let steps = parts[2]
        .trim()
        .parse::<usize>()
        .map_err(|_| format!("bad grid step count {:?}", parts[2]))?;
    if steps < 1 {
        return fail("grid needs at least one step per axis");
    }
    if !(min.is_finite() && max.is_finite() && min <= max) {
        return fail(format!("grid bounds must be finite with min <= max in {s:?}"));
    }
    Ok(GridAxis { min, max, steps })
}

fn parse_grid(s: &str) -> CliResult<(GridAxis, GridAxis)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return fail(format!(
            "--grid must be two axes min:max:steps,min:max:steps, got {s:?}"
        ));
    }
    Ok((parse_axis(parts[0])?, parse_axis(parts[1])?))
}

fn linspace(axis: &GridAxis) -> Vec<f64> {
    if axis.steps == 1 {
        return vec![axis.min];
    }
    let h = (axis.max - axis.min) / (axis.steps - 1) as f64;
    (0..axis.steps).map(|i| axis.min + h * i as f64).collect()
}

fn parse_pair(s: &str, what: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return fail(format!(
            "{what} must be two comma-separated numbers, got {s:?}"
        ));
    }
    let a = parts[0]
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("bad {what} value {:?}", parts[0]))?;
    let b = parts[1]
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("bad {what} value {:?}", parts[1]))?;
    Ok((a, b))
}

fn two_component_model(
    mu1: f64,
    mu2: f64,
    w1: f64,
    w2: f64,
    v1: f64,
    v2: f64,
) -> CliResult<MixtureModel> {
    let comp = |mu: f64, var: f64, w: f64| -> CliResult<GaussianComponent> {
        Ok(GaussianComponent {
            mean: array![mu],
            cov: cholesky_regularized(&array![[var]], 0.0).map_err(|e| e.to_string())?,
            weight: w,
        })
    };
    MixtureModel::new(vec![comp(mu1, v1, w1)?, comp(mu2, v2, w2)?]).map_err(|e| e.to_string())
}

fn read_fit_means(path: &Path) -> CliResult<(f64, f64)> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("failed to read {}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("bad JSON in {}: {e}", path.display()))?;
    let model_value = value
        .get("model")
        .cloned()
        .ok_or_else(|| format!("{} has no \"model\" field", path.display()))?;
    let model: ModelJson = serde_json::from_value(model_value)
        .map_err(|e| format!("bad model in {}: {e}", path.display()))?;
    if model.means.len() != 2 || model.means.iter().any(|m| m.len() != 1) {
        return fail(format!(
            "{} must hold a two-component 1-d model",
            path.display()
        ));
    }
    let mut means = [model.means[0][0], model.means[1][0]];
    if means.iter().any(|m| !m.is_finite()) {
        return fail(format!("{} holds non-finite means", path.display()));
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means compare"));
    Ok((means[0], means[1]))
}

fn cmd_contour(args: ContourArgs) -> CliResult<()> {
    let data = load_csv(&args.input, args.labeled)
        .map_err(|e| format!("failed to read {}: {e}", args.input.display()))?;
    if data.d() != 1 {
        return fail(format!(
            "contour needs 1-d data, got dimension {}",
            data.d()
        ));
    }
    let (axis1, axis2) = parse_grid(&args.grid)?;
    let (w1, w2) = parse_pair(&args.weights, "--weights")?;
    if !(w1.is_finite() && w2.is_finite() && w1 > 0.0 && w2 > 0.0) {
        return fail("--weights must be positive numbers");
    }
    let (v1, v2) = parse_pair(&args.vars, "--vars")?;
    if !(v1.is_finite() && v2.is_finite() && v1 > 0.0 && v2 > 0.0) {
        return fail("--vars must be positive numbers");
    }
    let wsum = w1 + w2;
    let (w1, w2) = (w1 / wsum, w2 / wsum);

    let n = data.n() as f64;
    let eval_at = |mu1: f64, mu2: f64| -> CliResult<f64> {
        let model = two_component_model(mu1, mu2, w1, w2, v1, v2)?;
        let total = observed_loglik(&data, &model).map_err(|e| e.to_string())?;
        Ok(total / n)
    };

    let mut out = String::from("mu1,mu2,mean_loglik,point\n");
    for &mu1 in &linspace(&axis1) {
        for &mu2 in &linspace(&axis2) {
            let v = eval_at(mu1, mu2)?;
            out.push_str(&format!("{mu1:.6},{mu2:.6},{v:.6},grid\n"));
        }
    }
    if let Some(path) = &args.at_fit {
        let (m1, m2) = read_fit_means(path)?;
        let v = eval_at(m1, m2)?;
        out.push_str(&format!("{m1:.6},{m2:.6},{v:.6},fit\n"));
    }
    write_output(&args.out, &out)
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

fn write_output(out: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| format!("failed to write {}: {e}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
