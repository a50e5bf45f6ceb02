//! Command-line front end for `sparsebench`.
//!
//! Exit codes: 0 success, 1 domain failure (infeasible system, failed
//! search, oracle mismatch), 2 usage error (bad flags, malformed or missing
//! input, guard violations).

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sparsebench_core::combinations::binomial;
use sparsebench_core::decoders::{decode, DecodeError, DecoderKind, DecoderParams, StagePenalty};
use sparsebench_core::experiment::{
    run_experiment, trial_seed, write_results, DecoderSpec, ExperimentConfig, ExperimentError,
    GaussianStream, SuccessCurve,
};
use sparsebench_core::io::{read_matrix_csv, read_vector_csv, write_vector_csv, IoError};
use sparsebench_core::linalg::DenseMatrix;
use sparsebench_core::lp::{
    solve_weighted_l1, vertex_oracle, LpError, LpStatus, SolverOptions, WeightVector,
    ORACLE_MAX_BASES,
};
use sparsebench_core::verify::{
    find_lemma1_violation, support_recovered, SparseSignal, VerifyError, DEFAULT_SUPPORT_TOL,
};

pub const SEED_ENV: &str = "SPARSEBENCH_SEED";
pub const DEFAULT_SEED: u64 = 42;
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "sparsebench", version, about = "Sparse recovery by (weighted) l1 minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode one instance y = A x from CSV files.
    Decode(DecodeArgs),
    /// Monte Carlo success-rate sweep over the sparsity k.
    Experiment(ExperimentArgs),
    /// Cross-check the simplex solver against brute-force vertex enumeration.
    OracleCheck(OracleCheckArgs),
    /// Check that every 2s columns of a matrix are linearly independent.
    Lemma1Check(Lemma1Args),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Simplex pivot cap (default 50 (2n + m)).
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub feas_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub pivot_tol: f64,
}

impl SolverArgs {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            feas_tol: self.feas_tol,
            pivot_tol: self.pivot_tol,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Offset in the reweighting (rew-l1) and threshold 1/u (alt-l1).
    #[arg(long, default_value_t = 3.0)]
    pub u: f64,
    /// Number of weight updates for rew-l1 and alt-l1.
    #[arg(long = "L", default_value_t = 4)]
    pub iterations: usize,
    /// Fraction of m left unpenalized by 2stage-l1.
    #[arg(long, default_value_t = 0.25)]
    pub rho: f64,
    /// Largest support tried by the l0 search.
    #[arg(long, default_value_t = 3)]
    pub s_max: usize,
}

impl ParamArgs {
    pub fn params(&self) -> DecoderParams {
        DecoderParams {
            u: self.u,
            iterations: self.iterations,
            rho: self.rho,
            s_max: self.s_max,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub matrix_file: PathBuf,
    #[arg(long)]
    pub measurement_file: PathBuf,
    /// Ground truth x*, reported against when given.
    #[arg(long)]
    pub signal_file: Option<PathBuf>,
    /// One of l0, l1, rew-l1, alt-l1, 2stage-l1.
    #[arg(long, default_value = "l1")]
    pub decoder: DecoderKind,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_TOL)]
    pub support_tol: f64,
    /// Write x_hat here as CSV, one value per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// JSON experiment configuration; replaces the sweep flags.
    #[arg(long, conflicts_with_all = ["n", "m", "k", "trials", "decoders", "u", "iterations", "rho", "s_max", "support_tol"])]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    /// Sparsity levels: `a..b` (inclusive), single values, or a comma list
    /// of both, e.g. `1..10,15,20..22`.
    #[arg(long, default_value = "1..30")]
    pub k: String,
    #[arg(long, default_value_t = 300)]
    pub trials: usize,
    /// Comma-separated decoder names.
    #[arg(long, default_value = "l1,rew-l1,alt-l1,2stage-l1")]
    pub decoders: String,
    #[arg(long, default_value_t = 3.0)]
    pub u: f64,
    #[arg(long = "L", default_value_t = 4)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.25)]
    pub rho: f64,
    #[arg(long, default_value_t = 3)]
    pub s_max: usize,
    /// Base seed (ignored with --config, which carries its own).
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_TOL)]
    pub support_tol: f64,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Output prefix; writes <prefix>_curve.csv, <prefix>_trials.csv and
    /// <prefix>_config.json.
    #[arg(long, default_value = "sparsebench")]
    pub out: PathBuf,
    /// Add per-trial wall-clock times to the trials file.
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 2)]
    pub m_min: usize,
    #[arg(long, default_value_t = 5)]
    pub m_max: usize,
    #[arg(long, default_value_t = 4)]
    pub n_min: usize,
    #[arg(long, default_value_t = 8)]
    pub n_max: usize,
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Lemma1Args {
    #[arg(long)]
    pub matrix_file: PathBuf,
    #[arg(long)]
    pub s: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("cannot write output: {e}"))
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::StageFailed { .. }
            | DecodeError::Lp(LpError::IterationLimit(_))
            | DecodeError::Lp(LpError::SingularBasis) => CliError::Domain(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    match cli.command {
        Command::Decode(args) => cmd_decode(&args, out),
        Command::Experiment(args) => cmd_experiment(&args, out),
        Command::OracleCheck(args) => cmd_oracle_check(&args, out),
        Command::Lemma1Check(args) => cmd_lemma1_check(&args, out),
    }
}

/// Parses the `--k` grammar: comma-separated items, each either a single
/// integer or an inclusive range `a..b`.
pub fn parse_k_values(spec: &str) -> Result<Vec<usize>, String> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid sparsity `{}` in `{spec}`", s.trim()))
    };
    let mut ks = Vec::new();
    for item in spec.split(',') {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if lo > hi {
                    return Err(format!("empty range `{}`", item.trim()));
                }
                ks.extend(lo..=hi);
            }
            None => ks.push(parse(item)?),
        }
    }
    Ok(ks)
}

pub fn parse_decoder_list(spec: &str) -> Result<Vec<DecoderKind>, String> {
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|e: DecodeError| e.to_string()))
        .collect()
}

fn stage_label(p: &StagePenalty) -> String {
    match p {
        StagePenalty::Uniform => "uniform weights".to_owned(),
        StagePenalty::Weighted(w) => {
            let (lo, hi) = w
                .as_slice()
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            format!("weights in [{lo:.4e}, {hi:.4e}]")
        }
        StagePenalty::PenalizedOn(t) => format!("penalized on {} indices", t.len()),
        StagePenalty::FreeOn(t) => format!("free on {t}"),
        StagePenalty::SupportSearch(s) => format!("support {s}"),
    }
}

fn cmd_decode(args: &DecodeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let params = args.params.params();
    let opts = args.solver.options();
    writeln!(out, "decoder: {}", args.decoder)?;
    writeln!(out, "matrix_file: {}", args.matrix_file.display())?;
    writeln!(out, "measurement_file: {}", args.measurement_file.display())?;
    if let Some(p) = &args.signal_file {
        writeln!(out, "signal_file: {}", p.display())?;
    }
    writeln!(
        out,
        "params: u = {}, L = {}, rho = {}, s_max = {}",
        params.u, params.iterations, params.rho, params.s_max
    )?;
    writeln!(
        out,
        "solver: max_iters = {}, feas_tol = {:e}, pivot_tol = {:e}",
        opts.max_iters.map_or("auto".to_owned(), |v| v.to_string()),
        opts.feas_tol,
        opts.pivot_tol
    )?;
    writeln!(out, "support_tol: {:e}", args.support_tol)?;
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if args.support_tol.is_nan() || args.support_tol < 0.0 {
        return Err(CliError::Usage("--support-tol must be non-negative".into()));
    }

    let a = read_matrix_csv(&args.matrix_file)?;
    let y = read_vector_csv(&args.measurement_file)?;
    if y.len() != a.rows() {
        return Err(CliError::Usage(format!(
            "{}: {} measurements for a matrix with {} rows",
            args.measurement_file.display(),
            y.len(),
            a.rows()
        )));
    }
    let truth = match &args.signal_file {
        Some(p) => {
            let x = read_vector_csv(p)?;
            if x.len() != a.cols() {
                return Err(CliError::Usage(format!(
                    "{}: signal has {} entries for a matrix with {} columns",
                    p.display(),
                    x.len(),
                    a.cols()
                )));
            }
            Some(SparseSignal::from_dense(&x).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        None => None,
    };
    writeln!(out, "dimensions: m = {}, n = {}", a.rows(), a.cols())?;

    let r = decode(args.decoder, &a, &y, &params, &opts)?;
    writeln!(out, "x_hat:")?;
    for v in &r.x_hat {
        writeln!(out, "  {v}")?;
    }
    writeln!(out, "objective: {}", r.objective())?;
    writeln!(out, "residual: {:e}", r.residual())?;
    writeln!(out, "converged: {}", r.converged)?;
    writeln!(out, "stages:")?;
    for s in &r.stages {
        writeln!(
            out,
            "  {}: {}, objective {}, residual {:e}, iterations {}",
            s.index,
            stage_label(&s.penalty),
            s.objective,
            s.residual,
            s.lp_iterations
        )?;
    }
    if let Some(truth) = &truth {
        let v = support_recovered(&r.x_hat, truth, args.support_tol)?;
        writeln!(out, "support_match: {}", v.support_match)?;
        writeln!(out, "detected_support: {}", v.detected_support)?;
        writeln!(out, "linf_error: {:e}", v.linf_error)?;
        writeln!(out, "l1_error: {:e}", v.l1_error)?;
    }
    if let Some(p) = &args.out {
        write_vector_csv(p, &r.x_hat)?;
        writeln!(out, "wrote {}", p.display())?;
    }
    if args.decoder == DecoderKind::L0 && !r.converged {
        return Err(CliError::Domain(format!(
            "no solution with at most {} nonzeros",
            params.s_max
        )));
    }
    Ok(())
}

pub fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => {
            let params = DecoderParams {
                u: args.u,
                iterations: args.iterations,
                rho: args.rho,
                s_max: args.s_max,
            };
            ExperimentConfig {
                n: args.n,
                m: args.m,
                k_values: parse_k_values(&args.k).map_err(CliError::Usage)?,
                trials_per_k: args.trials,
                decoders: parse_decoder_list(&args.decoders)
                    .map_err(CliError::Usage)?
                    .into_iter()
                    .map(|d| DecoderSpec::new(d, params))
                    .collect(),
                base_seed: args.seed,
                support_tol: args.support_tol,
                solver: SolverOptions::default(),
            }
        }
    };
    // Solver flags apply on top of a config file only when changed.
    let flags = args.solver.options();
    if args.config.is_none() || flags != SolverOptions::default() {
        config.solver = flags;
    }
    config.validate()?;
    Ok(config)
}

/// Decoder-by-k table. Rates are printed with shortest round-trip
/// formatting, so they parse back to exactly the values in the curve CSV.
pub fn rate_table(config: &ExperimentConfig, curve: &SuccessCurve) -> String {
    let labels: Vec<&str> = config.decoders.iter().map(|d| d.label()).collect();
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(0).max(20);
    let mut s = format!("{:>4}", "k");
    for l in &labels {
        s += &format!(" {l:>width$}");
    }
    s.push('\n');
    for &k in &config.k_values {
        s += &format!("{k:>4}");
        for l in &labels {
            let rate = curve.rate(l, k).expect("every decoder and k has a point");
            s += &format!(" {:>width$}", rate.to_string());
        }
        s.push('\n');
    }
    s
}

fn cmd_experiment(args: &ExperimentArgs, out: &mut impl Write) -> Result<(), CliError> {
    let config = experiment_config(args)?;
    writeln!(out, "configuration:")?;
    writeln!(out, "{}", config.to_json())?;
    writeln!(out, "workers: {}", args.workers)?;
    writeln!(out, "output prefix: {}", args.out.display())?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    }
    let result = run_experiment(&config, args.workers)?;
    let paths = write_results(&config, &result.curve, &result.records, &args.out, args.timings)?;

    writeln!(out, "success rates:")?;
    write!(out, "{}", rate_table(&config, &result.curve))?;
    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        writeln!(out, "{failed} decoder runs ended in an error (counted as failures)")?;
    }
    for p in [&paths.curve, &paths.trials, &paths.config] {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRegime {
    Uniform,
    RandomPositive,
    ZeroBlock,
}

impl WeightRegime {
    pub const ALL: [WeightRegime; 3] = [
        WeightRegime::Uniform,
        WeightRegime::RandomPositive,
        WeightRegime::ZeroBlock,
    ];
}

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub a: DenseMatrix,
    pub y: Vec<f64>,
    pub w: WeightVector,
    pub regime: WeightRegime,
}

/// Instance `index` of an oracle check: Gaussian `A` and `y`, with `m` and
/// `n` drawn from the bounds (`n >= m`) and the weight regime cycling with
/// the index.
pub fn oracle_instance(
    m_bounds: (usize, usize),
    n_bounds: (usize, usize),
    seed: u64,
    index: usize,
) -> OracleInstance {
    let mut g = GaussianStream::new(trial_seed(seed, 0, index));
    let m = m_bounds.0 + g.below(m_bounds.1 - m_bounds.0 + 1);
    let n_lo = n_bounds.0.max(m);
    let n = n_lo + g.below(n_bounds.1 - n_lo + 1);
    let a = DenseMatrix::from_fn(m, n, |_, _| g.normal());
    let y: Vec<f64> = (0..m).map(|_| g.normal()).collect();
    let regime = WeightRegime::ALL[index % 3];
    let w = match regime {
        WeightRegime::Uniform => vec![1.0; n],
        WeightRegime::RandomPositive => (0..n).map(|_| 0.05 + 2.0 * g.uniform()).collect(),
        WeightRegime::ZeroBlock => {
            let len = 1 + g.below(m);
            let start = g.below(n - len + 1);
            (0..n)
                .map(|i| if (start..start + len).contains(&i) { 0.0 } else { 1.0 })
                .collect()
        }
    };
    OracleInstance {
        a,
        y,
        w: WeightVector::new(w).expect("weights are non-negative"),
        regime,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub count: usize,
    /// Largest `|simplex - oracle| / (1 + |oracle|)`; infinite on a status
    /// disagreement.
    pub max_discrepancy: f64,
    pub worst_index: Option<usize>,
    pub failures: usize,
}

pub fn validate_oracle_bounds(m: (usize, usize), n: (usize, usize)) -> Result<(), CliError> {
    if m.0 == 0 || m.0 > m.1 || n.0 > n.1 {
        return Err(CliError::Usage(format!(
            "invalid size bounds m in {}..={}, n in {}..={}",
            m.0, m.1, n.0, n.1
        )));
    }
    if m.0 > n.1 {
        return Err(CliError::Usage(format!(
            "m_min = {} exceeds n_max = {}",
            m.0, n.1
        )));
    }
    // The oracle enumerates m-subsets of the 2n split columns.
    let worst = (m.0..=m.1)
        .flat_map(|mm| (n.0.max(mm)..=n.1).map(move |nn| binomial(2 * nn, mm)))
        .max()
        .unwrap_or(0);
    if worst > ORACLE_MAX_BASES {
        return Err(CliError::Usage(format!(
            "bounds allow {worst} candidate bases, above the oracle limit of {ORACLE_MAX_BASES}"
        )));
    }
    Ok(())
}

pub fn oracle_check(
    count: usize,
    m: (usize, usize),
    n: (usize, usize),
    seed: u64,
    opts: &SolverOptions,
) -> Result<OracleReport, CliError> {
    validate_oracle_bounds(m, n)?;
    let mut report = OracleReport {
        count,
        max_discrepancy: 0.0,
        worst_index: None,
        failures: 0,
    };
    for i in 0..count {
        let inst = oracle_instance(m, n, seed, i);
        let s = solve_weighted_l1(&inst.a, &inst.y, &inst.w, opts)
            .map_err(|e| CliError::Domain(format!("instance {i}: simplex failed: {e}")))?;
        let o = vertex_oracle(&inst.a, &inst.y, &inst.w).map_err(|e| CliError::Usage(e.to_string()))?;
        let d = if s.status != o.status {
            f64::INFINITY
        } else if o.status == LpStatus::Optimal {
            (s.objective - o.objective).abs() / (1.0 + o.objective.abs())
        } else {
            0.0
        };
        if d > ORACLE_TOLERANCE {
            report.failures += 1;
        }
        if report.worst_index.is_none() || d > report.max_discrepancy {
            report.max_discrepancy = d;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

fn cmd_oracle_check(args: &OracleCheckArgs, out: &mut impl Write) -> Result<(), CliError> {
    let opts = args.solver.options();
    writeln!(out, "count: {}", args.count)?;
    writeln!(out, "m: {}..={}", args.m_min, args.m_max)?;
    writeln!(out, "n: {}..={}", args.n_min, args.n_max)?;
    writeln!(out, "seed: {}", args.seed)?;
    writeln!(out, "weight regimes: uniform, random positive, zero block (cycled)")?;
    writeln!(out, "tolerance: {ORACLE_TOLERANCE:e}")?;
    let report = oracle_check(
        args.count,
        (args.m_min, args.m_max),
        (args.n_min, args.n_max),
        args.seed,
        &opts,
    )?;
    if report.count == 0 {
        writeln!(out, "no instances requested; nothing to compare (vacuous pass)")?;
        return Ok(());
    }
    writeln!(out, "max relative discrepancy: {:e}", report.max_discrepancy)?;
    if let Some(i) = report.worst_index {
        writeln!(out, "worst instance: {i}")?;
    }
    if report.failures > 0 {
        writeln!(out, "FAIL: {} of {} instances disagree", report.failures, report.count)?;
        return Err(CliError::Domain(format!(
            "{} instances exceed the tolerance",
            report.failures
        )));
    }
    writeln!(out, "PASS: {} instances agree", report.count)?;
    Ok(())
}

fn cmd_lemma1_check(args: &Lemma1Args, out: &mut impl Write) -> Result<(), CliError> {
    writeln!(out, "matrix_file: {}", args.matrix_file.display())?;
    writeln!(out, "s: {}", args.s)?;
    let a = read_matrix_csv(&args.matrix_file)?;
    writeln!(out, "dimensions: m = {}, n = {}", a.rows(), a.cols())?;
    match find_lemma1_violation(&a, args.s)? {
        None => writeln!(out, "true")?,
        Some(w) => {
            writeln!(out, "false")?;
            writeln!(out, "dependent columns: {w}")?;
        }
    }
    Ok(())
}
