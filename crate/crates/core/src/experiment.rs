//! Seeded Monte Carlo sweeps of support-recovery success rate against
//! sparsity.
//!
//! # Reproducibility contract
//!
//! Every trial is generated from its own 64-bit seed
//!
//! ```text
//!     h    = mix(base_seed + 0x9E3779B97F4A7C15)
//!     h    = mix(h ^ (k           * 0xD1B54A32D192ED03))
//!     seed = mix(h ^ (trial_index * 0xABC98388FB8FAC03))      (wrapping u64)
//! ```
//!
//! where `mix` is the SplitMix64 finaliser. The seed initialises a ChaCha20
//! stream (`rand_core`'s `seed_from_u64`), from which, in order:
//!
//! 1. the `m x n` entries of `A`, row-major, each a standard normal;
//! 2. the support, by `k` steps of a partial Fisher-Yates shuffle of
//!    `0..n` (uniform integers by rejection sampling), then sorted;
//! 3. the `k` nonzero values, standard normal, in support order.
//!
//! Standard normals come from the Box-Muller transform, both outputs used,
//! over uniforms `((next_u64 >> 11) + 1) * 2^-53` in `(0, 1]`. `y = A x*` is
//! accumulated in index order. Trials therefore do not depend on each other,
//! on `trials_per_k`, or on the worker count.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoders::{decode, DecoderKind, DecoderParams};
use crate::io::fmt_float;
use crate::linalg::{DenseMatrix, IndexSet};
use crate::lp::SolverOptions;
use crate::verify::{support_recovered, RecoveryVerdict, SparseSignal, DEFAULT_SUPPORT_TOL};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

/// One decoding instance. `x_star` is known for generated problems.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementProblem {
    pub a: DenseMatrix,
    pub y: Vec<f64>,
    pub x_star: Option<SparseSignal>,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial_index` at sparsity `k`.
pub fn trial_seed(base_seed: u64, k: usize, trial_index: usize) -> u64 {
    let h = mix64(base_seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let h = mix64(h ^ (k as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    mix64(h ^ (trial_index as u64).wrapping_mul(0xABC9_8388_FB8F_AC03))
}

/// Standard normal source: Box-Muller over a ChaCha20 stream.
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let radius = (-2.0 * self.uniform().ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * self.uniform();
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Gaussian ensemble: `A` and the nonzeros of `x*` i.i.d. N(0, 1), support
/// uniform among `k`-subsets. Fully determined by `seed`.
pub fn generate_problem(
    n: usize,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<MeasurementProblem, ExperimentError> {
    if !(k <= m && m <= n) || m == 0 {
        return Err(ExperimentError::InvalidConfig(format!(
            "need 0 <= k <= m <= n and m > 0, got n = {n}, m = {m}, k = {k}"
        )));
    }
    let mut g = GaussianStream::new(seed);
    let data: Vec<f64> = (0..m * n).map(|_| g.normal()).collect();
    let a = DenseMatrix::new(m, n, data).expect("generated entries are finite");

    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + g.below(n - i);
        pool.swap(i, j);
    }
    let support = IndexSet::from_unsorted(pool[..k].to_vec());
    let values: Vec<f64> = (0..k).map(|_| g.normal()).collect();
    let x_star = SparseSignal::new(n, support, values).expect("support is in range");
    let y = a.matvec(&x_star.to_dense()).expect("dimensions agree");
    Ok(MeasurementProblem {
        a,
        y,
        x_star: Some(x_star),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub name: DecoderKind,
    #[serde(default)]
    pub params: DecoderParams,
    /// Column label in the outputs; defaults to the decoder name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl DecoderSpec {
    pub fn new(name: DecoderKind, params: DecoderParams) -> Self {
        Self {
            name,
            params,
            label: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.name.name())
    }
}

fn default_support_tol() -> f64 {
    DEFAULT_SUPPORT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub k_values: Vec<usize>,
    pub trials_per_k: usize,
    pub decoders: Vec<DecoderSpec>,
    pub base_seed: u64,
    #[serde(default = "default_support_tol")]
    pub support_tol: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.m == 0 || self.n < self.m {
            return bad(format!("need 0 < m <= n, got n = {}, m = {}", self.n, self.m));
        }
        if self.k_values.is_empty() {
            return bad("k_values is empty".into());
        }
        if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k > self.m) {
            return bad(format!("sparsity {k} outside 1..={}", self.m));
        }
        if self.trials_per_k == 0 {
            return bad("trials_per_k must be at least 1".into());
        }
        if self.decoders.is_empty() {
            return bad("no decoders configured".into());
        }
        for (i, d) in self.decoders.iter().enumerate() {
            if let Err(e) = d.params.validate() {
                return bad(format!("decoder {}: {e}", d.label()));
            }
            if self.decoders[..i].iter().any(|o| o.label() == d.label()) {
                return bad(format!("duplicate decoder label `{}`", d.label()));
            }
        }
        if !(self.support_tol >= 0.0 && self.support_tol.is_finite()) {
            return bad(format!("support_tol must be >= 0, got {}", self.support_tol));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| ExperimentError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_reader(file).map_err(|source| ExperimentError::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serialisable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub k: usize,
    pub trial_index: usize,
    /// Position of the decoder in the configuration.
    pub decoder_index: usize,
    pub decoder_label: String,
    pub decoder: DecoderKind,
    /// `None` when decoding failed; see `error`.
    pub verdict: Option<RecoveryVerdict>,
    pub error: Option<String>,
    pub lp_iterations: usize,
    pub wall_time: f64,
    pub seed_used: u64,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.support_match)
    }
}

/// Where a trial sits in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialContext {
    pub decoder_index: usize,
    pub k: usize,
    pub trial_index: usize,
    pub seed: u64,
}

/// Decodes one problem and scores support recovery. Decoder failures are
/// captured in the record, never propagated.
pub fn run_trial(
    problem: &MeasurementProblem,
    spec: &DecoderSpec,
    support_tol: f64,
    opts: &SolverOptions,
    ctx: TrialContext,
) -> TrialRecord {
    let start = Instant::now();
    let mut record = TrialRecord {
        k: ctx.k,
        trial_index: ctx.trial_index,
        decoder_index: ctx.decoder_index,
        decoder_label: spec.label().to_owned(),
        decoder: spec.name,
        verdict: None,
        error: None,
        lp_iterations: 0,
        wall_time: 0.0,
        seed_used: ctx.seed,
    };
    let Some(x_star) = &problem.x_star else {
        record.error = Some("problem has no ground truth".into());
        return record;
    };
    match decode(spec.name, &problem.a, &problem.y, &spec.params, opts) {
        Ok(result) => {
            record.lp_iterations = result.stages.iter().map(|s| s.lp_iterations).sum();
            match support_recovered(&result.x_hat, x_star, support_tol) {
                Ok(v) => record.verdict = Some(v),
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.wall_time = start.elapsed().as_secs_f64();
    record
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub decoder: String,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
}

impl CurvePoint {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Success counts per (decoder, k), decoders in configuration order and
/// `k` in sweep order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub points: Vec<CurvePoint>,
}

impl SuccessCurve {
    pub fn point(&self, decoder: &str, k: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.decoder == decoder && p.k == k)
    }

    pub fn rate(&self, decoder: &str, k: usize) -> Option<f64> {
        self.point(decoder, k).map(CurvePoint::rate)
    }

    pub fn for_decoder<'a>(&'a self, decoder: &'a str) -> impl Iterator<Item = &'a CurvePoint> {
        self.points.iter().filter(move |p| p.decoder == decoder)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub curve: SuccessCurve,
    /// Sorted by (decoder_index, k position, trial_index).
    pub records: Vec<TrialRecord>,
}

/// Runs the sweep. Every configured decoder sees the same problem for a
/// given `(k, trial_index)`. `workers = 0` uses rayon's default pool size.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .k_values
        .iter()
        .enumerate()
        .flat_map(|(kpos, _)| (0..config.trials_per_k).map(move |t| (kpos, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;

    let per_job: Vec<Vec<(usize, TrialRecord)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(kpos, trial_index)| {
                let k = config.k_values[kpos];
                let seed = trial_seed(config.base_seed, k, trial_index);
                let problem = generate_problem(config.n, config.m, k, seed)
                    .expect("validated configuration");
                config
                    .decoders
                    .iter()
                    .enumerate()
                    .map(|(decoder_index, spec)| {
                        let ctx = TrialContext {
                            decoder_index,
                            k,
                            trial_index,
                            seed,
                        };
                        let rec = run_trial(&problem, spec, config.support_tol, &config.solver, ctx);
                        (kpos, rec)
                    })
                    .collect()
            })
            .collect()
    });

    let mut keyed: Vec<(usize, TrialRecord)> = per_job.into_iter().flatten().collect();
    keyed.sort_by_key(|(kpos, r)| (r.decoder_index, *kpos, r.trial_index));

    let mut points = Vec::with_capacity(config.decoders.len() * config.k_values.len());
    for spec in &config.decoders {
        for &k in &config.k_values {
            points.push(CurvePoint {
                decoder: spec.label().to_owned(),
                k,
                trials: 0,
                successes: 0,
            });
        }
    }
    let nk = config.k_values.len();
    for (kpos, r) in &keyed {
        let p = &mut points[r.decoder_index * nk + kpos];
        p.trials += 1;
        p.successes += usize::from(r.success());
    }

    Ok(ExperimentOutput {
        curve: SuccessCurve { points },
        records: keyed.into_iter().map(|(_, r)| r).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultPaths {
    pub curve: PathBuf,
    pub trials: PathBuf,
    pub config: PathBuf,
}

impl ResultPaths {
    pub fn for_prefix(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref().as_os_str().to_string_lossy().into_owned();
        Self {
            curve: PathBuf::from(format!("{p}_curve.csv")),
            trials: PathBuf::from(format!("{p}_trials.csv")),
            config: PathBuf::from(format!("{p}_config.json")),
        }
    }
}

/// Writes `<prefix>_curve.csv`, `<prefix>_trials.csv` and
/// `<prefix>_config.json`. Wall-clock times are only written when
/// `include_timing` is set, since they would break byte-for-byte
/// reproducibility.
pub fn write_results(
    config: &ExperimentConfig,
    curve: &SuccessCurve,
    records: &[TrialRecord],
    prefix: impl AsRef<Path>,
    include_timing: bool,
) -> Result<ResultPaths, ExperimentError> {
    let paths = ResultPaths::for_prefix(prefix);
    let csv_err = |path: &Path| {
        let path = path.to_owned();
        move |source| ExperimentError::Csv { path, source }
    };

    let mut w = csv::Writer::from_path(&paths.curve).map_err(csv_err(&paths.curve))?;
    w.write_record(["decoder", "k", "trials", "successes", "rate"])
        .map_err(csv_err(&paths.curve))?;
    for p in &curve.points {
        w.write_record([
            p.decoder.clone(),
            p.k.to_string(),
            p.trials.to_string(),
            p.successes.to_string(),
            fmt_float(p.rate()),
        ])
        .map_err(csv_err(&paths.curve))?;
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: paths.curve.clone(),
        source,
    })?;

    let mut w = csv::Writer::from_path(&paths.trials).map_err(csv_err(&paths.trials))?;
    let mut header = vec![
        "decoder",
        "k",
        "trial",
        "seed",
        "success",
        "linf_error",
        "l1_error",
        "detected_support_size",
        "lp_iterations",
        "error",
    ];
    if include_timing {
        header.push("wall_time");
    }
    w.write_record(&header).map_err(csv_err(&paths.trials))?;
    for r in records {
        let (linf, l1, size) = match &r.verdict {
            Some(v) => (
                fmt_float(v.linf_error),
                fmt_float(v.l1_error),
                v.detected_support.len().to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let mut row = vec![
            r.decoder_label.clone(),
            r.k.to_string(),
            r.trial_index.to_string(),
            r.seed_used.to_string(),
            u8::from(r.success()).to_string(),
            linf,
            l1,
            size,
            r.lp_iterations.to_string(),
            r.error.clone().unwrap_or_default(),
        ];
        if include_timing {
            row.push(fmt_float(r.wall_time));
        }
        w.write_record(&row).map_err(csv_err(&paths.trials))?;
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: paths.trials.clone(),
        source,
    })?;

    let io_err = |source| ExperimentError::Io {
        path: paths.config.clone(),
        source,
    };
    let mut f = File::create(&paths.config).map_err(io_err)?;
    writeln!(f, "{}", config.to_json()).map_err(io_err)?;
    Ok(paths)
}
