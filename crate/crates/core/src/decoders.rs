//! Decoders mapping measurements `y = A x*` back to a sparse estimate.
//!
//! Every l1-type decoder is a short sequence of calls to
//! [`solve_weighted_l1`]; the decoders differ only in how the weights of
//! each stage are derived from the previous iterate:
//!
//! | decoder     | stage 0   | stage `l >= 1` weights                              |
//! |-------------|-----------|-----------------------------------------------------|
//! | `l1`        | all ones  | none                                                |
//! | `rew-l1`    | all ones  | `1 / (abs(x_i) + u)`                                |
//! | `alt-l1`    | all ones  | 1 where `abs(x_i) < 1/u`, 0 elsewhere               |
//! | `2stage-l1` | all ones  | 0 on the `floor(rho m)` largest entries, 1 elsewhere |
//!
//! `l0` is an exhaustive search over supports and only usable on tiny
//! instances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinations::{binomial, Combinations};
use crate::linalg::{self, norm_inf, DenseMatrix, IndexSet, LinalgError};
use crate::lp::{solve_weighted_l1, LpError, LpSolution, LpStatus, SolverOptions, WeightVector};

/// Limit on `sum_{s <= s_max} C(n, s)` for [`decode_l0`].
pub const L0_MAX_CANDIDATES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stage {stage} of {decoder} ended with status {status:?}")]
    StageFailed {
        decoder: DecoderKind,
        stage: usize,
        status: LpStatus,
    },
    #[error("l0 search refused: {count} candidate supports exceeds the limit of {limit}")]
    SearchTooLarge { count: u128, limit: u128 },
}

impl DecodeError {
    /// True when the measurements admit no solution at all.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            DecodeError::StageFailed {
                status: LpStatus::Infeasible,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DecoderKind {
    #[serde(rename = "l0")]
    L0,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "rew-l1")]
    Reweighted,
    #[serde(rename = "alt-l1")]
    Alternating,
    #[serde(rename = "2stage-l1")]
    TwoStage,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 5] = [
        DecoderKind::L0,
        DecoderKind::L1,
        DecoderKind::Reweighted,
        DecoderKind::Alternating,
        DecoderKind::TwoStage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::L0 => "l0",
            DecoderKind::L1 => "l1",
            DecoderKind::Reweighted => "rew-l1",
            DecoderKind::Alternating => "alt-l1",
            DecoderKind::TwoStage => "2stage-l1",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, DecodeError> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                DecodeError::InvalidParameter(format!(
                    "unknown decoder `{s}` (expected one of l0, l1, rew-l1, alt-l1, 2stage-l1)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderParams {
    /// Reweighting offset (`rew-l1`) or inverse threshold (`alt-l1`).
    pub u: f64,
    /// Number of reweighting / thresholding iterations.
    pub iterations: usize,
    /// Fraction of `m` left unpenalised by the two-stage decoder.
    pub rho: f64,
    /// Largest support size tried by the l0 search.
    pub s_max: usize,
}

impl Default for DecoderParams {
    fn default() -> Self {
        Self {
            u: 3.0,
            iterations: 4,
            rho: 0.25,
            s_max: 3,
        }
    }
}

impl DecoderParams {
    pub fn validate(&self) -> Result<(), DecodeError> {
        check_u(self.u)?;
        if self.iterations == 0 {
            return Err(DecodeError::InvalidParameter(
                "iteration count must be at least 1".into(),
            ));
        }
        check_rho(self.rho)
    }
}

fn check_u(u: f64) -> Result<(), DecodeError> {
    if u.is_finite() && u > 0.0 {
        Ok(())
    } else {
        Err(DecodeError::InvalidParameter(format!(
            "u must be a positive finite number, got {u}"
        )))
    }
}

fn check_rho(rho: f64) -> Result<(), DecodeError> {
    if rho > 0.0 && rho < 0.5 {
        Ok(())
    } else {
        Err(DecodeError::InvalidParameter(format!(
            "rho must lie strictly between 0 and 1/2, got {rho}"
        )))
    }
}

/// Which objective a stage minimised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StagePenalty {
    /// Plain `||x||_1`.
    Uniform,
    /// `sum_i w_i |x_i|`.
    Weighted(WeightVector),
    /// `||x_T||_1`: only the listed coordinates are penalised.
    PenalizedOn(IndexSet),
    /// `||x_{T^c}||_1`: the listed coordinates are free.
    FreeOn(IndexSet),
    /// Least squares restricted to the listed support (l0 search).
    SupportSearch(IndexSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub penalty: StagePenalty,
    pub x: Vec<f64>,
    /// Stage objective; the support size for the l0 search.
    pub objective: f64,
    /// `||A x - y||_inf`
    pub residual: f64,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub x_hat: Vec<f64>,
    pub stages: Vec<StageRecord>,
    pub decoder: DecoderKind,
    pub converged: bool,
}

impl DecodeResult {
    pub fn final_stage(&self) -> &StageRecord {
        self.stages.last().expect("decoders record at least one stage")
    }

    pub fn objective(&self) -> f64 {
        self.final_stage().objective
    }

    pub fn residual(&self) -> f64 {
        self.final_stage().residual
    }
}

/// Residual bound every converged decoder output satisfies.
pub fn residual_tolerance(y: &[f64]) -> f64 {
    1e-8 * (1.0 + norm_inf(y))
}

fn lp_stage(
    decoder: DecoderKind,
    index: usize,
    a: &DenseMatrix,
    y: &[f64],
    weights: WeightVector,
    penalty: StagePenalty,
    opts: &SolverOptions,
) -> Result<StageRecord, DecodeError> {
    let LpSolution {
        x,
        objective,
        status,
        iterations,
    } = solve_weighted_l1(a, y, &weights, opts)?;
    if status != LpStatus::Optimal {
        return Err(DecodeError::StageFailed {
            decoder,
            stage: index,
            status,
        });
    }
    let residual = linalg::residual_inf(a, &x, y)?;
    Ok(StageRecord {
        index,
        penalty,
        x,
        objective,
        residual,
        lp_iterations: iterations,
    })
}

fn finish(decoder: DecoderKind, stages: Vec<StageRecord>, converged: bool) -> DecodeResult {
    DecodeResult {
        x_hat: stages.last().expect("non-empty").x.clone(),
        stages,
        decoder,
        converged,
    }
}

/// Sparsest solution by exhaustive search: supports of size `0..=s_max`
/// are tried in lexicographic order and the first whose least-squares fit
/// reproduces `y` (residual within [`residual_tolerance`]) wins. Reports
/// `converged = false` with `x_hat = 0` if none fits.
pub fn decode_l0(a: &DenseMatrix, y: &[f64], s_max: usize) -> Result<DecodeResult, DecodeError> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(LinalgError::DimensionMismatch {
            context: "measurements",
            expected: m,
            found: y.len(),
        }
        .into());
    }
    if s_max > m {
        return Err(DecodeError::InvalidParameter(format!(
            "s_max = {s_max} exceeds the number of measurements m = {m}"
        )));
    }
    let count = (0..=s_max)
        .map(|s| binomial(n, s))
        .fold(0u128, u128::saturating_add);
    if count > L0_MAX_CANDIDATES {
        return Err(DecodeError::SearchTooLarge {
            count,
            limit: L0_MAX_CANDIDATES,
        });
    }

    let tol = residual_tolerance(y);
    let mut examined = 0usize;
    for s in 0..=s_max {
        for subset in Combinations::new(n, s) {
            examined += 1;
            let cols = IndexSet::new(subset).expect("combinations are sorted");
            let sub = a.submatrix_columns(&cols)?;
            let z = linalg::solve_least_squares(&sub, y)?;
            let residual = linalg::residual_inf(&sub, &z, y)?;
            if residual <= tol {
                let mut x = vec![0.0; n];
                for (i, v) in cols.iter().zip(z) {
                    x[i] = v;
                }
                let stage = StageRecord {
                    index: 0,
                    penalty: StagePenalty::SupportSearch(cols),
                    x,
                    objective: s as f64,
                    residual,
                    lp_iterations: examined,
                };
                return Ok(finish(DecoderKind::L0, vec![stage], true));
            }
        }
    }

    let zero = vec![0.0; n];
    let residual = norm_inf(y);
    let stage = StageRecord {
        index: 0,
        penalty: StagePenalty::SupportSearch(IndexSet::empty()),
        x: zero,
        objective: 0.0,
        residual,
        lp_iterations: examined,
    };
    Ok(finish(DecoderKind::L0, vec![stage], false))
}

/// Basis pursuit: minimise `||x||_1` subject to `A x = y`.
pub fn decode_l1(
    a: &DenseMatrix,
    y: &[f64],
    opts: &SolverOptions,
) -> Result<DecodeResult, DecodeError> {
    let stage = lp_stage(
        DecoderKind::L1,
        0,
        a,
        y,
        WeightVector::uniform(a.cols()),
        StagePenalty::Uniform,
        opts,
    )?;
    Ok(finish(DecoderKind::L1, vec![stage], true))
}

/// Iteratively reweighted l1: after the plain l1 solve, runs exactly
/// `iterations` updates `w_i = 1 / (|x_i| + u)` followed by a weighted
/// solve. `iterations = 0` reduces to [`decode_l1`].
pub fn decode_reweighted(
    a: &DenseMatrix,
    y: &[f64],
    u: f64,
    iterations: usize,
    opts: &SolverOptions,
) -> Result<DecodeResult, DecodeError> {
    check_u(u)?;
    let kind = DecoderKind::Reweighted;
    let mut stages = vec![lp_stage(
        kind,
        0,
        a,
        y,
        WeightVector::uniform(a.cols()),
        StagePenalty::Uniform,
        opts,
    )?];
    for l in 1..=iterations {
        let prev = &stages[l - 1].x;
        let w = WeightVector::new(prev.iter().map(|v| 1.0 / (v.abs() + u)).collect())?;
        let stage = lp_stage(kind, l, a, y, w.clone(), StagePenalty::Weighted(w), opts)?;
        stages.push(stage);
    }
    Ok(finish(kind, stages, true))
}

/// Alternating l1 in its thresholding form: stage `l` minimises
/// `||x_T||_1` with `T = {i : |x_i^{(l-1)}| < 1/u}`.
///
/// Stops early, with `converged = true`, once `T` repeats (the stage that
/// repeats it is still solved and recorded). If `T` comes out empty the
/// stage objective would vanish identically, so the previous iterate is
/// returned instead. Otherwise runs `iterations` stages and reports
/// `converged = false`.
pub fn decode_alternating(
    a: &DenseMatrix,
    y: &[f64],
    u: f64,
    iterations: usize,
    opts: &SolverOptions,
) -> Result<DecodeResult, DecodeError> {
    check_u(u)?;
    let kind = DecoderKind::Alternating;
    let n = a.cols();
    let threshold = 1.0 / u;
    let mut stages = vec![lp_stage(
        kind,
        0,
        a,
        y,
        WeightVector::uniform(n),
        StagePenalty::Uniform,
        opts,
    )?];
    let mut prev_set = IndexSet::full(n);
    let mut converged = false;

    for l in 1..=iterations {
        let prev = &stages[l - 1].x;
        let set = IndexSet::new(
            (0..n).filter(|&i| prev[i].abs() < threshold).collect(),
        )
        .expect("increasing");
        if set.is_empty() {
            converged = true;
            break;
        }
        let w = WeightVector::mask(n, &set.complement(n));
        let repeated = set == prev_set;
        stages.push(lp_stage(
            kind,
            l,
            a,
            y,
            w,
            StagePenalty::PenalizedOn(set.clone()),
            opts,
        )?);
        if repeated {
            converged = true;
            break;
        }
        prev_set = set;
    }
    Ok(finish(kind, stages, converged))
}

/// Indices of the `k` entries of largest magnitude, ties to the smaller
/// index, returned in increasing order.
pub fn top_k_indices(x: &[f64], k: usize) -> Result<IndexSet, DecodeError> {
    if k > x.len() {
        return Err(DecodeError::InvalidParameter(format!(
            "cannot select {k} of {} components",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    order.truncate(k);
    Ok(IndexSet::from_unsorted(order))
}

/// Number of coordinates the two-stage decoder leaves unpenalised:
/// `floor(rho m)`.
pub fn two_stage_free_count(rho: f64, m: usize) -> usize {
    (rho * m as f64).floor() as usize
}

/// Two-stage l1: plain l1, then minimise `||x_{T^c}||_1` where `T` holds
/// the `floor(rho m)` largest entries of the first solution.
pub fn decode_two_stage(
    a: &DenseMatrix,
    y: &[f64],
    rho: f64,
    opts: &SolverOptions,
) -> Result<DecodeResult, DecodeError> {
    check_rho(rho)?;
    let kind = DecoderKind::TwoStage;
    let (m, n) = (a.rows(), a.cols());
    let k = two_stage_free_count(rho, m);
    if m > 0 && k >= m {
        return Err(DecodeError::InvalidParameter(format!(
            "floor(rho m) = {k} must be smaller than m = {m}"
        )));
    }
    let first = lp_stage(
        kind,
        0,
        a,
        y,
        WeightVector::uniform(n),
        StagePenalty::Uniform,
        opts,
    )?;
    let free = top_k_indices(&first.x, k.min(n))?;
    let second = lp_stage(
        kind,
        1,
        a,
        y,
        WeightVector::mask(n, &free),
        StagePenalty::FreeOn(free),
        opts,
    )?;
    Ok(finish(kind, vec![first, second], true))
}

/// Runs the decoder named by `kind` with the relevant fields of `params`.
pub fn decode(
    kind: DecoderKind,
    a: &DenseMatrix,
    y: &[f64],
    params: &DecoderParams,
    opts: &SolverOptions,
) -> Result<DecodeResult, DecodeError> {
    match kind {
        DecoderKind::L0 => decode_l0(a, y, params.s_max),
        DecoderKind::L1 => decode_l1(a, y, opts),
        DecoderKind::Reweighted => decode_reweighted(a, y, params.u, params.iterations, opts),
        DecoderKind::Alternating => decode_alternating(a, y, params.u, params.iterations, opts),
        DecoderKind::TwoStage => decode_two_stage(a, y, params.rho, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn fixture() -> DenseMatrix {
        DenseMatrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap()
    }

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn invertible() -> (DenseMatrix, Vec<f64>, Vec<f64>) {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0, 0.0], [0.0, 1.0, -1.0], [1.0, 0.0, 3.0]])
            .unwrap();
        let x = vec![0.5, -1.0, 2.0];
        let y = a.matvec(&x).unwrap();
        (a, y, x)
    }

    #[test]
    fn decoder_names_round_trip() {
        for k in DecoderKind::ALL {
            assert_eq!(k.name().parse::<DecoderKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("l2".parse::<DecoderKind>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(DecoderParams::default().validate().is_ok());
        for bad in [
            DecoderParams { u: 0.0, ..Default::default() },
            DecoderParams { u: f64::NAN, ..Default::default() },
            DecoderParams { iterations: 0, ..Default::default() },
            DecoderParams { rho: 0.5, ..Default::default() },
            DecoderParams { rho: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn l0_examples() {
        let a = fixture();
        let r = decode_l0(&a, &[0.0, 0.0], 2).unwrap();
        assert!(r.converged);
        assert_eq!(r.x_hat, vec![0.0; 3]);
        assert_eq!(r.objective(), 0.0);

        // Only column 2 reproduces (1, 1) on its own.
        let r = decode_l0(&a, &[1.0, 1.0], 1).unwrap();
        assert!(r.converged);
        assert!(max_abs_diff(&r.x_hat, &[0.0, 0.0, 1.0]) < 1e-14);

        let r = decode_l0(&a, &[1.0, 2.0], 1).unwrap();
        assert!(!r.converged);

        assert!(decode_l0(&a, &[1.0, 1.0], 3).is_err());
        let big = DenseMatrix::zeros(12, 200);
        assert!(matches!(
            decode_l0(&big, &[0.0; 12], 5),
            Err(DecodeError::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn l1_examples() {
        let (a, y, x) = invertible();
        let r = decode_l1(&a, &y, &opts()).unwrap();
        assert!(max_abs_diff(&r.x_hat, &x) < 1e-12);

        let r = decode_l1(&fixture(), &[1.0, 1.0], &opts()).unwrap();
        assert!(max_abs_diff(&r.x_hat, &[0.0, 0.0, 1.0]) < 1e-12);

        let r = decode_l1(&fixture(), &[0.0, 0.0], &opts()).unwrap();
        assert_eq!(r.x_hat, vec![0.0; 3]);
        assert_eq!(r.stages.len(), 1);
    }

    #[test]
    fn infeasible_measurements_fail_with_context() {
        let a = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let err = decode_l1(&a, &[1.0, 2.0], &opts()).unwrap_err();
        assert!(err.is_infeasible());
        let err = decode_two_stage(&a, &[1.0, 2.0], 0.25, &opts()).unwrap_err();
        assert!(matches!(err, DecodeError::StageFailed { stage: 0, .. }));
    }

    #[test]
    fn invertible_systems_are_decoder_independent() {
        let (a, y, x) = invertible();
        for kind in DecoderKind::ALL {
            let r = decode(kind, &a, &y, &DecoderParams::default(), &opts()).unwrap();
            assert!(max_abs_diff(&r.x_hat, &x) < 1e-10, "{kind}");
            for s in &r.stages {
                assert!(max_abs_diff(&s.x, &x) < 1e-10, "{kind} stage {}", s.index);
            }
        }
        for u in [0.01, 1.0, 100.0] {
            for l in [1, 3] {
                let r = decode_reweighted(&a, &y, u, l, &opts()).unwrap();
                assert!(max_abs_diff(&r.x_hat, &x) < 1e-10);
                assert_eq!(r.stages.len(), l + 1);
            }
        }
    }

    #[test]
    fn reweighted_without_updates_is_l1() {
        let a = fixture();
        let plain = decode_l1(&a, &[1.0, 1.0], &opts()).unwrap();
        let rew = decode_reweighted(&a, &[1.0, 1.0], 0.5, 0, &opts()).unwrap();
        assert_eq!(plain.x_hat, rew.x_hat);
        assert!(decode_reweighted(&a, &[1.0, 1.0], -1.0, 1, &opts()).is_err());
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_indices(&[3.0, -5.0, 2.0], 1).unwrap().as_slice(), &[1]);
        assert_eq!(top_k_indices(&[1.0, 1.0, 0.0], 2).unwrap().as_slice(), &[0, 1]);
        assert_eq!(top_k_indices(&[0.1, -4.0, 2.0], 3).unwrap().as_slice(), &[0, 1, 2]);
        assert!(top_k_indices(&[0.1], 0).unwrap().is_empty());
        assert!(top_k_indices(&[0.1], 2).is_err());
    }

    #[test]
    fn two_stage_free_count_rounds_down() {
        assert_eq!(two_stage_free_count(0.25, 50), 12);
        assert_eq!(two_stage_free_count(0.25, 32), 8);
        assert_eq!(two_stage_free_count(0.49, 2), 0);
    }

    #[test]
    fn two_stage_rejects_bad_rho() {
        let a = fixture();
        assert!(decode_two_stage(&a, &[1.0, 1.0], 0.5, &opts()).is_err());
        assert!(decode_two_stage(&a, &[1.0, 1.0], -0.1, &opts()).is_err());
    }

    #[test]
    fn alternating_small_u_keeps_everything_penalised() {
        // 1/u far above every entry: T = all indices, stage 1 repeats plain l1.
        let a = fixture();
        let r = decode_alternating(&a, &[1.0, 1.0], 1e-6, 4, &opts()).unwrap();
        assert!(r.converged);
        assert_eq!(r.stages.len(), 2);
        assert_eq!(r.stages[1].penalty, StagePenalty::PenalizedOn(IndexSet::full(3)));
        assert_eq!(r.stages[0].x, r.stages[1].x);
    }

    #[test]
    fn alternating_large_u_frees_the_support() {
        let a = fixture();
        let r = decode_alternating(&a, &[1.0, 1.0], 1e6, 1, &opts()).unwrap();
        // x^(0) = (0, 0, 1): T^1 = complement of its support.
        assert_eq!(
            r.stages[1].penalty,
            StagePenalty::PenalizedOn(IndexSet::new(vec![0, 1]).unwrap())
        );
        assert!(max_abs_diff(&r.x_hat, &[0.0, 0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn alternating_empty_threshold_set_returns_previous_iterate() {
        let (a, y, x) = invertible();
        // Every |x_i| >= 0.5 > 1/u.
        let r = decode_alternating(&a, &y, 4.0, 3, &opts()).unwrap();
        assert!(r.converged);
        assert_eq!(r.stages.len(), 1);
        assert!(max_abs_diff(&r.x_hat, &x) < 1e-12);
    }
}
