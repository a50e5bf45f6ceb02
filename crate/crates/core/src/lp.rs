//! Weighted l1 minimisation under equality constraints,
//!
//! ```text
//!     minimise  sum_i w_i |x_i|   subject to  A x = y,
//! ```
//!
//! solved exactly as the linear program obtained from the split
//! `x = p - q`, `p, q >= 0`:
//!
//! ```text
//!     minimise  w^T (p + q)   subject to  [A  -A] [p; q] = y.
//! ```
//!
//! The solver is a dense two-phase revised simplex with an explicit basis
//! inverse (product-form updates, periodic refactorisation). Pricing is
//! Dantzig's rule until the objective stalls, after which Bland's rule takes
//! over for the rest of the phase so the method always terminates.
//!
//! [`vertex_oracle`] enumerates every basis of the same LP and is only meant
//! for cross-checking the simplex on tiny instances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinations::{binomial, Combinations};
use crate::linalg::{self, norm_inf, DenseMatrix, LinalgError};

/// Largest number of bases [`vertex_oracle`] agrees to enumerate.
pub const ORACLE_MAX_BASES: u128 = 1_000_000;

const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("simplex exceeded the iteration cap of {0} pivots")]
    IterationLimit(usize),
    #[error("basis matrix became numerically singular")]
    SingularBasis,
    #[error("vertex enumeration refused: {count} candidate bases exceeds the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },
}

/// Nonnegative per-coordinate weights of the l1 objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, LpError> {
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(LpError::NonFinite("weights"));
            }
            if value < 0.0 {
                return Err(LpError::NegativeWeight { index, value });
            }
        }
        Ok(Self(weights))
    }

    /// All ones: the plain l1 norm.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// Weight 0 on `free`, 1 elsewhere. This is the truncated l1 norm
    /// `||x_{free^c}||_1`.
    pub fn mask(n: usize, free: &linalg::IndexSet) -> Self {
        let mut w = vec![1.0; n];
        for i in free.iter() {
            w[i] = 0.0;
        }
        Self(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `sum_i w_i |x_i|`
    pub fn weighted_l1(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(w, v)| w * v.abs()).sum()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = LpError;

    fn try_from(v: Vec<f64>) -> Result<Self, LpError> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    /// The simplex saw an unbounded ray. With `w >= 0` the objective is
    /// bounded below, so this only happens through numerical trouble.
    UnboundedDegenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// `sum_i w_i |x_i|` evaluated at `x`.
    pub objective: f64,
    pub status: LpStatus,
    /// Simplex pivots, or bases examined for the oracle.
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Pivot cap across both phases; `None` means `50 * (2n + m)`.
    pub max_iters: Option<usize>,
    /// Absolute tolerance on residuals and primal feasibility.
    pub feas_tol: f64,
    /// Smallest admissible pivot element in the ratio test.
    pub pivot_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: None,
            feas_tol: 1e-9,
            pivot_tol: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn iteration_cap(&self, m: usize, n: usize) -> usize {
        self.max_iters.unwrap_or(50 * (2 * n + m))
    }
}

fn check_inputs(a: &DenseMatrix, y: &[f64], w: &WeightVector) -> Result<(), LpError> {
    if y.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            context: "measurements",
            expected: a.rows(),
            found: y.len(),
        }
        .into());
    }
    if w.dim() != a.cols() {
        return Err(LinalgError::DimensionMismatch {
            context: "weights",
            expected: a.cols(),
            found: w.dim(),
        }
        .into());
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite("measurements"));
    }
    Ok(())
}

/// Global minimiser of `sum_i w_i |x_i|` subject to `A x = y`.
///
/// When zero weights leave a non-trivial optimal face, the vertex reached
/// by the pivot rule is returned; the result is deterministic.
pub fn solve_weighted_l1(
    a: &DenseMatrix,
    y: &[f64],
    w: &WeightVector,
    opts: &SolverOptions,
) -> Result<LpSolution, LpError> {
    check_inputs(a, y, w)?;
    let mut simplex = Simplex::new(a, y, w, opts);
    simplex.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded,
}

/// Variable layout: `0..n` are `p`, `n..2n` are `q`, `2n..2n+m` artificials.
struct Simplex<'a> {
    m: usize,
    n: usize,
    /// Column-major copy of `D A`, where `D` flips rows with `y_i < 0`.
    cols: Vec<f64>,
    rhs: Vec<f64>,
    weights: &'a [f64],
    opts: &'a SolverOptions,
    cap: usize,
    dual_tol: f64,

    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Row-major `m x m` basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(a: &DenseMatrix, y: &[f64], w: &'a WeightVector, opts: &'a SolverOptions) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let signs: Vec<f64> = y
            .iter()
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let mut cols = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                cols[j * m + i] = signs[i] * a.get(i, j);
            }
        }
        let rhs: Vec<f64> = y.iter().zip(&signs).map(|(v, s)| v * s).collect();

        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut in_basis = vec![false; 2 * n + m];
        for flag in in_basis.iter_mut().skip(2 * n) {
            *flag = true;
        }

        Self {
            m,
            n,
            cols,
            xb: rhs.clone(),
            rhs,
            weights: w.as_slice(),
            opts,
            cap: opts.iteration_cap(m, n),
            dual_tol: opts.feas_tol * norm_inf(w.as_slice()),
            basis: (2 * n..2 * n + m).collect(),
            in_basis,
            binv,
            pivots: 0,
            since_refactor: 0,
        }
    }

    #[inline]
    fn column(&self, t: usize) -> &[f64] {
        &self.cols[t * self.m..(t + 1) * self.m]
    }

    fn is_artificial(&self, var: usize) -> bool {
        var >= 2 * self.n
    }

    fn cost(&self, var: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => {
                if self.is_artificial(var) {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if self.is_artificial(var) {
                    0.0
                } else {
                    self.weights[var % self.n]
                }
            }
        }
    }

    /// Dense column of variable `var` in the sign-flipped system.
    fn var_column(&self, var: usize) -> Vec<f64> {
        let m = self.m;
        if self.is_artificial(var) {
            let mut e = vec![0.0; m];
            e[var - 2 * self.n] = 1.0;
            e
        } else if var < self.n {
            self.column(var).to_vec()
        } else {
            self.column(var - self.n).iter().map(|v| -v).collect()
        }
    }

    /// `B^{-1} a_var`
    fn ftran(&self, var: usize) -> Vec<f64> {
        let m = self.m;
        let col = self.var_column(var);
        (0..m)
            .map(|i| {
                self.binv[i * m..(i + 1) * m]
                    .iter()
                    .zip(&col)
                    .map(|(b, c)| b * c)
                    .sum()
            })
            .collect()
    }

    fn objective(&self, phase: Phase) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&v, x)| self.cost(v, phase) * x)
            .sum()
    }

    fn run(&mut self) -> Result<LpSolution, LpError> {
        let y_scale = 1.0 + norm_inf(&self.rhs);

        if self.m > 0 {
            if self.phase(Phase::One)? == PhaseEnd::Unbounded {
                // Phase one is bounded by construction; reaching here means
                // the basis has drifted.
                return Ok(self.solution(LpStatus::UnboundedDegenerate));
            }
            self.refactor()?;
            if self.objective(Phase::One) > self.opts.feas_tol * y_scale {
                return Ok(self.solution(LpStatus::Infeasible));
            }
            self.drive_out_artificials()?;
        }

        if self.phase(Phase::Two)? == PhaseEnd::Unbounded {
            return Ok(self.solution(LpStatus::UnboundedDegenerate));
        }
        self.refactor()?;
        Ok(self.solution(LpStatus::Optimal))
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let n = self.n;
        let mut x = vec![0.0; n];
        if status == LpStatus::Optimal {
            for (&var, &val) in self.basis.iter().zip(&self.xb) {
                if var < n {
                    x[var] += val;
                } else if var < 2 * n {
                    x[var - n] -= val;
                }
            }
        }
        let objective = self
            .weights
            .iter()
            .zip(&x)
            .map(|(w, v)| w * v.abs())
            .sum();
        LpSolution {
            x,
            objective,
            status,
            iterations: self.pivots,
        }
    }

    fn phase(&mut self, phase: Phase) -> Result<PhaseEnd, LpError> {
        let (m, n) = (self.m, self.n);
        let dual_tol = match phase {
            Phase::One => self.opts.feas_tol,
            Phase::Two => self.dual_tol,
        };
        let stall_limit = 2 * (m + n);
        let mut bland = false;
        let mut best_obj = self.objective(phase);
        let mut stalled = 0usize;

        loop {
            // Simplex multipliers pi = c_B^T B^{-1}.
            let mut pi = vec![0.0; m];
            for (i, &var) in self.basis.iter().enumerate() {
                let c = self.cost(var, phase);
                if c != 0.0 {
                    for (p, b) in pi.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                        *p += c * b;
                    }
                }
            }

            // Price p_t and q_t together: both share the dot product pi . a_t.
            let mut entering: Option<(usize, f64)> = None;
            'pricing: for t in 0..n {
                let g: f64 = pi.iter().zip(self.column(t)).map(|(p, a)| p * a).sum();
                let c = self.cost(t, phase);
                for (var, d) in [(t, c - g), (t + n, c + g)] {
                    if self.in_basis[var] || d >= -dual_tol {
                        continue;
                    }
                    if bland {
                        // Smallest index: p_t for all t come before any q_t.
                        match entering {
                            Some((cur, _)) if cur <= var => {}
                            _ => entering = Some((var, d)),
                        }
                        if var < n {
                            break 'pricing;
                        }
                    } else if entering.is_none_or(|(_, best)| d < best) {
                        entering = Some((var, d));
                    }
                }
            }
            let Some((enter, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            let alpha = self.ftran(enter);
            let Some(leave) = self.ratio_test(&alpha, bland) else {
                return Ok(PhaseEnd::Unbounded);
            };

            if self.pivots >= self.cap {
                return Err(LpError::IterationLimit(self.cap));
            }
            self.pivot(enter, leave, &alpha)?;

            let obj = self.objective(phase);
            if obj < best_obj - 1e-12 * (1.0 + best_obj.abs()) {
                best_obj = obj;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= stall_limit {
                    bland = true;
                }
            }
        }
    }

    /// Leaving row for entering column `alpha`, or `None` if the ray is
    /// unbounded. Ties go to the larger pivot element, or under Bland's rule
    /// to the smallest basic variable index.
    fn ratio_test(&self, alpha: &[f64], bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a <= self.opts.pivot_tol {
                continue;
            }
            let ratio = self.xb[i].max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((r, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    let better = if tie {
                        if bland {
                            self.basis[i] < self.basis[r]
                        } else {
                            a > alpha[r]
                        }
                    } else {
                        ratio < br
                    };
                    if better {
                        Some((i, ratio))
                    } else {
                        Some((r, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, enter: usize, row: usize, alpha: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let piv = alpha[row];
        let theta = self.xb[row] / piv;
        for (i, xb) in self.xb.iter_mut().enumerate() {
            if i != row {
                *xb -= theta * alpha[i];
            }
        }
        self.xb[row] = theta;

        let pivot_row: Vec<f64> = self.binv[row * m..(row + 1) * m]
            .iter()
            .map(|v| v / piv)
            .collect();
        for i in 0..m {
            if i == row || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for (b, p) in self.binv[i * m..(i + 1) * m].iter_mut().zip(&pivot_row) {
                *b -= f * p;
            }
        }
        self.binv[row * m..(row + 1) * m].copy_from_slice(&pivot_row);

        let leaving = self.basis[row];
        self.in_basis[leaving] = false;
        self.in_basis[enter] = true;
        self.basis[row] = enter;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes `B^{-1}` from scratch by Gauss-Jordan elimination with
    /// partial pivoting, then `x_B = B^{-1} b`.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut b = vec![0.0; m * m];
        for (j, &var) in self.basis.iter().enumerate() {
            for (i, v) in self.var_column(var).into_iter().enumerate() {
                b[i * m + j] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let (p, pmax) = (k..m)
                .map(|i| (i, b[i * m + k].abs()))
                .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if pmax <= f64::EPSILON {
                return Err(LpError::SingularBasis);
            }
            if p != k {
                for j in 0..m {
                    b.swap(p * m + j, k * m + j);
                    inv.swap(p * m + j, k * m + j);
                }
            }
            let d = b[k * m + k];
            for j in 0..m {
                b[k * m + j] /= d;
                inv[k * m + j] /= d;
            }
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = b[i * m + k];
                if f == 0.0 {
                    continue;
                }
                for j in 0..m {
                    b[i * m + j] -= f * b[k * m + j];
                    inv[i * m + j] -= f * inv[k * m + j];
                }
            }
        }
        self.binv = inv;
        self.xb = (0..m)
            .map(|i| {
                self.binv[i * m..(i + 1) * m]
                    .iter()
                    .zip(&self.rhs)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(())
    }

    /// Replaces zero-level artificials left in the basis after phase one by
    /// structural columns. Artificials on redundant rows cannot be replaced
    /// and stay basic at level zero; they never re-enter once they leave.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let (m, n) = (self.m, self.n);
        for row in 0..m {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let binv_row = &self.binv[row * m..(row + 1) * m];
            let mut best: Option<(usize, f64)> = None;
            for t in 0..n {
                if self.in_basis[t] || self.in_basis[t + n] {
                    continue;
                }
                let r: f64 = binv_row.iter().zip(self.column(t)).map(|(a, b)| a * b).sum();
                if r.abs() > self.opts.pivot_tol && best.is_none_or(|(_, b)| r.abs() > b) {
                    best = Some((t, r.abs()));
                }
            }
            if let Some((t, _)) = best {
                let alpha = self.ftran(t);
                self.pivot(t, row, &alpha)?;
            }
        }
        self.refactor()
    }
}

/// Exhaustive minimum over all basic feasible solutions of the split LP.
///
/// Bases are enumerated as `r`-subsets of the `2n` split columns in
/// lexicographic order, with `r = rank(A)`; a subset counts when its columns
/// are independent, its coordinates are `>= -1e-9` and the residual is at
/// most `1e-9 (1 + ||y||_inf)`. Ties in objective keep the earliest subset.
/// Refuses instances with more than [`ORACLE_MAX_BASES`] candidate bases.
pub fn vertex_oracle(a: &DenseMatrix, y: &[f64], w: &WeightVector) -> Result<LpSolution, LpError> {
    check_inputs(a, y, w)?;
    let (m, n) = (a.rows(), a.cols());
    let count = binomial(2 * n, m);
    if count > ORACLE_MAX_BASES {
        return Err(LpError::TooLarge {
            count,
            limit: ORACLE_MAX_BASES,
        });
    }

    let tol = 1e-9;
    let res_tol = tol * (1.0 + norm_inf(y));
    let rank = linalg::numerical_rank(a, linalg::default_rank_tol(a));
    let split = DenseMatrix::from_fn(m, 2 * n, |i, j| {
        if j < n {
            a.get(i, j)
        } else {
            -a.get(i, j - n)
        }
    });

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut examined = 0usize;
    for subset in Combinations::new(2 * n, rank) {
        examined += 1;
        let cols = linalg::IndexSet::new(subset.clone()).expect("combinations are sorted");
        let b = split.submatrix_columns(&cols)?;
        if linalg::numerical_rank(&b, linalg::default_rank_tol(&b)) < rank {
            continue;
        }
        let z = linalg::solve_least_squares(&b, y)?;
        if z.iter().any(|&v| v < -tol) || linalg::residual_inf(&b, &z, y)? > res_tol {
            continue;
        }
        let mut x = vec![0.0; n];
        for (&j, &v) in subset.iter().zip(&z) {
            if j < n {
                x[j] += v;
            } else {
                x[j - n] -= v;
            }
        }
        let obj = w.weighted_l1(&x);
        let improves = best
            .as_ref()
            .is_none_or(|(b, _)| obj < b - 1e-12 * (1.0 + b.abs()));
        if improves {
            best = Some((obj, x));
        }
    }

    Ok(match best {
        Some((objective, x)) => LpSolution {
            x,
            objective,
            status: LpStatus::Optimal,
            iterations: examined,
        },
        None => LpSolution {
            x: vec![0.0; n],
            objective: 0.0,
            status: LpStatus::Infeasible,
            iterations: examined,
        },
    })
}
