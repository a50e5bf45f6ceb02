//! Dense real linear algebra: a row-major matrix type, sorted index sets,
//! column-pivoted Householder QR, numerical rank and minimum-norm least
//! squares.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("index {index} out of range for dimension {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("ragged rows: row {row} has {found} entries, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("index set is not strictly increasing at position {0}")]
    NotStrictlyIncreasing(usize),
}

/// Real `rows x cols` matrix stored row-major. All entries are finite.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                context: "matrix storage",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite(pos));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::Ragged {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Builds a matrix with entry `(i, j)` set to `f(i, j)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `A x`, accumulated in index order.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                context: "matvec_transpose",
                expected: self.rows,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// The `m x |T|` matrix whose `j`-th column is column `T[j]` of `self`.
    pub fn submatrix_columns(&self, cols: &IndexSet) -> Result<DenseMatrix, LinalgError> {
        if let Some(&bad) = cols.as_slice().iter().find(|&&j| j >= self.cols) {
            return Err(LinalgError::IndexOutOfRange {
                index: bad,
                bound: self.cols,
            });
        }
        let idx = cols.as_slice();
        Ok(DenseMatrix::from_fn(self.rows, idx.len(), |i, j| {
            self.get(i, idx[j])
        }))
    }

    /// Returns a copy with columns reordered so that new column `j` is old
    /// column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> DenseMatrix {
        assert_eq!(perm.len(), self.cols);
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, perm[j]))
    }

    fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix({}x{})", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

/// Strictly increasing list of 0-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = LinalgError;

    fn try_from(v: Vec<usize>) -> Result<Self, LinalgError> {
        Self::new(v)
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

impl IndexSet {
    pub fn new(indices: Vec<usize>) -> Result<Self, LinalgError> {
        if let Some(pos) = indices.windows(2).position(|w| w[0] >= w[1]) {
            return Err(LinalgError::NotStrictlyIncreasing(pos + 1));
        }
        Ok(Self(indices))
    }

    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// `{0, 1, ..., n-1}`
    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Indices in `0..n` not in `self`.
    pub fn complement(&self, n: usize) -> IndexSet {
        IndexSet((0..n).filter(|&i| !self.contains(i)).collect())
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `max_i |a_i - b_i|`
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `||A x - y||_inf`
pub fn residual_inf(a: &DenseMatrix, x: &[f64], y: &[f64]) -> Result<f64, LinalgError> {
    if y.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            context: "residual",
            expected: a.rows(),
            found: y.len(),
        });
    }
    let ax = a.matvec(x)?;
    Ok(max_abs_diff(&ax, y))
}

/// Default relative pivot tolerance: `max(m, n) * eps`.
pub fn default_rank_tol(a: &DenseMatrix) -> f64 {
    a.rows().max(a.cols()) as f64 * f64::EPSILON
}

/// Householder QR of a matrix held as columns. With `pivot` set, the
/// remaining column of largest norm is swapped in at each step.
struct HouseholderQr {
    /// Working columns; on exit the upper triangle holds R.
    cols: Vec<Vec<f64>>,
    /// Reflector `k` acts on rows `k..`; `vs[k]` is its (unnormalised) vector.
    vs: Vec<Vec<f64>>,
    betas: Vec<f64>,
    /// Column `j` of the factored matrix is original column `perm[j]`.
    perm: Vec<usize>,
}

impl HouseholderQr {
    fn factor(mut cols: Vec<Vec<f64>>, rows: usize, pivot: bool) -> Self {
        let ncols = cols.len();
        let steps = rows.min(ncols);
        let mut perm: Vec<usize> = (0..ncols).collect();
        let mut vs = Vec::with_capacity(steps);
        let mut betas = Vec::with_capacity(steps);

        for k in 0..steps {
            if pivot {
                let mut best = k;
                let mut best_norm = -1.0;
                for (j, c) in cols.iter().enumerate().skip(k) {
                    let nrm: f64 = c[k..].iter().map(|v| v * v).sum();
                    if nrm > best_norm {
                        best_norm = nrm;
                        best = j;
                    }
                }
                cols.swap(k, best);
                perm.swap(k, best);
            }

            let x = &cols[k][k..];
            let alpha = norm2(x);
            let mut v = x.to_vec();
            let beta;
            if alpha == 0.0 {
                beta = 0.0;
            } else {
                let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
                v[0] += sign * alpha;
                let vtv: f64 = v.iter().map(|t| t * t).sum();
                beta = 2.0 / vtv;
                cols[k][k] = -sign * alpha;
                for t in cols[k][k + 1..].iter_mut() {
                    *t = 0.0;
                }
                for c in cols.iter_mut().skip(k + 1) {
                    let dot: f64 = v.iter().zip(&c[k..]).map(|(a, b)| a * b).sum();
                    let s = beta * dot;
                    for (ci, vi) in c[k..].iter_mut().zip(&v) {
                        *ci -= s * vi;
                    }
                }
            }
            vs.push(v);
            betas.push(beta);
        }

        Self {
            cols,
            vs,
            betas,
            perm,
        }
    }

    fn diag(&self) -> Vec<f64> {
        (0..self.vs.len()).map(|k| self.cols[k][k]).collect()
    }

    fn rank(&self, rel_tol: f64) -> usize {
        let d = self.diag();
        let largest = d.first().map_or(0.0, |v| v.abs());
        if largest == 0.0 {
            return 0;
        }
        d.iter().filter(|v| v.abs() > rel_tol * largest).count()
    }

    /// `Q^T y`
    fn apply_qt(&self, y: &mut [f64]) {
        for (k, (v, &beta)) in self.vs.iter().zip(&self.betas).enumerate() {
            if beta == 0.0 {
                continue;
            }
            let dot: f64 = v.iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            let s = beta * dot;
            for (yi, vi) in y[k..].iter_mut().zip(v) {
                *yi -= s * vi;
            }
        }
    }

    /// `Q y`
    fn apply_q(&self, y: &mut [f64]) {
        for (k, (v, &beta)) in self.vs.iter().zip(&self.betas).enumerate().rev() {
            if beta == 0.0 {
                continue;
            }
            let dot: f64 = v.iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            let s = beta * dot;
            for (yi, vi) in y[k..].iter_mut().zip(v) {
                *yi -= s * vi;
            }
        }
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> f64 {
        self.cols[j][i]
    }
}

/// Numerical rank via column-pivoted Householder QR: a diagonal entry of R
/// counts iff `|r_kk| > tol * |r_00|`. The zero and empty matrices have rank 0.
pub fn numerical_rank(a: &DenseMatrix, tol: f64) -> usize {
    assert!(tol >= 0.0, "rank tolerance must be nonnegative");
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    HouseholderQr::factor(a.columns(), a.rows(), true).rank(tol)
}

/// Minimum-norm minimiser of `||A x - y||_2`.
///
/// Uses a complete orthogonal decomposition: pivoted QR `A P = Q R`
/// truncated at the numerical rank `r`, then an unpivoted QR of the leading
/// `r` rows of `R` transposed to reach the minimum-norm point.
pub fn solve_least_squares(a: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if y.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            context: "least squares",
            expected: a.rows(),
            found: y.len(),
        });
    }
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Ok(vec![0.0; n]);
    }
    let qr = HouseholderQr::factor(a.columns(), m, true);
    let r = qr.rank(default_rank_tol(a));
    if r == 0 {
        return Ok(vec![0.0; n]);
    }

    let mut c = y.to_vec();
    qr.apply_qt(&mut c);

    // R1 is r x n; factor R1^T (n x r) = Z U, so R1 = U^T Z^T.
    let r1t: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..n).map(|j| qr.r(i, j)).collect())
        .collect();
    let cod = HouseholderQr::factor(r1t, n, false);

    // Forward substitution U^T w = c[..r].
    let mut w = vec![0.0; n];
    for i in 0..r {
        let mut s = c[i];
        for (j, wj) in w.iter().enumerate().take(i) {
            s -= cod.r(j, i) * wj;
        }
        w[i] = s / cod.r(i, i);
    }
    cod.apply_q(&mut w);

    let mut x = vec![0.0; n];
    for (j, &p) in qr.perm.iter().enumerate() {
        x[p] = w[j];
    }
    Ok(x)
}
