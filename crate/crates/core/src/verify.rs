//! Recovery checks: numerical support, support-recovery verdicts, and the
//! rank condition under which exhaustive l0 decoding is exact for every
//! `s`-sparse signal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinations::{binomial, Combinations};
use crate::linalg::{self, max_abs_diff, norm1, norm_inf, DenseMatrix, IndexSet, LinalgError};

/// Relative threshold below which a coordinate is treated as zero.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-4;

/// Largest number of column subsets [`check_lemma1_condition`] examines.
pub const LEMMA1_MAX_SUBSETS: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("2s = {twice_s} exceeds the number of measurements m = {m}")]
    SparsityTooLarge { twice_s: usize, m: usize },
    #[error("rank check refused: C(n, 2s) = {count} column subsets exceeds the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },
}

/// Ground-truth sparse signal: ambient dimension, support, nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    dim: usize,
    support: IndexSet,
    values: Vec<f64>,
}

impl SparseSignal {
    pub fn new(dim: usize, support: IndexSet, values: Vec<f64>) -> Result<Self, LinalgError> {
        if support.len() != values.len() {
            return Err(LinalgError::DimensionMismatch {
                context: "sparse signal values",
                expected: support.len(),
                found: values.len(),
            });
        }
        if let Some(index) = support.iter().find(|&i| i >= dim) {
            return Err(LinalgError::IndexOutOfRange { index, bound: dim });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite(pos));
        }
        Ok(Self {
            dim,
            support,
            values,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            support: IndexSet::empty(),
            values: Vec::new(),
        }
    }

    /// Sparse view of a dense vector (exact zeros dropped).
    pub fn from_dense(x: &[f64]) -> Result<Self, LinalgError> {
        let (support, values): (Vec<usize>, Vec<f64>) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self::new(x.len(), IndexSet::new(support)?, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (i, v) in self.support.iter().zip(&self.values) {
            x[i] = *v;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryVerdict {
    /// Detected support equals the true support exactly.
    pub support_match: bool,
    pub linf_error: f64,
    pub l1_error: f64,
    pub detected_support: IndexSet,
}

/// `{i : |x_i| > tol * max(1, ||x||_inf)}`
pub fn support(x: &[f64], tol: f64) -> IndexSet {
    assert!(tol >= 0.0, "support tolerance must be nonnegative");
    let threshold = tol * norm_inf(x).max(1.0);
    IndexSet::new(
        x.iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(i, _)| i)
            .collect(),
    )
    .expect("indices are produced in increasing order")
}

pub fn support_recovered(
    x_hat: &[f64],
    x_star: &SparseSignal,
    tol: f64,
) -> Result<RecoveryVerdict, VerifyError> {
    if x_hat.len() != x_star.dim() {
        return Err(LinalgError::DimensionMismatch {
            context: "recovered signal",
            expected: x_star.dim(),
            found: x_hat.len(),
        }
        .into());
    }
    let dense = x_star.to_dense();
    let detected_support = support(x_hat, tol);
    let diff: Vec<f64> = x_hat.iter().zip(&dense).map(|(a, b)| a - b).collect();
    Ok(RecoveryVerdict {
        support_match: &detected_support == x_star.support(),
        linf_error: max_abs_diff(x_hat, &dense),
        l1_error: norm1(&diff),
        detected_support,
    })
}

fn lemma1_guard(a: &DenseMatrix, s: usize) -> Result<(), VerifyError> {
    let twice_s = 2 * s;
    if twice_s > a.rows() {
        return Err(VerifyError::SparsityTooLarge {
            twice_s,
            m: a.rows(),
        });
    }
    let count = binomial(a.cols(), twice_s);
    if count > LEMMA1_MAX_SUBSETS {
        return Err(VerifyError::TooLarge {
            count,
            limit: LEMMA1_MAX_SUBSETS,
        });
    }
    Ok(())
}

/// First `2s`-column subset (lexicographic order) whose submatrix has
/// numerical rank below `2s`, or `None` if every such submatrix has full
/// column rank.
pub fn find_lemma1_violation(a: &DenseMatrix, s: usize) -> Result<Option<IndexSet>, VerifyError> {
    lemma1_guard(a, s)?;
    for subset in Combinations::new(a.cols(), 2 * s) {
        let cols = IndexSet::new(subset).expect("combinations are sorted");
        let sub = a.submatrix_columns(&cols)?;
        if linalg::numerical_rank(&sub, linalg::default_rank_tol(&sub)) < 2 * s {
            return Ok(Some(cols));
        }
    }
    Ok(None)
}

/// True iff every `2s`-column submatrix of `A` has rank `2s`, which is
/// equivalent to exact l0 decoding of every `s`-sparse signal.
pub fn check_lemma1_condition(a: &DenseMatrix, s: usize) -> Result<bool, VerifyError> {
    find_lemma1_violation(a, s).map(|w| w.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_examples() {
        assert_eq!(support(&[0.0, 1e-12, 5.0], 1e-4).as_slice(), &[2]);
        assert!(support(&[0.0; 4], 1e-4).is_empty());
        assert_eq!(support(&[1.0, -1.0], 0.0).as_slice(), &[0, 1]);
    }

    #[test]
    fn support_is_scale_invariant_above_unit_norm() {
        let x = [3.0, -0.001, 0.0, 7.0, 2e-4];
        for lambda in [-2.0, 1.5, 10.0, 1e6] {
            let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            assert_eq!(support(&scaled, 1e-4), support(&x, 1e-4));
        }
    }

    #[test]
    fn recovery_verdicts() {
        let truth = SparseSignal::new(4, IndexSet::new(vec![1, 3]).unwrap(), vec![2.0, -1.0])
            .unwrap();
        let exact = truth.to_dense();
        let v = support_recovered(&exact, &truth, 1e-4).unwrap();
        assert!(v.support_match);
        assert_eq!((v.linf_error, v.l1_error), (0.0, 0.0));

        let mut spurious = exact.clone();
        spurious[0] = 1e-12;
        assert!(support_recovered(&spurious, &truth, 1e-4).unwrap().support_match);

        let mut missing = exact.clone();
        missing[3] = 0.0;
        let v = support_recovered(&missing, &truth, 1e-4).unwrap();
        assert!(!v.support_match);
        assert_eq!(v.linf_error, 1.0);

        assert!(support_recovered(&[0.0; 3], &truth, 1e-4).is_err());
    }

    #[test]
    fn sparse_signal_validation() {
        assert!(SparseSignal::new(3, IndexSet::new(vec![3]).unwrap(), vec![1.0]).is_err());
        assert!(SparseSignal::new(3, IndexSet::new(vec![0]).unwrap(), vec![]).is_err());
        let s = SparseSignal::from_dense(&[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.support().as_slice(), &[1]);
        assert_eq!(s.sparsity(), 1);
    }

    #[test]
    fn lemma1_examples() {
        assert!(check_lemma1_condition(&DenseMatrix::identity(4), 2).unwrap());

        let dup = DenseMatrix::from_rows(&[[1.0, 2.0, 1.0], [0.0, 1.0, 0.0], [3.0, 1.0, 3.0]])
            .unwrap();
        assert!(!check_lemma1_condition(&dup, 1).unwrap());
        assert_eq!(
            find_lemma1_violation(&dup, 1).unwrap().unwrap().as_slice(),
            &[0, 2]
        );

        assert!(matches!(
            check_lemma1_condition(&DenseMatrix::identity(3), 2),
            Err(VerifyError::SparsityTooLarge { twice_s: 4, m: 3 })
        ));
        assert!(matches!(
            check_lemma1_condition(&DenseMatrix::zeros(40, 60), 10),
            Err(VerifyError::TooLarge { .. })
        ));
    }
}
