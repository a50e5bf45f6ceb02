//! Fixtures shared by the criterion benchmarks.

use sparsebench_core::experiment::{generate_problem, trial_seed, GaussianStream, MeasurementProblem};
use sparsebench_core::DenseMatrix;

/// Gaussian problem with a k-sparse signal, drawn exactly as the Monte Carlo
/// sweeps draw trial 0 at this k.
pub fn problem(n: usize, m: usize, k: usize) -> MeasurementProblem {
    generate_problem(n, m, k, trial_seed(42, k, 0)).expect("k <= m <= n")
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut g = GaussianStream::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| g.normal())
}
