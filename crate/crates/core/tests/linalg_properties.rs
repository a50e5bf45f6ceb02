use proptest::prelude::*;
use sparsebench_core::experiment::GaussianStream;
use sparsebench_core::combinations::Combinations;
use sparsebench_core::linalg::{
    default_rank_tol, max_abs_diff, norm_inf, numerical_rank, solve_least_squares, DenseMatrix,
    IndexSet,
};
use sparsebench_core::verify::{check_lemma1_condition, find_lemma1_violation};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut g = GaussianStream::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| g.normal())
}

fn product(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut d = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .unwrap();
        if m[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            m.swap(p, k);
            d = -d;
        }
        d *= m[k][k];
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    d
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn gauss_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .unwrap();
        m.swap(p, k);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

#[test]
fn gaussian_8x16_has_full_row_rank() {
    for seed in 0..20 {
        let a = gaussian(8, 16, seed);
        let gram = product(&a, &a.transpose());
        assert!(det(&gram).abs() > 1e-6, "seed {seed}");
        assert_eq!(numerical_rank(&a, 1e-10), 8, "seed {seed}");
    }
}

#[test]
fn rank_matches_determinant_oracle_on_square_blocks() {
    // Rank-deficient square matrices built as products have zero determinant.
    for seed in 0..30 {
        let r = (seed % 4) as usize + 1;
        let a = product(&gaussian(5, r, seed), &gaussian(r, 5, seed + 1000));
        assert_eq!(numerical_rank(&a, default_rank_tol(&a)), r);
        let full = gaussian(5, 5, seed + 2000);
        assert!(det(&full).abs() > 1e-10);
        assert_eq!(numerical_rank(&full, default_rank_tol(&full)), 5);
    }
}

#[test]
fn min_norm_solution_matches_normal_equations() {
    // For full row rank A the minimum-norm solution is A^T (A A^T)^{-1} y.
    for seed in 0..25 {
        let a = gaussian(4, 9, seed);
        let mut g = GaussianStream::new(seed ^ 0xFF);
        let y: Vec<f64> = (0..4).map(|_| g.normal()).collect();
        let z = gauss_solve(&product(&a, &a.transpose()), &y);
        let expected = a.matvec_transpose(&z).unwrap();
        let x = solve_least_squares(&a, &y).unwrap();
        assert!(max_abs_diff(&x, &expected) < 1e-10, "seed {seed}");
    }
}

#[test]
fn submatrix_of_all_columns_is_bitwise_identity() {
    let a = gaussian(6, 11, 3);
    assert_eq!(a.submatrix_columns(&IndexSet::full(11)).unwrap(), a);
}

/// Every 2s columns independent, checked subset by subset with determinants.
fn all_square_subsets_nonsingular(a: &DenseMatrix, size: usize) -> bool {
    Combinations::new(a.cols(), size).all(|cols| {
        let b = a.submatrix_columns(&IndexSet::new(cols).unwrap()).unwrap();
        det(&b).abs() > 1e-10
    })
}

#[test]
fn lemma1_check_agrees_with_determinants() {
    for seed in 0..5 {
        let a = gaussian(6, 10, seed);
        assert!(all_square_subsets_nonsingular(&a, 6));
        assert!(check_lemma1_condition(&a, 3).unwrap());
        assert_eq!(find_lemma1_violation(&a, 3).unwrap(), None);

        // Column 9 becomes a combination of columns 2 and 5.
        let b = DenseMatrix::from_fn(6, 10, |i, j| {
            if j == 9 {
                a.get(i, 2) - 0.5 * a.get(i, 5)
            } else {
                a.get(i, j)
            }
        });
        assert!(!all_square_subsets_nonsingular(&b, 6));
        assert!(!check_lemma1_condition(&b, 3).unwrap());
        let witness = find_lemma1_violation(&b, 3).unwrap().unwrap();
        assert!(witness.contains(2) && witness.contains(5) && witness.contains(9));
        let block = b.submatrix_columns(&witness).unwrap();
        assert!(det(&block).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rank_is_transpose_invariant(
        m in 1usize..7, n in 1usize..7, r in 0usize..7, seed in any::<u64>()
    ) {
        let r = r.min(m).min(n);
        let a = if r == 0 {
            DenseMatrix::zeros(m, n)
        } else {
            product(&gaussian(m, r, seed), &gaussian(r, n, seed.wrapping_add(1)))
        };
        let tol = default_rank_tol(&a);
        prop_assert_eq!(numerical_rank(&a, tol), r);
        prop_assert_eq!(numerical_rank(&a, tol), numerical_rank(&a.transpose(), tol));
    }

    #[test]
    fn least_squares_normal_equation_residual(
        m in 1usize..12, n in 1usize..12, seed in any::<u64>()
    ) {
        let a = gaussian(m, n, seed);
        let mut g = GaussianStream::new(seed ^ 0xABCD);
        let y: Vec<f64> = (0..m).map(|_| g.normal()).collect();
        let x = solve_least_squares(&a, &y).unwrap();
        let ax = a.matvec(&x).unwrap();
        let r: Vec<f64> = ax.iter().zip(&y).map(|(p, q)| p - q).collect();
        let grad = a.matvec_transpose(&r).unwrap();
        let aty = a.matvec_transpose(&y).unwrap();
        prop_assert!(norm_inf(&grad) <= 1e-8 * (1.0 + norm_inf(&aty)));
    }

    #[test]
    fn matvec_is_linear(
        m in 1usize..10, n in 1usize..10, alpha in -10.0f64..10.0, beta in -10.0f64..10.0,
        seed in any::<u64>()
    ) {
        let a = gaussian(m, n, seed);
        let mut g = GaussianStream::new(seed.rotate_left(7));
        let x: Vec<f64> = (0..n).map(|_| g.normal()).collect();
        let z: Vec<f64> = (0..n).map(|_| g.normal()).collect();
        let comb: Vec<f64> = x.iter().zip(&z).map(|(p, q)| alpha * p + beta * q).collect();
        let lhs = a.matvec(&comb).unwrap();
        let ax = a.matvec(&x).unwrap();
        let az = a.matvec(&z).unwrap();
        let rhs: Vec<f64> = ax.iter().zip(&az).map(|(p, q)| alpha * p + beta * q).collect();
        // Relative to the magnitude of the terms being summed.
        let scale = (0..m)
            .map(|i| {
                (0..n)
                    .map(|j| a.get(i, j).abs() * (alpha.abs() * x[j].abs() + beta.abs() * z[j].abs()))
                    .sum::<f64>()
            })
            .fold(1.0, f64::max);
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-12 * scale);
    }
}
