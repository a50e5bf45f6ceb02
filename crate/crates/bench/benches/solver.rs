use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sparsebench_bench::{gaussian_matrix, problem};
use sparsebench_core::linalg::{default_rank_tol, numerical_rank, solve_least_squares};
use sparsebench_core::lp::{solve_weighted_l1, SolverOptions, WeightVector};

fn simplex(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_weighted_l1");
    let opts = SolverOptions::default();
    for k in [5, 12, 20] {
        let p = problem(128, 50, k);
        let w = WeightVector::uniform(128);
        group.bench_with_input(BenchmarkId::new("n128_m50", k), &p, |b, p| {
            b.iter(|| solve_weighted_l1(&p.a, &p.y, &w, &opts).unwrap())
        });
    }
    group.finish();
}

fn linalg(c: &mut Criterion) {
    let a = gaussian_matrix(50, 128, 7);
    let y: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
    c.bench_function("numerical_rank_50x128", |b| {
        b.iter(|| numerical_rank(&a, default_rank_tol(&a)))
    });
    c.bench_function("solve_least_squares_50x128", |b| {
        b.iter(|| solve_least_squares(&a, &y).unwrap())
    });
}

criterion_group!(benches, simplex, linalg);
criterion_main!(benches);
