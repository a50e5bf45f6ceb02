use criterion::{criterion_group, criterion_main, Criterion};
use sparsebench_bench::problem;
use sparsebench_core::decoders::{decode, DecoderKind, DecoderParams};
use sparsebench_core::lp::SolverOptions;

fn decoders(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode_n128_m50_k15");
    group.sample_size(20);
    let p = problem(128, 50, 15);
    let params = DecoderParams::default();
    let opts = SolverOptions::default();
    for kind in [
        DecoderKind::L1,
        DecoderKind::Reweighted,
        DecoderKind::Alternating,
        DecoderKind::TwoStage,
    ] {
        group.bench_function(kind.name(), |b| {
            b.iter(|| decode(kind, &p.a, &p.y, &params, &opts).unwrap())
        });
    }
    group.finish();

    let small = problem(16, 8, 3);
    c.bench_function("decode_l0_n16_m8_k3", |b| {
        b.iter(|| decode(DecoderKind::L0, &small.a, &small.y, &params, &opts).unwrap())
    });
}

criterion_group!(benches, decoders);
criterion_main!(benches);
