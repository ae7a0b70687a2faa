use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rotlab::linalg::{jacobi_eigen, kronecker, matmul, power_qr_step, qr_decompose};
use rotlab::pipemodel::{emit_stage_table, StageTableConfig, STAGE_TABLE_FIXTURE};
use rotlab::rng::SeededRng;
use std::hint::black_box;

fn linalg(c: &mut Criterion) {
    let mut rng = SeededRng::new(0, 0);
    for n in [8, 32, 64] {
        let a = rng.normal_matrix(n, n, 1.0);
        let b = rng.normal_matrix(n, n, 1.0);
        let s = a.symmetrized();
        let q = rng.orthogonal(n);
        c.bench_with_input(BenchmarkId::new("matmul", n), &n, |bench, _| bench.iter(|| matmul(black_box(&a), black_box(&b))));
        c.bench_with_input(BenchmarkId::new("qr", n), &n, |bench, _| bench.iter(|| qr_decompose(black_box(&a))));
        c.bench_with_input(BenchmarkId::new("power_qr_step", n), &n, |bench, _| {
            bench.iter(|| power_qr_step(black_box(&s), black_box(&q)))
        });
        c.bench_with_input(BenchmarkId::new("jacobi", n), &n, |bench, _| bench.iter(|| jacobi_eigen(black_box(&s))));
    }
    let a = rng.normal_matrix(6, 6, 1.0);
    let b = rng.normal_matrix(6, 6, 1.0);
    c.bench_function("kronecker_6x6", |bench| bench.iter(|| kronecker(black_box(&a), black_box(&b))));
}

fn stages(c: &mut Criterion) {
    let cfg = StageTableConfig::from_toml(STAGE_TABLE_FIXTURE).unwrap();
    c.bench_function("stage_table", |bench| bench.iter(|| emit_stage_table(black_box(&cfg.models), black_box(&cfg.devices))));
}

criterion_group!(benches, linalg, stages);
criterion_main!(benches);
