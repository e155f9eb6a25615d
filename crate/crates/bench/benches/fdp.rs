use almdp::alm::{alm_run, AlmConfig};
use almdp::fdp::fdp_solve;
use almdp::verify::{dense_solve, dense_system};
use almdp_bench::{linearized, network_instance};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn direction_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("direction");
    for m in [10, 50, 100] {
        let inst = network_instance(5, &[20, 5], m, 0);
        let sys = linearized(&inst, 1.0);
        group.bench_with_input(BenchmarkId::new("fdp", m), &sys, |b, s| b.iter(|| fdp_solve(s).unwrap()));
        // the dense oracle grows cubically; only the small sizes are timed
        if m <= 10 {
            let dense = dense_system(&sys).unwrap();
            group.bench_with_input(BenchmarkId::new("dense", m), &sys, |b, s| b.iter(|| dense_solve(s, &dense).unwrap()));
        }
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let inst = network_instance(5, &[20, 5], 40, 0);
    let cfg = AlmConfig { timings: false, ..AlmConfig::default() };
    let mut group = c.benchmark_group("alm");
    group.sample_size(10);
    group.bench_function("d0_5_m_40", |b| b.iter(|| alm_run(&inst.spec, &inst.data, &cfg, &inst.init).unwrap()));
    group.finish();
}

criterion_group!(benches, direction_solve, training);
criterion_main!(benches);
