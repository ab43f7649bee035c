use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hkc_core::stability::unstable_dimension;
use hkc_core::sweep::random_initial_condition;
use hkc_core::{build_hkc, integrate, CompiledModel, IntegratorConfig, OdeSystem, Params};

const K1: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn params() -> Params {
    Params::new(500.0, 10.0, 10.0, K1).unwrap()
}

fn compile(c: &mut Criterion) {
    let mut g = c.benchmark_group("compile");
    for level in [1u32, 21, 55] {
        let spec = build_hkc(level).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(level), &spec, |b, spec| {
            b.iter(|| CompiledModel::compile(black_box(spec), &params()).unwrap())
        });
    }
    g.finish();
}

fn rhs(c: &mut Criterion) {
    let mut g = c.benchmark_group("rhs");
    for level in [1u32, 21, 55, 190] {
        let model = CompiledModel::compile(&build_hkc(level).unwrap(), &params()).unwrap();
        let x = random_initial_condition(model.spec(), K1, 1, 0, 0.5);
        let mut out = vec![0.0; x.len()];
        g.bench_function(BenchmarkId::from_parameter(level), |b| b.iter(|| model.rhs_into(black_box(&x), &mut out)));
    }
    g.finish();
}

fn integrate_unit_time(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate_t1");
    g.sample_size(10);
    for level in [1u32, 6, 21] {
        let model = CompiledModel::compile(&build_hkc(level).unwrap(), &params()).unwrap();
        let x0 = random_initial_condition(model.spec(), K1, 1, 0, 0.1);
        let cfg = IntegratorConfig { t_final: 1.0, sample_stride: 1000, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(level), |b| b.iter(|| integrate(&model, &x0, &cfg).unwrap()));
    }
    g.finish();
}

fn stability(c: &mut Criterion) {
    let p = Params::new(1e6, 0.0, 10.0, 1.0).unwrap();
    c.bench_function("unstable_dimension_r1e6", |b| b.iter(|| unstable_dimension(black_box(&p), 100).unwrap()));
}

criterion_group!(benches, compile, rhs, integrate_unit_time, stability);
criterion_main!(benches);
