use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use roa_bench::shipped_model;
use roa_core::oracle::{value_iteration, ViSettings};
use roa_core::poly::basis;
use roa_core::roa::{build_program, compute_roa, RoaConfig};
use roa_core::soscomp;
use roa_core::Polynomial;

fn poly(c: &mut Criterion) {
    let model = shipped_model("predator_prey.toy");
    let u = Polynomial::from_terms(2, basis(2, 10).into_elements().into_iter().enumerate().map(|(i, m)| (m, 1.0 / (i + 1) as f64)));
    c.bench_function("compose degree-10 u with predator-prey f", |b| {
        b.iter(|| black_box(&u).compose(black_box(&model.f)).unwrap())
    });
    let p = u.pow(2);
    c.bench_function("multiply degree-20 polynomials", |b| b.iter(|| black_box(&p) * black_box(&u)));
}

fn compile(c: &mut Criterion) {
    let model = shipped_model("predator_prey.toy");
    for k in [6, 10] {
        let cfg = RoaConfig::for_model(&model, k);
        c.bench_function(&format!("build and compile predator-prey k={k}"), |b| {
            b.iter(|| {
                let mut prog = build_program(&model, &cfg).unwrap();
                soscomp::prune_gram_bases(&mut prog).unwrap();
                soscomp::compile(&prog).unwrap()
            })
        });
    }
}

fn oracle(c: &mut Criterion) {
    let model = shipped_model("predator_prey.toy");
    let settings = ViSettings {
        points: Some(51),
        ..ViSettings::default()
    };
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("value iteration predator-prey 51x51", |b| b.iter(|| value_iteration(&model, &settings)));
    group.finish();
}

fn solve(c: &mut Criterion) {
    let model = shipped_model("predator_prey.toy");
    let cfg = RoaConfig::for_model(&model, 4);
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("compute_roa predator-prey k=4", |b| b.iter(|| compute_roa(&model, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, poly, compile, oracle, solve);
criterion_main!(benches);
