use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gca_bench::{balanced_rod_faulty, ring_system};
use gca_core::{
    build_product, check_invariant, destutter, enumerate_da_traces, parse_formula, run_sync,
    Formula,
};

fn bench_destutter(c: &mut Criterion) {
    let word: Vec<u32> = (0..20_000).map(|i| (i / 7) % 5).collect();
    c.bench_function("destutter_20k", |b| b.iter(|| destutter(black_box(&word))));
}

fn bench_enumerate(c: &mut Criterion) {
    let system = ring_system(3);
    c.bench_function("enumerate_da_traces_n3_k4", |b| {
        b.iter(|| enumerate_da_traces(black_box(&system), 1, None, None).unwrap())
    });
}

fn bench_run_sync(c: &mut Criterion) {
    let system = ring_system(3);
    c.bench_function("run_sync_n3_3periods", |b| {
        b.iter(|| run_sync(black_box(&system), 3, None).unwrap())
    });
}

fn bench_product_and_invariant(c: &mut Criterion) {
    let model = balanced_rod_faulty();
    c.bench_function("build_product_balanced_rod", |b| {
        b.iter(|| build_product(black_box(&model.system), &model.automaton, None).unwrap())
    });
    let graph = build_product(&model.system, &model.automaton, None).unwrap();
    let inner = match &model.properties[0].1 {
        Formula::Globally(inner) => inner.as_ref().clone(),
        other => panic!("unexpected property {other}"),
    };
    c.bench_function("check_invariant_balanced_rod", |b| {
        b.iter(|| check_invariant(&model.system, black_box(&graph), &inner).unwrap())
    });
}

fn bench_formula_parse(c: &mut Criterion) {
    let text = "G(((ecu1.next = 0) & (ecu1.Trigger = 1)) -> (ecu1.Out = Correct))";
    c.bench_function("parse_formula", |b| {
        b.iter(|| parse_formula(black_box(text)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_destutter,
    bench_enumerate,
    bench_run_sync,
    bench_product_and_invariant,
    bench_formula_parse
);
criterion_main!(benches);
