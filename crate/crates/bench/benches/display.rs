use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rulequest_bench::guideline_fixture;
use rulequest_core::display::compile_display_rules;
use rulequest_core::engine::simulate_truthful;
use rulequest_core::ordering::{condition_frequency_order, optimize_order, OptimizerConfig, OrderingInstance};

fn display(c: &mut Criterion) {
    let f = guideline_fixture(1);
    let mut g = c.benchmark_group("guideline");
    // at least 100 timed samples; criterion reports the median and spread
    g.sample_size(100);
    g.bench_function("displayed", |b| b.iter(|| f.display.displayed(black_box(&f.patient))));
    g.bench_function("compile", |b| {
        let order = condition_frequency_order(&f.rulebase);
        b.iter(|| compile_display_rules(black_box(&f.rulebase), &order).unwrap())
    });
    g.bench_function("truthful_simulation", |b| {
        b.iter(|| simulate_truthful(&f.display, &f.rulebase, black_box(&f.patient)))
    });
    g.finish();

    let mut g = c.benchmark_group("ordering");
    g.sample_size(10);
    g.bench_function("optimize_patient", |b| {
        let inst = OrderingInstance::for_patient(&f.rulebase, f.patient.present().iter().copied()).unwrap();
        b.iter(|| optimize_order(&inst, &OptimizerConfig::with_seed(1)))
    });
    g.finish();
}

criterion_group!(benches, display);
criterion_main!(benches);
