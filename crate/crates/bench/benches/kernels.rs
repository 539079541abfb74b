use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use riddle_core::dynamics::{classify_point, invariant_graph_value, ClassifyOptions};
use riddle_core::expr::Expression;
use riddle_core::models;
use riddle_core::thermo::{pressure, Discretization, Potential};

fn expression(c: &mut Criterion) {
    let e = Expression::parse(models::PAPER_LAMBDA).unwrap();
    c.bench_function("expr_eval", |b| b.iter(|| e.eval(black_box(0.37)).unwrap()));
}

fn graph(c: &mut Criterion) {
    let sp = models::paper_example();
    c.bench_function("invariant_graph_value", |b| {
        b.iter(|| invariant_graph_value(&sp, black_box(0.37), 1e-10, 5000).unwrap())
    });
}

fn classify(c: &mut Criterion) {
    let sp = models::paper_example();
    let opts = ClassifyOptions::for_spec(&sp);
    c.bench_function("classify_point", |b| {
        b.iter(|| classify_point(&sp, black_box(0.37), black_box(3.0), &opts))
    });
}

fn transfer_operator(c: &mut Criterion) {
    let sp = models::paper_example();
    let psi = Potential::srb().tilted(14.2, sp.lambda());
    let mut g = c.benchmark_group("pressure");
    g.sample_size(20);
    for disc in [Discretization::Collocation(256), Discretization::Ulam(2048)] {
        g.bench_function(disc.to_string(), |b| {
            b.iter(|| pressure(sp.base(), &psi, disc).unwrap().p)
        });
    }
    g.finish();
}

criterion_group!(benches, expression, graph, classify, transfer_operator);
criterion_main!(benches);
