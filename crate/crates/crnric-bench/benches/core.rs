//! Small end-to-end benchmarks: reachability decisions, mass-action
//! simulation, and gadget compilation.

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, Criterion};

use crnric_core::compiler::compile_maxmin;
use crnric_core::dynamics::{simulate, RatedCrn, SimOptions};
use crnric_core::parse::{parse_crn, parse_state};
use crnric_core::pwl::{AffineComponent, MaxMinForm};
use crnric_core::rat::{rat, rat_int};
use crnric_core::reach::decide_reachable;

fn bench_reach(c: &mut Criterion) {
    let file = parse_crn("X -> C\nC + Y -> C + Z\nZ -> X + Y\nY + Y -> C\n").unwrap();
    let from = parse_state(&file.crn, "X = 1\nY = 1\n").unwrap();
    let to = parse_state(&file.crn, "C = 1\nZ = 1\n").unwrap();
    c.bench_function("decide_reachable 4-reaction", |b| {
        b.iter(|| decide_reachable(&file.crn, &from, &to))
    });
}

fn bench_simulate(c: &mut Criterion) {
    let file = parse_crn("X + X -> Y + Y\nY + X -> X + X\n").unwrap();
    let rated = RatedCrn::new(file.crn.clone(), vec![1.0, 1.0]).unwrap();
    let opts = SimOptions {
        horizon: 1e4,
        ..SimOptions::default()
    };
    c.bench_function("simulate equilibrium example", |b| {
        b.iter(|| simulate(&rated, &[1.0, 0.0], &opts).unwrap())
    });
}

fn bench_compile(c: &mut Criterion) {
    let f = MaxMinForm {
        components: vec![
            AffineComponent::linear(vec![rat(2, 5), rat(-3, 5)]),
            AffineComponent::linear(vec![rat_int(1), rat_int(0)]),
            AffineComponent::linear(vec![rat_int(0), rat_int(1)]),
        ],
        groups: vec![BTreeSet::from([0, 1]), BTreeSet::from([2])],
    };
    c.bench_function("compile_maxmin 3-component", |b| b.iter(|| compile_maxmin(&f)));
}

criterion_group!(benches, bench_reach, bench_simulate, bench_compile);
criterion_main!(benches);
