use criterion::{criterion_group, criterion_main, Criterion};
use esmck_core::grid::{check_topology, GridSpec, Stagger, Topology};
use esmck_core::ir::{lower, parse_program, Program};
use esmck_core::kpp::KppVariant;
use esmck_core::runseq::{generate_sequence, parse_components};
use esmck_core::solve::{check_program, emit_smt, falsify, CheckConfig};
use esmck_core::symexec::{explore, Bounds};
use std::hint::black_box;

fn model(variant: KppVariant) -> Program {
    lower(&parse_program(variant.source()).unwrap()).unwrap()
}

fn symbolic(c: &mut Criterion) {
    let program = model(KppVariant::Repaired);
    let bounds = Bounds::with(&[("N", 3), ("M", 3)]);
    c.bench_function("explore repaired N=3 M=3", |b| b.iter(|| explore(black_box(&program), &bounds).unwrap()));

    let obligations = explore(&program, &bounds).unwrap().obligations;
    c.bench_function("emit smt repaired N=3 M=3", |b| {
        b.iter(|| obligations.iter().map(|o| emit_smt(black_box(o)).len()).sum::<usize>())
    });

    let defective = model(KppVariant::Defective);
    let small = Bounds::with(&[("N", 2), ("M", 1)]);
    c.bench_function("check defective N=2 M=1", |b| {
        b.iter(|| check_program(black_box(&defective), &small, &CheckConfig::default()).unwrap())
    });

    let target = explore(&defective, &small).unwrap().obligations.remove(6);
    c.bench_function("falsify K>0 obligation", |b| b.iter(|| falsify(black_box(&target), 100_000, 0)));
}

fn structural(c: &mut Criterion) {
    let spec = GridSpec {
        nx: 8,
        ny: 6,
        halo: 2,
        topology: Topology::Tripolar,
        stagger: Stagger::Corner,
    };
    c.bench_function("grid check tripolar 8x6", |b| b.iter(|| check_topology(black_box(&spec)).unwrap()));

    let decls = parse_components(
        "ATM exports precip,radiation,pressure,windstress,heatflux lagged sst\n\
         LND exports runoff imports precip,radiation\n\
         OCN exports sst imports pressure,windstress,heatflux lagged runoff\n\
         MED exports merged imports sst,runoff\n",
    )
    .unwrap();
    c.bench_function("runseq generate", |b| b.iter(|| generate_sequence(black_box(&decls))));
}

criterion_group!(benches, symbolic, structural);
criterion_main!(benches);
