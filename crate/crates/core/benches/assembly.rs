use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use twogrid_core::assembly::Assembler;
use twogrid_core::space::FeSpace;
use twogrid_core::{Example, Execution, ManufacturedCase, SimulationConfig, TwoGridSolver, VelocityField};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn field(space: &std::sync::Arc<FeSpace>) -> VelocityField {
    let case = ManufacturedCase::new(Example::Trigonometric, 1.0);
    VelocityField::interpolate(space, |p| case.velocity(0.5, p))
}

fn static_forms(c: &mut Criterion) {
    let mut group = c.benchmark_group("static_forms");
    for n in [16, 32] {
        for (name, exec) in POLICIES {
            let space = FeSpace::structured(n, exec).unwrap();
            let asm = Assembler::new(&space);
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| b.iter(|| black_box(asm.assemble_static())));
        }
    }
    group.finish();
}

fn convection(c: &mut Criterion) {
    let mut group = c.benchmark_group("convection");
    for n in [16, 32] {
        for (name, exec) in POLICIES {
            let space = FeSpace::structured(n, exec).unwrap();
            let asm = Assembler::new(&space);
            let w = field(&space);
            group.bench_with_input(BenchmarkId::new(format!("{name}/matrices"), n), &n, |b, _| {
                b.iter(|| black_box(asm.trilinear_matrices(&w).unwrap()))
            });
            group.bench_with_input(BenchmarkId::new(format!("{name}/vector"), n), &n, |b, _| {
                b.iter(|| black_box(asm.trilinear_vector(&w, &w).unwrap()))
            });
        }
    }
    group.finish();
}

fn time_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("time_step");
    group.sample_size(10);
    let case = ManufacturedCase::new(Example::Polynomial, 1.0);
    for (name, exec) in POLICIES {
        let solver = TwoGridSolver::new(SimulationConfig::new(4, 16, 1.0 / 256.0, 1.0).with_exec(exec)).unwrap();
        let state = solver.initial_state(&case).unwrap();
        group.bench_function(BenchmarkId::new(name, 16), |b| {
            b.iter(|| black_box(solver.advance(&state, &case).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, static_forms, convection, time_step);
criterion_main!(benches);
