use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use schur_dd::geometry::build_scatterer_mesh;
use schur_dd::merge::{hierarchical_merge, DEFAULT_CONDITION_BOUND};
use schur_dd::rtr::{assemble_subdomain_system, rtr_interior_subdomain, BoxBoundary};
use schur_dd::specfun::hankel01_unchecked;
use schur_dd::{Complex64, ConditionBounds, Coupling, DdSolver, Discretization, IncidentField};
use schur_dd_bench::circle_grid;

fn hankel(c: &mut Criterion) {
    let zs: Vec<Complex64> = (1..=64).map(|i| Complex64::new(0.37 * i as f64, 0.05 * i as f64)).collect();
    c.bench_function("hankel01/64 args", |b| {
        b.iter(|| zs.iter().map(|&z| hankel01_unchecked(black_box(z)).0).sum::<Complex64>())
    });
}

fn leaf_map(c: &mut Criterion) {
    let grid = circle_grid(1, 1);
    let coupling = Coupling::defaults(8.0).unwrap();
    let mut group = c.benchmark_group("leaf map");
    group.sample_size(10);
    for n in [16, 32] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| {
                let bb = BoxBoundary::leaf(&grid.box_rect(0), 0, n, 4).unwrap();
                let m = build_scatterer_mesh(&grid.scatterers[0][0], 2 * n).unwrap();
                let sys = assemble_subdomain_system(&bb, &[(0, m)], &coupling).unwrap();
                rtr_interior_subdomain(sys).unwrap()
            })
        });
    }
    group.finish();
}

fn merge(c: &mut Criterion) {
    let grid = circle_grid(2, 2);
    let coupling = Coupling::defaults(8.0).unwrap();
    let leaves: Vec<_> = (0..4)
        .map(|b| {
            let bb = BoxBoundary::leaf(&grid.box_rect(b), b, 32, 4).unwrap();
            let m = build_scatterer_mesh(&grid.scatterers[b][0], 48).unwrap();
            rtr_interior_subdomain(assemble_subdomain_system(&bb, &[(b, m)], &coupling).unwrap()).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("merge");
    group.sample_size(10);
    group.bench_function("2x2 tree", |b| {
        b.iter(|| hierarchical_merge(&grid, leaves.clone(), DEFAULT_CONDITION_BOUND).unwrap())
    });
    group.finish();
}

fn solve(c: &mut Criterion) {
    let grid = circle_grid(2, 2);
    let disc = Discretization {
        n_per_edge: 32,
        n_per_scatterer: 48,
        grading: 4,
    };
    let solver = DdSolver::build(&grid, Coupling::defaults(8.0).unwrap(), disc, ConditionBounds::default()).unwrap();
    let field = IncidentField::plane(8.0, 0.3).unwrap();
    let mut group = c.benchmark_group("solution");
    group.sample_size(10);
    group.bench_function("2x2 incidence", |b| b.iter(|| solver.solve(&field).unwrap()));
    group.finish();
}

criterion_group!(benches, hankel, leaf_map, merge, solve);
criterion_main!(benches);
