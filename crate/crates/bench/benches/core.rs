use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qdev_core::deviation::{main_bound, MeasurementSetup, Scgf};
use qdev_core::fixtures::{qubit_trajectory_setup, random_density};
use qdev_core::inequalities::{w1_lower_bound, LipschitzContext};
use qdev_core::lindblad::stationary_state;
use qdev_core::models::{depolarizing, depolarizing_jump_index};
use qdev_core::trajectories::{run_ensemble, TrajectoryConfig};
use qdev_core::{DensityOperator, FaithfulState};
use rand_chacha::rand_core::SeedableRng;

fn setup(d: usize) -> MeasurementSetup {
    let ctx = stationary_state(&depolarizing(&FaithfulState::maximally_mixed(d))).unwrap();
    let u = MeasurementSetup::unit_direction(d * d, depolarizing_jump_index(d, 0, 1));
    MeasurementSetup::new(ctx, vec![u], 1).unwrap()
}

fn scgf(c: &mut Criterion) {
    let mut group = c.benchmark_group("scgf");
    for d in [2, 3, 4] {
        let s = Scgf::new(&setup(d)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| b.iter(|| s.evaluate(black_box(&[0.7]))));
    }
    group.finish();
}

fn bound(c: &mut Criterion) {
    let mut group = c.benchmark_group("main_bound");
    for d in [2, 3] {
        let s = setup(d);
        let rho = s.ctx().stationary().clone();
        group.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| {
            b.iter(|| main_bound(s, &rho, black_box(&[0.3])).unwrap())
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let s = qubit_trajectory_setup().unwrap();
    let rho = DensityOperator::maximally_mixed(2);
    let cfg = TrajectoryConfig::new(1e-3, 1.0, 200, 1);
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.bench_function("qubit_200_paths_1000_steps", |b| {
        b.iter(|| run_ensemble(&s, &rho, &cfg, &[0.1, 0.1], &[1.0]).unwrap())
    });
    group.finish();
}

fn transport(c: &mut Criterion) {
    let ctx = stationary_state(&depolarizing(&FaithfulState::maximally_mixed(3))).unwrap();
    let lip = LipschitzContext::new(&ctx).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let rho = random_density(3, &mut rng).unwrap();
    let sigma = ctx.stationary().clone();
    let mut group = c.benchmark_group("w1_lower_bound");
    group.sample_size(10);
    group.bench_function("qutrit", |b| b.iter(|| w1_lower_bound(&lip, &rho, &sigma).unwrap()));
    group.finish();
}

criterion_group!(benches, scgf, bound, ensemble, transport);
criterion_main!(benches);
