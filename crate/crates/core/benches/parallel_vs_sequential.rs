//! Grid search on the default synthetic problem, run cell by cell and on
//! the rayon pool.

use criterion::{criterion_group, criterion_main, Criterion};

use polyak::config::ExperimentConfig;
use polyak::harness::cmd_grid;
use polyak::parallel::Execution;

fn grid(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        epochs: 5,
        ..ExperimentConfig::default()
    };
    let mut group = c.benchmark_group("grid_49_cells");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| cmd_grid(&cfg, Execution::Sequential).unwrap())
    });
    group.bench_function("parallel", |b| {
        b.iter(|| cmd_grid(&cfg, Execution::Parallel { threads: 0 }).unwrap())
    });
    group.finish();
}

criterion_group!(benches, grid);
criterion_main!(benches);
