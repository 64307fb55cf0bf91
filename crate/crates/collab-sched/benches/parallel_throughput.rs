//! Replication fan-out throughput: the rayon-backed batch runner against
//! the always-sequential one, over a small and a larger batch, plus the
//! single-run engine cost for scale. With the `parallel` feature disabled
//! the two runners share one code path, so their curves should coincide;
//! with it enabled the gap shows what multi-core fan-out buys on this
//! machine.
//!
//! Run with `cargo bench -p collab-sched` (add `--no-default-features` for
//! the sequential build).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use collab_sched::sim::RunConfig;
use collab_sched::{parallel, topologies};

fn replication_batches(c: &mut Criterion) {
    let spec = topologies::pair_collab(0.7, 2.0, [1.0, 1.0, 1.0]);
    let cfg = RunConfig {
        horizon: 2000.0,
        warmup: 200.0,
        discount_rate: 0.0,
        seed: 7,
        sample_interval: None,
    };

    let mut group = c.benchmark_group("replication_batch");
    group.sample_size(10);
    for reps in [4usize, 16] {
        group.bench_with_input(BenchmarkId::new("fanout", reps), &reps, |b, &reps| {
            b.iter(|| {
                let runs =
                    parallel::run_replications(&spec, "proposed", &cfg, black_box(reps)).unwrap();
                black_box(runs.len())
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", reps), &reps, |b, &reps| {
            b.iter(|| {
                let runs =
                    parallel::run_replications_sequential(&spec, "proposed", &cfg, black_box(reps))
                        .unwrap();
                black_box(runs.len())
            })
        });
    }
    group.finish();
}

fn single_run(c: &mut Criterion) {
    let spec = topologies::pair_collab(0.7, 2.0, [1.0, 1.0, 1.0]);
    let cfg = RunConfig {
        horizon: 2000.0,
        warmup: 200.0,
        discount_rate: 0.0,
        seed: 7,
        sample_interval: None,
    };
    let mut group = c.benchmark_group("single_run");
    group.sample_size(20);
    for policy in ["proposed", "gvm", "mp"] {
        group.bench_function(policy, |b| {
            b.iter(|| black_box(collab_sched::sim::run(&spec, policy, &cfg).unwrap().events))
        });
    }
    group.finish();
}

criterion_group!(benches, replication_batches, single_run);
criterion_main!(benches);
