//! Deterministic work fan-out.
//!
//! With the `parallel` feature (on by default) independent work items run
//! on the rayon thread pool; without it the same items run in a plain
//! sequential loop. Results are identical either way because every item
//! derives its own named RNG stream from the master seed — thread
//! scheduling never touches a random number. The always-sequential
//! variants exist so benchmarks can compare the two execution modes from
//! one binary.

use crate::network::NetworkSpec;
use crate::rng;
use crate::sim::{self, RunConfig, RunMetrics, SimError};

/// Map `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Map `f` over `0..n` sequentially regardless of features.
pub fn map_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Cap the global thread pool. A no-op without the `parallel` feature;
/// with it, effective only before the pool's first use.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Cap the global thread pool. A no-op without the `parallel` feature;
/// with it, effective only before the pool's first use.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<(), String> {
    Ok(())
}

/// Run `reps` independent replications of one policy, replication `k`
/// seeded with [`rng::replication_seed`]`(cfg.seed, k)`.
pub fn run_replications(
    spec: &NetworkSpec,
    policy_name: &str,
    cfg: &RunConfig,
    reps: usize,
) -> Result<Vec<RunMetrics>, SimError> {
    par_map_indexed(reps, |k| {
        let mut rep_cfg = cfg.clone();
        rep_cfg.seed = rng::replication_seed(cfg.seed, k as u64);
        sim::run(spec, policy_name, &rep_cfg)
    })
    .into_iter()
    .collect()
}

/// Sequential twin of [`run_replications`]; must produce identical output.
pub fn run_replications_sequential(
    spec: &NetworkSpec,
    policy_name: &str,
    cfg: &RunConfig,
    reps: usize,
) -> Result<Vec<RunMetrics>, SimError> {
    map_indexed_sequential(reps, |k| {
        let mut rep_cfg = cfg.clone();
        rep_cfg.seed = rng::replication_seed(cfg.seed, k as u64);
        sim::run(spec, policy_name, &rep_cfg)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topologies;

    #[test]
    fn indexed_maps_agree() {
        let a = par_map_indexed(100, |i| i * i);
        let b = map_indexed_sequential(100, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn replication_batches_are_schedule_independent() {
        let spec = topologies::pair_collab(0.6, 2.0, [1.0, 1.0, 1.0]);
        let cfg = RunConfig {
            horizon: 300.0,
            warmup: 30.0,
            discount_rate: 0.0,
            seed: 42,
            sample_interval: None,
        };
        let par = run_replications(&spec, "gvm", &cfg, 4).unwrap();
        let seq = run_replications_sequential(&spec, "gvm", &cfg, 4).unwrap();
        assert_eq!(par.len(), 4);
        for (a, b) in par.iter().zip(&seq) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.arrivals, b.arrivals);
            assert_eq!(a.completions, b.completions);
            assert_eq!(a.mean_jobs_total.to_bits(), b.mean_jobs_total.to_bits());
            assert_eq!(a.discounted_cost.to_bits(), b.discounted_cost.to_bits());
        }
        // Replications use distinct derived seeds, so they differ.
        assert_ne!(par[0].arrivals, par[1].arrivals);
    }
}
