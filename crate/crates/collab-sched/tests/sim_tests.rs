//! Oracle tests for the discrete-event engine.
//!
//! The backbone is a fully deterministic single-queue walk whose event
//! times, integrals, and discounted cost are computed in closed form right
//! here, independent of the engine. Randomized behavior is pinned through
//! seeds: reproducibility, common random numbers across coupled runs,
//! conservation audits, the instability flag, and a long M/M/1 run against
//! the exact stationary mean.

use collab_sched::dist::DistKind;
use collab_sched::network::JobType;
use collab_sched::policies::PolicyError;
use collab_sched::sim::{run, run_coupled, RunConfig, SimError};
use collab_sched::{topologies, NetworkSpec};

/// One deterministic-arrival, deterministic-service type on one resource:
/// arrivals every 1.0 starting at t = 1, service requirement `1/1.6`.
fn deterministic_single() -> NetworkSpec {
    NetworkSpec {
        job_types: vec![JobType {
            arrival_rate: 1.0,
            service_rate: 1.6,
            holding_cost: 1.0,
            arrival_dist: DistKind::Deterministic,
            service_dist: DistKind::Deterministic,
            arrival_cv: None,
            service_cv: None,
            resources: vec![0],
        }],
        num_resources: 1,
        heavy_set: Some(vec![0]),
        heavy_threshold: None,
    }
}

fn cfg(horizon: f64, warmup: f64, seed: u64) -> RunConfig {
    RunConfig { horizon, warmup, discount_rate: 0.0, seed, sample_interval: None }
}

/// Every quantity of the deterministic walk, computed independently:
/// arrivals at 1..=10, each job served immediately for `s = 1/1.6`, the
/// tenth job cut off by the horizon at 10.5.
#[test]
fn deterministic_walk_integrates_exactly() {
    let s = 1.0 / 1.6f64;
    let m = run(&deterministic_single(), "gvm", &cfg(10.5, 0.0, 42)).unwrap();
    assert_eq!(m.arrivals, vec![10]);
    assert_eq!(m.completions, vec![9]);
    assert_eq!(m.final_jobs, vec![1]);

    // One job in the system during (k, k+s) for k = 1..=9, plus (10, 10.5).
    let busy = 9.0 * s + 0.5;
    assert!((m.mean_jobs_total - busy / 10.5).abs() < 1e-12, "mean {}", m.mean_jobs_total);
    assert!((m.mean_jobs[0] - busy / 10.5).abs() < 1e-12);
    assert!((m.idle_fraction[0] - (1.0 - busy / 10.5)).abs() < 1e-12);
    // Discount rate zero: the discounted cost is the plain queue integral.
    assert!((m.discounted_cost - busy).abs() < 1e-12);

    assert_eq!(m.decisions, m.events + 1, "one decision per event plus the initial one");
    assert!(!m.unstable);
    assert_eq!(m.conservation_violations, 0);
    assert!(m.audited, "level-priority on a nested network publishes a view");
}

/// The same walk under a positive discount rate, against the closed-form
/// sum of per-busy-interval integrals of `e^{-δt}`.
#[test]
fn deterministic_walk_discounts_exactly() {
    let s = 1.0 / 1.6f64;
    let delta = 0.1;
    let mut config = cfg(10.5, 0.0, 7);
    config.discount_rate = delta;
    let m = run(&deterministic_single(), "gvm", &config).unwrap();

    let piece = |a: f64, b: f64| ((-delta * a).exp() - (-delta * b).exp()) / delta;
    let mut want = 0.0;
    for k in 1..=9 {
        want += piece(k as f64, k as f64 + s);
    }
    want += piece(10.0, 10.5);
    assert!((m.discounted_cost - want).abs() < 1e-12, "got {} want {want}", m.discounted_cost);
}

/// Trace sampling records the left limit of the queue at every grid point.
#[test]
fn trace_samples_on_a_fixed_grid() {
    let mut config = cfg(10.5, 0.0, 3);
    config.sample_interval = Some(0.5);
    let m = run(&deterministic_single(), "gvm", &config).unwrap();
    assert_eq!(m.trace.len(), 22, "grid 0, 0.5, …, 10.5");
    for (idx, p) in m.trace.iter().enumerate() {
        let t = idx as f64 * 0.5;
        assert!((p.time - t).abs() < 1e-12);
        // In service during (k, k+s) with s ≈ 0.625: half-integer points
        // except 0.5 see one job, integer points see an empty system, and
        // the horizon cuts the tenth job mid-service.
        let want = if t == 10.5 || (t.fract() != 0.0 && t > 1.0) { 1 } else { 0 };
        assert_eq!(p.total_jobs, want, "at t = {t}");
        assert_eq!(p.jobs, vec![want]);
    }
}

/// Identical configurations give bitwise-identical metrics; a different
/// seed actually changes the realization.
#[test]
fn seeded_runs_reproduce_bitwise() {
    let spec = topologies::pair_collab(0.6, 2.0, [1.0, 1.0, 1.0]);
    let a = run(&spec, "gvm", &cfg(500.0, 50.0, 12)).unwrap();
    let b = run(&spec, "gvm", &cfg(500.0, 50.0, 12)).unwrap();
    assert_eq!(a.arrivals, b.arrivals);
    assert_eq!(a.completions, b.completions);
    assert_eq!(a.mean_jobs, b.mean_jobs);
    assert_eq!(a.discounted_cost.to_bits(), b.discounted_cost.to_bits());
    assert_eq!(a.events, b.events);

    let c = run(&spec, "gvm", &cfg(500.0, 50.0, 13)).unwrap();
    assert_ne!(a.arrivals, c.arrivals, "different seed, different arrivals");
}

/// Coupled runs share every arrival and service draw: the arrival counts
/// agree across policies event-for-event, while the policies themselves
/// behave differently enough to change the mean queue.
#[test]
fn coupled_runs_share_randomness_across_policies() {
    let spec = topologies::pair_collab(0.7, 2.0, [1.0, 1.0, 1.0]);
    let runs = run_coupled(&spec, &["gvm", "pia", "mp"], &cfg(2000.0, 200.0, 5)).unwrap();
    assert_eq!(runs.len(), 3);
    assert_eq!(runs[0].policy, "gvm");
    assert_eq!(runs[1].policy, "pia");
    assert_eq!(runs[2].policy, "mp");
    assert_eq!(runs[0].arrivals, runs[1].arrivals, "common random numbers broken");
    assert_eq!(runs[0].arrivals, runs[2].arrivals);
    assert!(
        (runs[0].mean_jobs_total - runs[1].mean_jobs_total).abs() > 1e-6,
        "level-priority and individual-first should not coincide at this load"
    );
}

/// Policies that publish a work-conservation view are audited and must
/// never violate it; a policy without a view is not audited.
#[test]
fn conserving_policies_audit_clean() {
    let spec = topologies::pair_collab(0.6, 2.0, [1.0, 1.0, 1.0]);
    for name in ["gvm", "proposed", "random-wc"] {
        let m = run(&spec, name, &cfg(1000.0, 0.0, 21)).unwrap();
        assert!(m.audited, "{name} should publish a view");
        assert_eq!(m.conservation_violations, 0, "{name} violated conservation");
    }
    let m = run(&spec, "pia", &cfg(1000.0, 0.0, 21)).unwrap();
    assert!(!m.audited);
}

/// The review policy actually opens review periods under load and still
/// audits clean through boundary re-solves.
#[test]
fn review_periods_open_under_load() {
    let spec = topologies::pair_collab(0.7, 2.0, [1.0, 1.0, 1.0]);
    let m = run(&spec, "proposed", &cfg(2000.0, 0.0, 9)).unwrap();
    assert!(m.review_periods > 0, "no review period ever opened");
    assert_eq!(m.conservation_violations, 0);
}

/// Jobs are conserved type-by-type: arrivals minus completions is exactly
/// what remains at the horizon.
#[test]
fn jobs_are_conserved_per_type() {
    let nest = topologies::three_level_nest(0.25, 1.5);
    for name in ["gvm", "pia", "mp", "random-wc", "proposed", "np-gvm", "pht:2"] {
        let m = run(&nest, name, &cfg(777.3, 0.0, 4)).unwrap();
        for j in 0..m.arrivals.len() {
            assert_eq!(
                m.arrivals[j] - m.completions[j],
                m.final_jobs[j],
                "{name}: type {j} leaked jobs"
            );
        }
    }
}

/// An overloaded queue trips the divergence detector; a stable one with the
/// same horizon does not.
#[test]
fn divergence_detector_separates_loads() {
    let unstable = run(&topologies::single_queue(1.5, 1.0), "gvm", &cfg(4000.0, 0.0, 2)).unwrap();
    assert!(unstable.unstable, "quartile means {:?}", unstable.quartile_mean_jobs);
    let stable = run(&topologies::single_queue(0.5, 1.0), "gvm", &cfg(4000.0, 0.0, 2)).unwrap();
    assert!(!stable.unstable, "quartile means {:?}", stable.quartile_mean_jobs);
}

/// Long M/M/1 run at ρ = 0.5 against the exact stationary mean queue
/// ρ/(1−ρ) = 1.
#[test]
fn mm1_time_average_matches_theory() {
    let m = run(&topologies::single_queue(0.5, 1.0), "gvm", &cfg(2e5, 2e4, 11)).unwrap();
    assert!(
        (m.mean_jobs_total - 1.0).abs() < 0.08,
        "M/M/1 mean {} should be near 1.0",
        m.mean_jobs_total
    );
}

/// Invalid specs, impossible policies, and bad configurations all surface
/// as typed errors.
#[test]
fn engine_rejects_bad_inputs() {
    let empty = NetworkSpec {
        job_types: vec![],
        num_resources: 0,
        heavy_set: None,
        heavy_threshold: None,
    };
    assert!(matches!(
        run(&empty, "gvm", &cfg(10.0, 0.0, 1)),
        Err(SimError::InvalidNetwork(_))
    ));

    let square = topologies::all_pairs_four(0.3, 2.0);
    assert!(matches!(
        run(&square, "proposed", &cfg(10.0, 0.0, 1)),
        Err(SimError::Policy(PolicyError::NotHierarchical))
    ));
    assert!(matches!(
        run(&square, "unheard-of", &cfg(10.0, 0.0, 1)),
        Err(SimError::Policy(PolicyError::UnknownPolicy(_)))
    ));

    let spec = topologies::single_queue(0.5, 1.0);
    assert!(matches!(run(&spec, "gvm", &cfg(-5.0, 0.0, 1)), Err(SimError::BadConfig(_))));
    assert!(matches!(run(&spec, "gvm", &cfg(10.0, 20.0, 1)), Err(SimError::BadConfig(_))));
}
