//! Preempt-resume discrete-event simulation of a collaboration network
//! under a scheduling policy.
//!
//! Determinism is absolute: every random quantity comes from a named
//! counter-based stream derived from the master seed — one stream per
//! (job type, role). Service requirements are drawn *at arrival*, so two
//! runs with the same seed see identical arrival processes and identical
//! per-job service requirements no matter how their policies differ
//! (common random numbers); [`run_coupled`] leans on this to compare
//! policies on the same realization.
//!
//! Between events the state is frozen, so every integral (time-averaged
//! queue lengths, exponentially discounted holding cost, per-resource busy
//! time) accumulates in closed form segment by segment. A decision point
//! follows every event; policies that publish an admissibility view are
//! audited on the spot for work-conservation violations.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::dist::{DistError, Sampler};
use crate::network::{NetworkSpec, Violation};
use crate::policies::{self, build_policy, Decision, PolicyCtx, PolicyError};
use crate::rng;

/// Absolute slack allowed between a completion event's scheduled time and
/// the served head's remaining requirement hitting zero.
const COMPLETION_DRIFT: f64 = 1e-6;

/// Tolerance for review boundaries scheduled "in the past" by roundoff.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Run parameters independent of the network and policy.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Simulated time to run for.
    pub horizon: f64,
    /// Time-averaged statistics ignore `[0, warmup)`; the discounted cost
    /// always integrates from zero.
    pub warmup: f64,
    /// Discount rate δ for the holding-cost integral `∫ e^{-δt} h·Q(t) dt`;
    /// zero gives the undiscounted integral.
    pub discount_rate: f64,
    /// Master seed; all streams derive from it.
    pub seed: u64,
    /// When set, record the queue vector at every multiple of this
    /// interval (left limits: the state just before that instant's events).
    pub sample_interval: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 1000.0,
            warmup: 0.0,
            discount_rate: 0.0,
            seed: 0,
            sample_interval: None,
        }
    }
}

/// One trace sample.
#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    pub time: f64,
    pub total_jobs: u64,
    /// Jobs present per type.
    pub jobs: Vec<u64>,
    /// Bit `i` set iff resource `i` is occupied by the current allocation.
    pub busy_mask: u64,
}

/// Everything measured over one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetrics {
    /// Policy name the run was driven by.
    pub policy: String,
    pub seed: u64,
    pub horizon: f64,
    pub warmup: f64,
    /// Events processed (arrivals, completions, review boundaries).
    pub events: u64,
    /// Decision points (events plus the initial decision).
    pub decisions: u64,
    /// Review periods the policy opened.
    pub review_periods: u64,
    pub arrivals: Vec<u64>,
    pub completions: Vec<u64>,
    /// Queue lengths at the horizon.
    pub final_jobs: Vec<u64>,
    /// Time-averaged jobs per type over `[warmup, horizon]`.
    pub mean_jobs: Vec<f64>,
    pub mean_jobs_total: f64,
    /// `∫_0^horizon e^{-δt} Σ_j h_j Q_j(t) dt`.
    pub discounted_cost: f64,
    /// Fraction of `[warmup, horizon]` each resource spent idle.
    pub idle_fraction: Vec<f64>,
    /// Whether decisions were audited against an admissibility view.
    pub audited: bool,
    /// Decision points that left a constrained resource idle with
    /// view-visible work (zero for any policy honoring its view).
    pub conservation_violations: u64,
    /// Time-averaged total jobs over the four quarters of
    /// `[warmup, horizon]`.
    pub quartile_mean_jobs: [f64; 4],
    /// Divergence flag: the last quarter dominates the first (3×), the
    /// second (1.5×), and sits above one job — sustained growth, not noise.
    pub unstable: bool,
    /// Samples on the configured grid (empty without `sample_interval`).
    pub trace: Vec<TracePoint>,
}

/// Errors that end a run before the horizon.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid network: {0:?}")]
    InvalidNetwork(Vec<Violation>),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
    #[error("job type {job_type}: {source}")]
    Dist { job_type: usize, source: DistError },
    #[error("policy decision at time {time} is infeasible: {detail}")]
    BadDecision { time: f64, detail: String },
}

/// Simulate one policy on one network.
pub fn run(spec: &NetworkSpec, policy_name: &str, cfg: &RunConfig) -> Result<RunMetrics, SimError> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(SimError::InvalidNetwork(violations));
    }
    check_config(cfg)?;
    let policy = build_policy(policy_name, spec, cfg.seed)?;
    Sim::new(spec, policy, cfg)?.run()
}

/// Simulate several policies on the *same* realization: identical seed,
/// hence identical arrival processes and per-job service requirements.
pub fn run_coupled(
    spec: &NetworkSpec,
    policy_names: &[&str],
    cfg: &RunConfig,
) -> Result<Vec<RunMetrics>, SimError> {
    policy_names.iter().map(|name| run(spec, name, cfg)).collect()
}

fn check_config(cfg: &RunConfig) -> Result<(), SimError> {
    if !(cfg.horizon.is_finite() && cfg.horizon > 0.0) {
        return Err(SimError::BadConfig(format!("horizon must be positive, got {}", cfg.horizon)));
    }
    if !(cfg.warmup.is_finite() && cfg.warmup >= 0.0 && cfg.warmup < cfg.horizon) {
        return Err(SimError::BadConfig(format!(
            "warmup must lie in [0, horizon), got {} with horizon {}",
            cfg.warmup, cfg.horizon
        )));
    }
    if !(cfg.discount_rate.is_finite() && cfg.discount_rate >= 0.0) {
        return Err(SimError::BadConfig(format!(
            "discount rate must be nonnegative, got {}",
            cfg.discount_rate
        )));
    }
    if let Some(dt) = cfg.sample_interval {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::BadConfig(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
    }
    Ok(())
}

// --- event queue ----------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EvKind {
    Completion { job_type: usize, token: u64 },
    Arrival { job_type: usize },
    ReviewEnd { version: u64 },
}

impl EvKind {
    /// Tie-break rank at equal times: completions free resources before
    /// arrivals claim them; boundaries resolve last.
    fn rank(&self) -> u8 {
        match self {
            EvKind::Completion { .. } => 0,
            EvKind::Arrival { .. } => 1,
            EvKind::ReviewEnd { .. } => 2,
        }
    }
}

#[derive(Debug)]
struct Ev {
    time: f64,
    kind: EvKind,
    seq: u64,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    /// Reversed, so the `BinaryHeap` max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.rank().cmp(&self.kind.rank()))
            .then(other.seq.cmp(&self.seq))
    }
}

// --- the engine -----------------------------------------------------------

struct Sim<'a> {
    spec: &'a NetworkSpec,
    policy: Box<dyn policies::Policy>,
    cfg: &'a RunConfig,
    masks: Vec<u64>,
    holding: Vec<f64>,

    heap: BinaryHeap<Ev>,
    seq: u64,
    now: f64,

    queues: Vec<VecDeque<f64>>,
    serving: u128,
    /// Monotone id of each type's head job, to tell whether a pending
    /// completion still refers to the job actually at the head.
    head_id: Vec<u64>,
    completion_token: Vec<u64>,
    /// Pending completion per type: (token, head id it was scheduled for).
    pending_completion: Vec<Option<(u64, u64)>>,
    next_arrival: Vec<f64>,
    review_version: u64,

    arrival_samplers: Vec<Option<Sampler>>,
    service_samplers: Vec<Sampler>,
    arrival_streams: Vec<rand_chacha::ChaCha8Rng>,
    service_streams: Vec<rand_chacha::ChaCha8Rng>,

    // accumulators
    events: u64,
    decisions: u64,
    review_periods: u64,
    arrivals: Vec<u64>,
    completions: Vec<u64>,
    job_integral: Vec<f64>,
    busy_integral: Vec<f64>,
    quartile_integral: [f64; 4],
    discounted: f64,
    violations: u64,
    trace: Vec<TracePoint>,
    next_sample: Option<f64>,
}

impl<'a> Sim<'a> {
    fn new(
        spec: &'a NetworkSpec,
        policy: Box<dyn policies::Policy>,
        cfg: &'a RunConfig,
    ) -> Result<Self, SimError> {
        let n = spec.num_types();
        let mut arrival_samplers = Vec::with_capacity(n);
        let mut service_samplers = Vec::with_capacity(n);
        for (j, jt) in spec.job_types.iter().enumerate() {
            // A zero-rate type never arrives and needs no sampler.
            arrival_samplers.push(if jt.arrival_rate > 0.0 {
                Some(
                    jt.arrival_distribution()
                        .sampler()
                        .map_err(|source| SimError::Dist { job_type: j, source })?,
                )
            } else {
                None
            });
            service_samplers.push(
                jt.service_distribution()
                    .sampler()
                    .map_err(|source| SimError::Dist { job_type: j, source })?,
            );
        }
        let arrival_streams = (0..n)
            .map(|j| rng::stream(cfg.seed, &[rng::ROLE_ARRIVAL, j as u64]))
            .collect();
        let service_streams = (0..n)
            .map(|j| rng::stream(cfg.seed, &[rng::ROLE_SERVICE, j as u64]))
            .collect();
        Ok(Sim {
            masks: spec.resource_masks(),
            holding: spec.job_types.iter().map(|jt| jt.holding_cost).collect(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            queues: vec![VecDeque::new(); n],
            serving: 0,
            head_id: vec![0; n],
            completion_token: vec![0; n],
            pending_completion: vec![None; n],
            next_arrival: vec![f64::INFINITY; n],
            review_version: 0,
            events: 0,
            decisions: 0,
            review_periods: 0,
            arrivals: vec![0; n],
            completions: vec![0; n],
            job_integral: vec![0.0; n],
            busy_integral: vec![0.0; spec.num_resources],
            quartile_integral: [0.0; 4],
            discounted: 0.0,
            violations: 0,
            trace: Vec::new(),
            next_sample: cfg.sample_interval.map(|_| 0.0),
            spec,
            policy,
            cfg,
            arrival_samplers,
            service_samplers,
            arrival_streams,
            service_streams,
        })
    }

    fn push(&mut self, time: f64, kind: EvKind) {
        self.seq += 1;
        self.heap.push(Ev { time, kind, seq: self.seq });
    }

    fn run(mut self) -> Result<RunMetrics, SimError> {
        for j in 0..self.queues.len() {
            if let Some(sampler) = &self.arrival_samplers[j] {
                let gap = sampler.sample(&mut self.arrival_streams[j]);
                self.next_arrival[j] = gap;
                self.push(gap, EvKind::Arrival { job_type: j });
            }
        }
        // Trace the initial (empty) state at t = 0.
        self.emit_samples_through(0.0);
        self.decide(policies::Event::Init)?;

        while let Some(ev) = self.heap.pop() {
            if ev.time > self.cfg.horizon {
                break;
            }
            match ev.kind {
                EvKind::Completion { job_type, token } => {
                    if self.completion_token[job_type] != token {
                        continue; // stale: the head changed or service was preempted
                    }
                    self.advance_to(ev.time);
                    self.events += 1;
                    self.complete(job_type);
                    self.decide(policies::Event::Completion(job_type))?;
                }
                EvKind::Arrival { job_type } => {
                    self.advance_to(ev.time);
                    self.events += 1;
                    self.arrive(job_type);
                    self.decide(policies::Event::Arrival(job_type))?;
                }
                EvKind::ReviewEnd { version } => {
                    if version != self.review_version {
                        continue; // superseded by a later boundary
                    }
                    self.advance_to(ev.time);
                    self.events += 1;
                    self.decide(policies::Event::ReviewEnd)?;
                }
            }
        }
        self.advance_to(self.cfg.horizon);
        Ok(self.finish())
    }

    /// Integrate the frozen state forward and move the clock.
    fn advance_to(&mut self, t: f64) {
        let (a, b) = (self.now, t);
        if b > a {
            // Discounted holding cost over the full run.
            let cost_rate: f64 = self
                .holding
                .iter()
                .zip(&self.queues)
                .map(|(&h, q)| h * q.len() as f64)
                .sum();
            self.discounted += discounted_integral(cost_rate, a, b, self.cfg.discount_rate);

            // Post-warmup averages.
            let wa = a.max(self.cfg.warmup);
            if b > wa {
                let len = b - wa;
                let mut total = 0u64;
                for (j, q) in self.queues.iter().enumerate() {
                    self.job_integral[j] += q.len() as f64 * len;
                    total += q.len() as u64;
                }
                for i in 0..self.busy_integral.len() {
                    if self.busy_mask() >> i & 1 == 1 {
                        self.busy_integral[i] += len;
                    }
                }
                self.split_into_quartiles(total as f64, wa, b);
            }

            // Served heads burn down continuously.
            let elapsed = b - a;
            for j in 0..self.queues.len() {
                if self.serving >> j & 1 == 1 {
                    if let Some(head) = self.queues[j].front_mut() {
                        *head -= elapsed;
                    }
                }
            }
        }
        self.emit_samples_through(t);
        self.now = t;
    }

    fn busy_mask(&self) -> u64 {
        let mut busy = 0u64;
        for j in 0..self.masks.len() {
            if self.serving >> j & 1 == 1 {
                busy |= self.masks[j];
            }
        }
        busy
    }

    fn split_into_quartiles(&mut self, total: f64, a: f64, b: f64) {
        let span = (self.cfg.horizon - self.cfg.warmup) / 4.0;
        for k in 0..4 {
            let lo = self.cfg.warmup + span * k as f64;
            let hi = lo + span;
            let overlap = (b.min(hi) - a.max(lo)).max(0.0);
            self.quartile_integral[k] += total * overlap;
        }
    }

    /// Emit trace samples at every grid point in `(last sampled, t]`,
    /// recording the current (pre-event) state — i.e. left limits.
    fn emit_samples_through(&mut self, t: f64) {
        let Some(dt) = self.cfg.sample_interval else { return };
        while let Some(next) = self.next_sample {
            if next > t + 1e-12 || next > self.cfg.horizon + 1e-12 {
                break;
            }
            let jobs: Vec<u64> = self.queues.iter().map(|q| q.len() as u64).collect();
            self.trace.push(TracePoint {
                time: next,
                total_jobs: jobs.iter().sum(),
                jobs,
                busy_mask: self.busy_mask(),
            });
            self.next_sample = Some(next + dt);
        }
    }

    fn arrive(&mut self, j: usize) {
        let service = self.service_samplers[j].sample(&mut self.service_streams[j]);
        self.queues[j].push_back(service);
        self.arrivals[j] += 1;
        let sampler = self.arrival_samplers[j].as_ref().expect("arrival for a zero-rate type");
        let gap = sampler.sample(&mut self.arrival_streams[j]);
        self.next_arrival[j] = self.now + gap;
        self.push(self.now + gap, EvKind::Arrival { job_type: j });
    }

    fn complete(&mut self, j: usize) {
        let head = self.queues[j].pop_front().expect("completion for an empty queue");
        debug_assert!(
            head.abs() <= COMPLETION_DRIFT,
            "head of type {j} had {head} remaining at its completion"
        );
        self.completions[j] += 1;
        self.head_id[j] += 1;
        self.completion_token[j] += 1;
        self.pending_completion[j] = None;
        self.serving &= !(1u128 << j);
    }

    fn decide(&mut self, event: policies::Event) -> Result<(), SimError> {
        let queues: Vec<u64> = self.queues.iter().map(|q| q.len() as u64).collect();
        let head_remaining: Vec<Option<f64>> =
            self.queues.iter().map(|q| q.front().copied()).collect();
        let next_arrival = self
            .next_arrival
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let ctx = PolicyCtx {
            time: self.now,
            queues: &queues,
            head_remaining: &head_remaining,
            next_arrival: next_arrival.is_finite().then_some(next_arrival),
            event,
        };
        let Decision { serve, review_end } = self.policy.on_event(&ctx)?;
        self.decisions += 1;

        // Feasibility: only nonempty types, pairwise resource-disjoint.
        let mut serve_mask = 0u128;
        let mut busy = 0u64;
        for &j in &serve {
            if j >= queues.len() || queues[j] == 0 {
                return Err(SimError::BadDecision {
                    time: self.now,
                    detail: format!("served type {j} which has no jobs"),
                });
            }
            if serve_mask >> j & 1 == 1 || busy & self.masks[j] != 0 {
                return Err(SimError::BadDecision {
                    time: self.now,
                    detail: format!("type {j} overlaps other served types (serve set {serve:?})"),
                });
            }
            serve_mask |= 1 << j;
            busy |= self.masks[j];
        }

        // Reconcile completion events with the new service set.
        for j in 0..queues.len() {
            let was = self.serving >> j & 1 == 1;
            let is = serve_mask >> j & 1 == 1;
            if was && !is {
                self.completion_token[j] += 1; // preempted: invalidate
                self.pending_completion[j] = None;
            } else if is {
                let still_valid = self
                    .pending_completion[j]
                    .is_some_and(|(token, head)| {
                        token == self.completion_token[j] && head == self.head_id[j]
                    });
                if !still_valid {
                    self.completion_token[j] += 1;
                    let token = self.completion_token[j];
                    let remaining = self.queues[j].front().copied().expect("nonempty");
                    self.pending_completion[j] = Some((token, self.head_id[j]));
                    self.push(self.now + remaining.max(0.0), EvKind::Completion { job_type: j, token });
                }
            }
        }
        self.serving = serve_mask;

        // Audit against the policy's own admissibility view.
        if let Some(view) = self.policy.admissibility() {
            let mut view_busy = 0u64;
            for &j in &serve {
                view_busy |= view.incidence[j];
            }
            let idle_heavy = view.heavy_mask & !view_busy;
            if idle_heavy != 0 {
                for i in 0..self.spec.num_resources {
                    if idle_heavy >> i & 1 == 1 {
                        let waiting: u64 = (0..queues.len())
                            .filter(|&j| view.incidence[j] >> i & 1 == 1)
                            .map(|j| queues[j])
                            .sum();
                        if waiting > 0 {
                            self.violations += 1;
                            break;
                        }
                    }
                }
            }
        }

        if let Some(end) = review_end {
            if end < self.now - BOUNDARY_SLACK {
                return Err(SimError::BadDecision {
                    time: self.now,
                    detail: format!("review boundary {end} lies in the past"),
                });
            }
            self.review_periods += 1;
            self.review_version += 1;
            self.push(end.max(self.now), EvKind::ReviewEnd { version: self.review_version });
        }
        Ok(())
    }

    fn finish(self) -> RunMetrics {
        let window = self.cfg.horizon - self.cfg.warmup;
        let mean_jobs: Vec<f64> = self.job_integral.iter().map(|v| v / window).collect();
        let mean_jobs_total = mean_jobs.iter().sum();
        let quartile_mean_jobs =
            self.quartile_integral.map(|v| v / (window / 4.0));
        let [m1, m2, _, m4] = quartile_mean_jobs;
        let unstable = m4 > 3.0 * m1 && m4 > 1.5 * m2 && m4 > 1.0;
        RunMetrics {
            policy: self.policy.name().to_string(),
            seed: self.cfg.seed,
            horizon: self.cfg.horizon,
            warmup: self.cfg.warmup,
            events: self.events,
            decisions: self.decisions,
            review_periods: self.review_periods,
            arrivals: self.arrivals,
            completions: self.completions,
            final_jobs: self.queues.iter().map(|q| q.len() as u64).collect(),
            mean_jobs,
            mean_jobs_total,
            discounted_cost: self.discounted,
            idle_fraction: self
                .busy_integral
                .iter()
                .map(|&b| 1.0 - b / window)
                .collect(),
            audited: self.policy.admissibility().is_some(),
            conservation_violations: self.violations,
            quartile_mean_jobs,
            unstable,
            trace: self.trace,
        }
    }
}

/// `∫_a^b rate · e^{-δt} dt`, degenerating to `rate · (b-a)` at δ = 0.
fn discounted_integral(rate: f64, a: f64, b: f64, delta: f64) -> f64 {
    if rate == 0.0 {
        return 0.0;
    }
    if delta == 0.0 {
        rate * (b - a)
    } else {
        rate * ((-delta * a).exp() - (-delta * b).exp()) / delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_ordering_puts_completions_first() {
        let mut heap = BinaryHeap::new();
        heap.push(Ev { time: 1.0, kind: EvKind::Arrival { job_type: 0 }, seq: 1 });
        heap.push(Ev { time: 1.0, kind: EvKind::Completion { job_type: 1, token: 0 }, seq: 2 });
        heap.push(Ev { time: 0.5, kind: EvKind::ReviewEnd { version: 0 }, seq: 3 });
        assert!(matches!(heap.pop().unwrap().kind, EvKind::ReviewEnd { .. }));
        assert!(matches!(heap.pop().unwrap().kind, EvKind::Completion { .. }));
        assert!(matches!(heap.pop().unwrap().kind, EvKind::Arrival { .. }));
    }

    #[test]
    fn discounted_integral_reduces_to_length_at_zero_rate() {
        assert!((discounted_integral(2.0, 1.0, 3.0, 0.0) - 4.0).abs() < 1e-15);
        let v = discounted_integral(1.0, 0.0, f64::ln(2.0), 1.0);
        assert!((v - 0.5).abs() < 1e-15);
    }
}
