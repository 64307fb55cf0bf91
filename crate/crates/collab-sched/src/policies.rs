//! Scheduling policies: who gets served after every state change.
//!
//! A policy sees one event at a time (an arrival, a service completion, a
//! review-period boundary, or the initial state) together with the current
//! queue lengths, and answers with the set of job types to serve — at most
//! one job per type, pairwise resource-disjoint. Service is
//! preempt-resume unless a policy deliberately pins running jobs.
//!
//! The centerpiece is [`SplitReviewPolicy`], which targets the
//! cost-minimal split of heavy-resource workload: it solves for per-type
//! queue targets, serves over-target types (with work conservation
//! enforced through the class forest), and freezes those targets over a
//! review period sized so that under-target queues can catch up through
//! arrivals. The baselines range from fixed priority orders to queue
//! pressure and a seeded random work-conserving sampler.

use crate::forest::{Forest, ForestError};
use crate::network::NetworkSpec;
use crate::rng;
use crate::solver::{SolveStatus, SolverError, SplitProblem};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Slack subtracted before rounding queue targets up to integers, so a
/// target that is an integer up to solver noise does not round one higher.
const CEIL_SLACK: f64 = 1e-9;

/// What changed since the previous decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// First decision, before anything has happened.
    Init,
    /// A job of this type has just arrived.
    Arrival(usize),
    /// The in-service job of this type has just finished.
    Completion(usize),
    /// A scheduled review-period boundary has been reached.
    ReviewEnd,
}

/// State snapshot handed to a policy at a decision point.
#[derive(Clone, Copy, Debug)]
pub struct PolicyCtx<'a> {
    /// Current time.
    pub time: f64,
    /// Jobs present per type, including any in service.
    pub queues: &'a [u64],
    /// Remaining service requirement of each type's head job, `None` when
    /// the type has no jobs.
    pub head_remaining: &'a [Option<f64>],
    /// Absolute time of the next arrival, if one is scheduled.
    pub next_arrival: Option<f64>,
    /// What triggered this decision.
    pub event: Event,
}

/// A policy's answer: whom to serve, and optionally when to be called back.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Job types to serve, at most one job each.
    pub serve: Vec<usize>,
    /// `Some(t)`: schedule (or move) the review boundary to time `t`.
    /// `None`: leave any existing boundary alone.
    pub review_end: Option<f64>,
}

/// The incidence a policy promises to keep work-conserving: no resource in
/// `heavy_mask` may idle while jobs it could serve (under `incidence`)
/// exist. Simulations audit decisions against this view when present.
#[derive(Clone, Debug)]
pub struct AdmissibilityView {
    /// Resource mask each job type occupies under this policy's decisions.
    pub incidence: Vec<u64>,
    /// Resources covered by the conservation promise.
    pub heavy_mask: u64,
}

/// Errors from building or running a policy.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown policy name {0:?}")]
    UnknownPolicy(String),
    #[error("policy does not fit this network: {0}")]
    UnsupportedTopology(String),
    #[error("requirement sets overlap without nesting, even after idled resources are folded in")]
    NotHierarchical,
    #[error("workload split solve ended in state {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Structure(#[from] ForestError),
    #[error(transparent)]
    Problem(#[from] SolverError),
}

/// A scheduling policy driven by discrete events.
pub trait Policy: Send {
    /// The name this policy was built from.
    fn name(&self) -> &str;
    /// Decide the allocation after an event.
    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError>;
    /// Work-conservation promise to audit against, if this policy makes one.
    fn admissibility(&self) -> Option<&AdmissibilityView>;
}

impl std::fmt::Debug for dyn Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Policy").field(&self.name()).finish()
    }
}

/// Build a policy by name:
///
/// * `proposed` — review-period workload-split targeting.
/// * `gvm` — widest collaborations first, in index order.
/// * `pia` — individual (single-resource) types first, then widest-first.
/// * `pht:<k>` — individual-first until the top type's queue reaches `k`,
///   widest-first until it drains.
/// * `mp` — pressure-greedy: maximize total `μ_j · Q_j` of served types.
/// * `np-gvm`, `np-pia`, `np-mp` — the same rules without preemption.
/// * `random-wc` — uniform random among work-conserving allocations.
pub fn build_policy(
    name: &str,
    spec: &NetworkSpec,
    seed: u64,
) -> Result<Box<dyn Policy>, PolicyError> {
    let masks = spec.resource_masks();
    match name {
        "proposed" => Ok(Box::new(SplitReviewPolicy::new(spec)?)),
        "gvm" => Ok(Box::new(LevelPriority::new(name, spec, masks))),
        "pia" => Ok(Box::new(SoloFirst::new(name, spec.num_resources, masks))),
        "mp" => Ok(Box::new(MaxPressure::new(name, spec, masks)?)),
        "random-wc" => Ok(Box::new(RandomWorkConserving::new(name, spec, masks, seed)?)),
        _ => {
            if let Some(k) = name.strip_prefix("pht:").and_then(|s| s.parse::<u64>().ok()) {
                return Ok(Box::new(Threshold::new(name, spec.num_resources, masks, k)?));
            }
            if let Some(base) = name.strip_prefix("np-") {
                let rule = match base {
                    "gvm" => NpBase::Widest,
                    "pia" => NpBase::Solo,
                    "mp" => NpBase::Pressure {
                        forest: Forest::build(&masks, spec.num_resources)?,
                        service_rates: service_rates(spec),
                    },
                    _ => return Err(PolicyError::UnknownPolicy(name.to_string())),
                };
                return Ok(Box::new(NonPreemptive::new(name, spec.num_resources, masks, rule)));
            }
            Err(PolicyError::UnknownPolicy(name.to_string()))
        }
    }
}

fn service_rates(spec: &NetworkSpec) -> Vec<f64> {
    spec.job_types.iter().map(|jt| jt.service_rate).collect()
}

fn arrival_rates(spec: &NetworkSpec) -> Vec<f64> {
    spec.job_types.iter().map(|jt| jt.arrival_rate).collect()
}

/// How long under-target queues need to reach their targets through
/// arrivals alone: for each resource, the largest `(q*_c − Q_j) / λ_j` over
/// its under-target types (column `c` holds type `j = cols[c]`), maximized
/// over resources and floored at zero.
pub fn review_horizon(
    q_star: &[f64],
    q_ceil: &[u64],
    cols: &[usize],
    queues: &[u64],
    arrival_rates: &[f64],
    masks: &[u64],
    num_resources: usize,
) -> f64 {
    let mut horizon = 0.0f64;
    for i in 0..num_resources {
        for (c, &j) in cols.iter().enumerate() {
            // A type that never arrives can never catch up to its target;
            // it cannot set the pace of a review period.
            if masks[j] >> i & 1 == 1 && queues[j] <= q_ceil[c] && arrival_rates[j] > 0.0 {
                let gap = (q_star[c] - queues[j] as f64) / arrival_rates[j];
                if gap > horizon {
                    horizon = gap;
                }
            }
        }
    }
    horizon
}

// --- greedy allocation rules shared by the baselines ----------------------

/// Serve nonempty types widest requirement set first (ties to the lower
/// index), skipping anything that overlaps already-busy resources.
fn widest_first(masks: &[u64], queues: &[u64], mut busy: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..masks.len()).filter(|&j| queues[j] > 0).collect();
    order.sort_by(|&a, &b| {
        masks[b].count_ones().cmp(&masks[a].count_ones()).then(a.cmp(&b))
    });
    let mut serve = Vec::new();
    for j in order {
        if masks[j] & busy == 0 {
            busy |= masks[j];
            serve.push(j);
        }
    }
    serve.sort_unstable();
    serve
}

/// For each resource in index order, start its lowest-indexed nonempty
/// single-resource type; then fill whatever is still free widest-first.
fn solo_first(masks: &[u64], queues: &[u64], num_resources: usize, mut busy: u64) -> Vec<usize> {
    let mut serve = Vec::new();
    for r in 0..num_resources {
        if busy >> r & 1 == 1 {
            continue;
        }
        if let Some(j) =
            (0..masks.len()).find(|&j| masks[j] == 1u64 << r && queues[j] > 0)
        {
            busy |= masks[j];
            serve.push(j);
        }
    }
    let mut rest = widest_first(masks, queues, busy);
    serve.append(&mut rest);
    serve.sort_unstable();
    serve
}

// --- baseline policies ----------------------------------------------------

/// Widest-collaboration-first priority. Work-conserving whenever the
/// requirement sets nest, so on such networks it publishes a view.
struct LevelPriority {
    label: String,
    masks: Vec<u64>,
    view: Option<AdmissibilityView>,
}

impl LevelPriority {
    fn new(label: &str, spec: &NetworkSpec, masks: Vec<u64>) -> Self {
        let view = spec
            .analyze_architecture()
            .is_hierarchical
            .then(|| AdmissibilityView { incidence: masks.clone(), heavy_mask: spec.heavy_mask() });
        LevelPriority { label: label.to_string(), masks, view }
    }
}

impl Policy for LevelPriority {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        Ok(Decision { serve: widest_first(&self.masks, ctx.queues, 0), review_end: None })
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        self.view.as_ref()
    }
}

/// Individual-types-first priority. Deliberately not work-conserving: a
/// started solo job can block a collaboration while other resources idle.
struct SoloFirst {
    label: String,
    num_resources: usize,
    masks: Vec<u64>,
}

impl SoloFirst {
    fn new(label: &str, num_resources: usize, masks: Vec<u64>) -> Self {
        SoloFirst { label: label.to_string(), num_resources, masks }
    }
}

impl Policy for SoloFirst {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        Ok(Decision {
            serve: solo_first(&self.masks, ctx.queues, self.num_resources, 0),
            review_end: None,
        })
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        None
    }
}

/// Two-mode hysteresis around the unique top type: individual-first while
/// its queue is short, widest-first from the moment it reaches `k` until it
/// fully drains.
struct Threshold {
    label: String,
    num_resources: usize,
    masks: Vec<u64>,
    top: usize,
    k: u64,
    top_mode: bool,
}

impl Threshold {
    fn new(
        label: &str,
        num_resources: usize,
        masks: Vec<u64>,
        k: u64,
    ) -> Result<Self, PolicyError> {
        let tops: Vec<usize> = (0..masks.len())
            .filter(|&j| masks.iter().all(|&m| m & !masks[j] == 0))
            .collect();
        match tops.as_slice() {
            [top] => Ok(Threshold {
                label: label.to_string(),
                num_resources,
                masks,
                top: *top,
                k,
                top_mode: false,
            }),
            [] => Err(PolicyError::UnsupportedTopology(
                "no job type requires every other type's resources".to_string(),
            )),
            _ => Err(PolicyError::UnsupportedTopology(format!(
                "types {tops:?} all span the full resource set; the top type must be unique"
            ))),
        }
    }
}

impl Policy for Threshold {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        let q_top = ctx.queues[self.top];
        if q_top >= self.k {
            self.top_mode = true;
        } else if q_top == 0 {
            self.top_mode = false;
        }
        let serve = if self.top_mode {
            widest_first(&self.masks, ctx.queues, 0)
        } else {
            solo_first(&self.masks, ctx.queues, self.num_resources, 0)
        };
        Ok(Decision { serve, review_end: None })
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        None
    }
}

/// Serve the feasible set with the greatest total `μ_j · Q_j`, ties toward
/// more busy resources and then the upper class. Needs nested requirement
/// sets for its tree search; may idle resources when pressure says so.
struct MaxPressure {
    label: String,
    forest: Forest,
    service_rates: Vec<f64>,
}

impl MaxPressure {
    fn new(label: &str, spec: &NetworkSpec, masks: Vec<u64>) -> Result<Self, PolicyError> {
        Ok(MaxPressure {
            label: label.to_string(),
            forest: Forest::build(&masks, spec.num_resources)?,
            service_rates: service_rates(spec),
        })
    }

    fn weights(&self, queues: &[u64]) -> Vec<f64> {
        self.service_rates
            .iter()
            .zip(queues)
            .map(|(&mu, &q)| mu * q as f64)
            .collect()
    }
}

impl Policy for MaxPressure {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        let weights = self.weights(ctx.queues);
        let serve = self.forest.allocate_pressure(ctx.queues, 0, &weights).serve;
        Ok(Decision { serve, review_end: None })
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        None
    }
}

/// Uniform random choice among work-conserving allocations, driven by a
/// seeded stream so runs reproduce exactly.
struct RandomWorkConserving {
    label: String,
    forest: Forest,
    heavy_mask: u64,
    stream: ChaCha8Rng,
    view: AdmissibilityView,
}

impl RandomWorkConserving {
    fn new(
        label: &str,
        spec: &NetworkSpec,
        masks: Vec<u64>,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let heavy_mask = spec.heavy_mask();
        Ok(RandomWorkConserving {
            label: label.to_string(),
            forest: Forest::build(&masks, spec.num_resources)?,
            heavy_mask,
            stream: rng::stream(seed, &[rng::ROLE_POLICY]),
            view: AdmissibilityView { incidence: masks, heavy_mask },
        })
    }
}

impl Policy for RandomWorkConserving {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        let serve = self
            .forest
            .allocate_random_conserving(ctx.queues, 0, self.heavy_mask, &mut self.stream)
            .serve;
        Ok(Decision { serve, review_end: None })
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        Some(&self.view)
    }
}

// --- non-preemptive wrapper -----------------------------------------------

enum NpBase {
    Widest,
    Solo,
    Pressure { forest: Forest, service_rates: Vec<f64> },
}

/// Runs a base rule without preemption: every type served at the previous
/// decision keeps its resources until its job completes; the base rule only
/// allocates what is left.
struct NonPreemptive {
    label: String,
    num_resources: usize,
    masks: Vec<u64>,
    base: NpBase,
    last_serve: u128,
}

impl NonPreemptive {
    fn new(label: &str, num_resources: usize, masks: Vec<u64>, base: NpBase) -> Self {
        NonPreemptive {
            label: label.to_string(),
            num_resources,
            masks,
            base,
            last_serve: 0,
        }
    }
}

impl Policy for NonPreemptive {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        // A previously served type stays pinned while its job is still
        // running: always, except right after that job's own completion.
        let mut pinned: u128 = 0;
        let mut busy: u64 = 0;
        let mut serve = Vec::new();
        for j in 0..self.masks.len() {
            if self.last_serve >> j & 1 == 1
                && ctx.queues[j] > 0
                && ctx.event != Event::Completion(j)
            {
                pinned |= 1 << j;
                busy |= self.masks[j];
                serve.push(j);
            }
        }
        let mut fresh = match &self.base {
            NpBase::Widest => widest_first(&self.masks, ctx.queues, busy),
            NpBase::Solo => solo_first(&self.masks, ctx.queues, self.num_resources, busy),
            NpBase::Pressure { forest, service_rates } => {
                let weights: Vec<f64> = service_rates
                    .iter()
                    .zip(ctx.queues)
                    .map(|(&mu, &q)| mu * q as f64)
                    .collect();
                forest.allocate_pressure(ctx.queues, pinned, &weights).serve
            }
        };
        serve.append(&mut fresh);
        serve.sort_unstable();
        self.last_serve = serve.iter().fold(0u128, |m, &j| m | 1 << j);
        Ok(Decision { serve, review_end: None })
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        None
    }
}

// --- review-period workload-split policy ----------------------------------

/// Targets frozen during one review period.
struct ReviewState {
    q_ceil: Vec<u64>,
}

/// The review-period policy built on the workload split.
///
/// At a resolve point it measures each constrained resource's workload,
/// solves for the cost-minimal (then minimum-norm) per-type split, and
/// rounds the split up to integer queue targets. If nothing is over
/// target, it simply serves to cover workloads and re-solves at the next
/// event. Otherwise it serves over-target types under work conservation
/// and opens a review period long enough for every under-target queue to
/// reach its target through arrivals (never shorter than the step to the
/// next already-scheduled event); inside the period the targets stay
/// frozen, and the boundary triggers the next resolve.
///
/// Networks whose requirement sets fail to nest are first widened by
/// folding each type's forcibly idled resources into its requirement set;
/// if even the widened sets fail to nest the network is refused.
struct SplitReviewPolicy {
    label: String,
    problem: SplitProblem,
    forest: Forest,
    masks: Vec<u64>,
    service_rates: Vec<f64>,
    arrival_rates: Vec<f64>,
    heavy_mask: u64,
    num_resources: usize,
    view: AdmissibilityView,
    review: Option<ReviewState>,
}

impl SplitReviewPolicy {
    fn new(spec: &NetworkSpec) -> Result<Self, PolicyError> {
        let physical = spec.resource_masks();
        let (decision_spec, masks, forest) =
            match Forest::build(&physical, spec.num_resources) {
                Ok(f) => (spec.clone(), physical, f),
                Err(_) => {
                    // Route through the companion network, in canonical form:
                    // widening typically leaves groups of resources with
                    // identical member types, and each group acts as one
                    // resource.
                    let widened = spec.hypothetical_network().merge_duplicate_resources();
                    let masks = widened.resource_masks();
                    match Forest::build(&masks, widened.num_resources) {
                        Ok(f) => (widened, masks, f),
                        Err(_) => return Err(PolicyError::NotHierarchical),
                    }
                }
            };
        let problem = SplitProblem::from_network(&decision_spec)?;
        let heavy_mask = decision_spec.heavy_mask();
        Ok(SplitReviewPolicy {
            label: "proposed".to_string(),
            view: AdmissibilityView { incidence: masks.clone(), heavy_mask },
            service_rates: service_rates(&decision_spec),
            arrival_rates: arrival_rates(&decision_spec),
            num_resources: decision_spec.num_resources,
            problem,
            forest,
            masks,
            heavy_mask,
            review: None,
        })
    }

    /// Types currently exceeding their (column-indexed) targets.
    fn over_mask(&self, queues: &[u64], q_ceil: &[u64]) -> u128 {
        let mut over = 0u128;
        for (c, &j) in self.problem.col_types().iter().enumerate() {
            if queues[j] > q_ceil[c] {
                over |= 1 << j;
            }
        }
        over
    }

    /// Measure workloads, re-solve the split, and either keep resolving
    /// per event (nothing over target) or open a review period.
    fn resolve(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        let w: Vec<f64> = self
            .problem
            .row_resources()
            .iter()
            .map(|&i| {
                self.masks
                    .iter()
                    .zip(ctx.queues)
                    .zip(&self.service_rates)
                    .filter(|((&m, _), _)| m >> i & 1 == 1)
                    .map(|((_, &q), &mu)| q as f64 / mu)
                    .sum()
            })
            .collect();
        let sol = self.problem.split(&w);
        if sol.status != SolveStatus::Optimal {
            return Err(PolicyError::Solver(sol.status));
        }
        let q_ceil: Vec<u64> = sol
            .q
            .iter()
            .map(|&q| (q - CEIL_SLACK).ceil().max(0.0) as u64)
            .collect();
        let over = self.over_mask(ctx.queues, &q_ceil);
        let alloc = self.forest.allocate_targeted(ctx.queues, 0, over, self.heavy_mask);
        if over == 0 {
            return Ok(Decision { serve: alloc.serve, review_end: None });
        }

        let catch_up = review_horizon(
            &sol.q,
            &q_ceil,
            self.problem.col_types(),
            ctx.queues,
            &self.arrival_rates,
            &self.masks,
            self.num_resources,
        );
        let next_completion = alloc
            .serve
            .iter()
            .filter_map(|&j| ctx.head_remaining[j])
            .fold(f64::INFINITY, f64::min);
        let next_event = ctx
            .next_arrival
            .unwrap_or(f64::INFINITY)
            .min(ctx.time + next_completion);
        let step = if next_event.is_finite() { (next_event - ctx.time).max(0.0) } else { 0.0 };
        let end = ctx.time + catch_up.max(step);
        self.review = Some(ReviewState { q_ceil });
        Ok(Decision { serve: alloc.serve, review_end: Some(end) })
    }
}

impl Policy for SplitReviewPolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn on_event(&mut self, ctx: &PolicyCtx) -> Result<Decision, PolicyError> {
        if matches!(ctx.event, Event::Init | Event::ReviewEnd) {
            self.review = None;
        }
        if let Some(state) = &self.review {
            let over = self.over_mask(ctx.queues, &state.q_ceil);
            let serve = self
                .forest
                .allocate_targeted(ctx.queues, 0, over, self.heavy_mask)
                .serve;
            return Ok(Decision { serve, review_end: None });
        }
        self.resolve(ctx)
    }

    fn admissibility(&self) -> Option<&AdmissibilityView> {
        Some(&self.view)
    }
}
