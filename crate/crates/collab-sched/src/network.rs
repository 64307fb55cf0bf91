//! Network description, validation, and collaboration-architecture analysis.
//!
//! A network consists of `num_resources` indivisible resources and a list of
//! job types. Job type `j` arrives at rate `λ_j`, requires *all* resources in
//! its `resources` set simultaneously while in service, completes at rate
//! `μ_j` when served, and accrues holding cost `h_j` per job per unit time.
//! Resource indices are 0-based throughout.
//!
//! Two structural notions drive everything downstream:
//!
//! * **Hierarchical architecture**: whenever the resource sets of two job
//!   types overlap, one contains the other. Overlaps then form a laminar
//!   family (a forest), which is what makes the review-period policy's
//!   allocation step exact and the workload process asymptotically tractable.
//! * **Heavy resources**: resources whose offered load `ρ_i = Σ_{j∋i} λ_j/μ_j`
//!   is near capacity. The scheduling problem is posed in terms of the
//!   workloads of heavy resources; light resources only matter through the
//!   job types they share with heavy ones.
//!
//! [`NetworkSpec::hypothetical_network`] implements the companion-network
//! construction for non-hierarchical networks: resources that are forced to
//! idle whenever type `j` is in service (because no type that could use them
//! can run concurrently with `j`) are added to `j`'s requirement set. The
//! transform never changes achievable behavior — it only makes unavoidable
//! idleness explicit — and on some networks the result is hierarchical even
//! though the original is not.

use crate::dist::{DistKind, DistributionSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Hard caps that let resource sets live in `u64` bitmasks and type sets in
/// `u128` bitmasks. Generous for the intended problem sizes.
pub const MAX_RESOURCES: usize = 64;
pub const MAX_JOB_TYPES: usize = 128;

/// Default load threshold above which a resource is classified heavy when no
/// explicit `heavy_set` is given.
pub const DEFAULT_HEAVY_THRESHOLD: f64 = 0.9;

/// One job class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobType {
    /// Arrival rate `λ_j ≥ 0`; zero means the type never arrives.
    pub arrival_rate: f64,
    /// Service rate `μ_j > 0` (reciprocal of the mean service requirement).
    pub service_rate: f64,
    /// Holding cost rate `h_j > 0`.
    #[serde(default = "default_holding_cost")]
    pub holding_cost: f64,
    /// Inter-arrival distribution family. Defaults to exponential.
    #[serde(default)]
    pub arrival_dist: DistKind,
    /// Service-requirement distribution family. Defaults to exponential.
    #[serde(default)]
    pub service_dist: DistKind,
    /// Inter-arrival cv. Defaults to the family's canonical value
    /// (1 for exponential, 0 for deterministic); required for gamma/lognormal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_cv: Option<f64>,
    /// Service cv, with the same defaulting rule as `arrival_cv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_cv: Option<f64>,
    /// 0-based indices of the resources this type occupies simultaneously.
    pub resources: Vec<usize>,
}

fn default_holding_cost() -> f64 {
    1.0
}

impl JobType {
    /// Resolved inter-arrival cv (explicit value or the family default).
    pub fn arrival_cv(&self) -> f64 {
        self.arrival_cv.or(self.arrival_dist.forced_cv()).unwrap_or(f64::NAN)
    }

    /// Resolved service cv (explicit value or the family default).
    pub fn service_cv(&self) -> f64 {
        self.service_cv.or(self.service_dist.forced_cv()).unwrap_or(f64::NAN)
    }

    /// Inter-arrival distribution with mean `1/λ_j`.
    pub fn arrival_distribution(&self) -> DistributionSpec {
        DistributionSpec { kind: self.arrival_dist, mean: 1.0 / self.arrival_rate, cv: self.arrival_cv() }
    }

    /// Service-requirement distribution with mean `1/μ_j`.
    pub fn service_distribution(&self) -> DistributionSpec {
        DistributionSpec { kind: self.service_dist, mean: 1.0 / self.service_rate, cv: self.service_cv() }
    }
}

/// A queueing network with simultaneous resource requirements.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub job_types: Vec<JobType>,
    pub num_resources: usize,
    /// Explicit heavy-resource set. When absent, resources with
    /// `ρ_i ≥ heavy_threshold` are heavy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heavy_set: Option<Vec<usize>>,
    /// Load threshold for the derived heavy set (default 0.9).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heavy_threshold: Option<f64>,
}

/// A violated structural invariant of a [`NetworkSpec`].
#[derive(Clone, Debug, PartialEq, Error, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    #[error("network has no job types")]
    NoJobTypes,
    #[error("network has no resources")]
    NoResources,
    #[error("network has {count} resources, more than the supported {MAX_RESOURCES}")]
    TooManyResources { count: usize },
    #[error("network has {count} job types, more than the supported {MAX_JOB_TYPES}")]
    TooManyJobTypes { count: usize },
    #[error("job type {job_type} requires no resources")]
    EmptyResourceSet { job_type: usize },
    #[error("job type {job_type} lists resource {resource} more than once")]
    DuplicateResource { job_type: usize, resource: usize },
    #[error("job type {job_type} references resource {resource}, out of range for {num_resources} resources")]
    ResourceOutOfRange { job_type: usize, resource: usize, num_resources: usize },
    #[error("resource {resource} serves no job type")]
    UnusedResource { resource: usize },
    #[error("resource {inner}'s job types are a subset of resource {outer}'s; merge them into one resource")]
    NestedResourceTypes { inner: usize, outer: usize },
    #[error("job type {job_type}: {field} must be positive and finite, got {value}")]
    NonPositiveRate { job_type: usize, field: &'static str, value: f64 },
    #[error("job type {job_type}: {which} distribution invalid: {message}")]
    BadDistribution { job_type: usize, which: &'static str, message: String },
    #[error("heavy set references resource {resource}, out of range for {num_resources} resources")]
    HeavyOutOfRange { resource: usize, num_resources: usize },
    #[error("heavy set lists resource {resource} more than once")]
    HeavyDuplicate { resource: usize },
    #[error("heavy-resource set is empty; give an explicit heavy_set or lower heavy_threshold")]
    EmptyHeavySet,
    #[error("heavy_threshold must be positive and finite, got {value}")]
    BadHeavyThreshold { value: f64 },
}

/// Structural analysis of a network's collaboration architecture.
#[derive(Clone, Debug, Serialize)]
pub struct ArchitectureReport {
    /// Whether every overlapping pair of resource-requirement sets is nested.
    pub is_hierarchical: bool,
    /// Overlapping, non-nested type pairs witnessing a non-hierarchical
    /// architecture (empty iff `is_hierarchical`).
    pub offending_pairs: Vec<(usize, usize)>,
    /// Whether the job-type overlap graph is connected. A disconnected
    /// network is valid but is really several independent networks.
    pub is_connected: bool,
    /// Collaboration level `|I_j|` of each job type.
    pub levels: Vec<usize>,
    /// Job types grouped by collaboration level.
    pub level_groups: BTreeMap<usize, Vec<usize>>,
    /// Offered load `ρ_i` of each resource.
    pub loads: Vec<f64>,
    /// Resolved heavy-resource set (ascending).
    pub heavy_resources: Vec<usize>,
    /// Complement of the heavy set (ascending).
    pub light_resources: Vec<usize>,
    /// `I_j`: resources required by each job type (ascending).
    pub resources_of_type: Vec<Vec<usize>>,
    /// `J_i`: job types served by each resource (ascending).
    pub types_of_resource: Vec<Vec<usize>>,
    /// Job types that use at least one heavy resource.
    pub heavy_types: Vec<usize>,
    /// Job types that use no heavy resource.
    pub light_types: Vec<usize>,
    /// Job types that use both a heavy and a light resource.
    pub mixed_types: Vec<usize>,
}

impl NetworkSpec {
    /// Parse a network from JSON. Errors keep serde's line/column context.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialization cannot fail")
    }

    pub fn num_types(&self) -> usize {
        self.job_types.len()
    }

    /// Resource set of job type `j` as a bitmask.
    pub fn resource_mask(&self, j: usize) -> u64 {
        self.job_types[j].resources.iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    /// All resource masks, indexed by job type.
    pub fn resource_masks(&self) -> Vec<u64> {
        (0..self.num_types()).map(|j| self.resource_mask(j)).collect()
    }

    /// Offered load `ρ_i = Σ_{j: i ∈ I_j} λ_j / μ_j` per resource.
    pub fn loads(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.num_resources];
        for jt in &self.job_types {
            for &i in &jt.resources {
                if i < self.num_resources {
                    rho[i] += jt.arrival_rate / jt.service_rate;
                }
            }
        }
        rho
    }

    /// Resolved heavy-resource set: the explicit `heavy_set` if present,
    /// otherwise all resources with `ρ_i ≥ heavy_threshold` (default 0.9).
    pub fn heavy_resources(&self) -> Vec<usize> {
        if let Some(set) = &self.heavy_set {
            let mut v: Vec<usize> = set.iter().copied().filter(|&i| i < self.num_resources).collect();
            v.sort_unstable();
            v.dedup();
            return v;
        }
        let threshold = self.heavy_threshold.unwrap_or(DEFAULT_HEAVY_THRESHOLD);
        self.loads()
            .iter()
            .enumerate()
            .filter(|(_, &rho)| rho >= threshold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Heavy set as a bitmask.
    pub fn heavy_mask(&self) -> u64 {
        self.heavy_resources().iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    /// Check every structural invariant; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.job_types.is_empty() {
            v.push(Violation::NoJobTypes);
        }
        if self.num_resources == 0 {
            v.push(Violation::NoResources);
        }
        if self.num_resources > MAX_RESOURCES {
            v.push(Violation::TooManyResources { count: self.num_resources });
            return v; // bitmask representation unusable beyond this point
        }
        if self.job_types.len() > MAX_JOB_TYPES {
            v.push(Violation::TooManyJobTypes { count: self.job_types.len() });
            return v;
        }

        for (j, jt) in self.job_types.iter().enumerate() {
            if jt.resources.is_empty() {
                v.push(Violation::EmptyResourceSet { job_type: j });
            }
            let mut seen = 0u64;
            for &i in &jt.resources {
                if i >= self.num_resources {
                    v.push(Violation::ResourceOutOfRange { job_type: j, resource: i, num_resources: self.num_resources });
                } else if seen & (1u64 << i) != 0 {
                    v.push(Violation::DuplicateResource { job_type: j, resource: i });
                } else {
                    seen |= 1u64 << i;
                }
            }
            // A zero arrival rate is legal (the type simply never arrives);
            // service rate and holding cost must be strictly positive.
            if !(jt.arrival_rate.is_finite() && jt.arrival_rate >= 0.0) {
                v.push(Violation::NonPositiveRate { job_type: j, field: "arrival_rate", value: jt.arrival_rate });
            }
            for (field, value) in [("service_rate", jt.service_rate), ("holding_cost", jt.holding_cost)] {
                if !(value.is_finite() && value > 0.0) {
                    v.push(Violation::NonPositiveRate { job_type: j, field, value });
                }
            }
            if jt.arrival_rate.is_finite() && jt.arrival_rate > 0.0 {
                if let Err(e) = jt.arrival_distribution().check() {
                    v.push(Violation::BadDistribution { job_type: j, which: "arrival", message: e.to_string() });
                }
            }
            if jt.service_rate.is_finite() && jt.service_rate > 0.0 {
                if let Err(e) = jt.service_distribution().check() {
                    v.push(Violation::BadDistribution { job_type: j, which: "service", message: e.to_string() });
                }
            }
        }

        // Per-resource type sets, for usage and nesting checks.
        if self.num_resources > 0 && !self.job_types.is_empty() {
            let mut types_of: Vec<u128> = vec![0; self.num_resources];
            for (j, jt) in self.job_types.iter().enumerate() {
                for &i in &jt.resources {
                    if i < self.num_resources {
                        types_of[i] |= 1u128 << j;
                    }
                }
            }
            for (i, &set) in types_of.iter().enumerate() {
                if set == 0 {
                    v.push(Violation::UnusedResource { resource: i });
                }
            }
            // Two resources with nested (or equal) type sets behave as one
            // resource and must be merged: the inner one adds no constraint.
            for a in 0..self.num_resources {
                for b in 0..self.num_resources {
                    let nested = a != b && types_of[a] != 0 && (types_of[a] & !types_of[b]) == 0;
                    let duplicate_of_equal_pair = types_of[a] == types_of[b] && a > b;
                    if nested && !duplicate_of_equal_pair {
                        v.push(Violation::NestedResourceTypes { inner: a, outer: b });
                    }
                }
            }
        }

        if let Some(set) = &self.heavy_set {
            let mut seen = 0u64;
            for &i in set {
                if i >= self.num_resources {
                    v.push(Violation::HeavyOutOfRange { resource: i, num_resources: self.num_resources });
                } else if seen & (1u64 << i) != 0 {
                    v.push(Violation::HeavyDuplicate { resource: i });
                } else {
                    seen |= 1u64 << i;
                }
            }
        }
        if let Some(t) = self.heavy_threshold {
            if !(t.is_finite() && t > 0.0) {
                v.push(Violation::BadHeavyThreshold { value: t });
            }
        }
        if v.is_empty() && self.heavy_resources().is_empty() {
            v.push(Violation::EmptyHeavySet);
        }
        v
    }

    /// Analyze the collaboration architecture. Call on validated specs;
    /// tolerates (ignores) out-of-range resource references.
    pub fn analyze_architecture(&self) -> ArchitectureReport {
        let n = self.num_types();
        let masks = self.resource_masks();
        let levels: Vec<usize> = masks.iter().map(|m| m.count_ones() as usize).collect();

        let mut offending = Vec::new();
        for j in 0..n {
            for l in (j + 1)..n {
                let inter = masks[j] & masks[l];
                if inter != 0 && inter != masks[j] && inter != masks[l] {
                    offending.push((j, l));
                }
            }
        }

        // Connectivity of the type-overlap graph via union-find on types.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for j in 0..n {
            for l in (j + 1)..n {
                if masks[j] & masks[l] != 0 {
                    let (a, b) = (find(&mut parent, j), find(&mut parent, l));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let is_connected = n <= 1 || {
            let root = find(&mut parent, 0);
            (1..n).all(|j| find(&mut parent, j) == root)
        };

        let mut level_groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (j, &lvl) in levels.iter().enumerate() {
            level_groups.entry(lvl).or_default().push(j);
        }

        let heavy_resources = self.heavy_resources();
        let heavy_mask = heavy_resources.iter().fold(0u64, |m, &i| m | (1u64 << i));
        let light_resources: Vec<usize> =
            (0..self.num_resources).filter(|i| heavy_mask & (1u64 << i) == 0).collect();
        let light_mask = light_resources.iter().fold(0u64, |m, &i| m | (1u64 << i));

        let mut types_of_resource = vec![Vec::new(); self.num_resources];
        for (j, jt) in self.job_types.iter().enumerate() {
            for &i in &jt.resources {
                if i < self.num_resources {
                    types_of_resource[i].push(j);
                }
            }
        }

        let heavy_types: Vec<usize> = (0..n).filter(|&j| masks[j] & heavy_mask != 0).collect();
        let light_types: Vec<usize> = (0..n).filter(|&j| masks[j] & heavy_mask == 0).collect();
        let mixed_types: Vec<usize> =
            (0..n).filter(|&j| masks[j] & heavy_mask != 0 && masks[j] & light_mask != 0).collect();

        ArchitectureReport {
            is_hierarchical: offending.is_empty(),
            offending_pairs: offending,
            is_connected,
            levels,
            level_groups,
            loads: self.loads(),
            heavy_resources,
            light_resources,
            resources_of_type: masks
                .iter()
                .map(|&m| (0..self.num_resources).filter(|&i| m & (1u64 << i) != 0).collect())
                .collect(),
            types_of_resource,
            heavy_types,
            light_types,
            mixed_types,
        }
    }

    /// Companion network that makes unavoidable idleness explicit.
    ///
    /// For each job type `j` (in declared order), a resource `i ∉ I_j` is
    /// *forced idle* by `j` when no job type disjoint from `j` uses `i`: while
    /// `j` is in service, nothing can occupy `i`. Such resources are added to
    /// `j`'s requirement set, except those already claimed by an earlier
    /// type's forced-idle set. On networks without forced idleness the
    /// transform is the identity; it is always idempotent in effect because
    /// claimed resources are never re-distributed.
    pub fn hypothetical_network(&self) -> NetworkSpec {
        let n = self.num_types();
        let masks = self.resource_masks();
        let all_mask: u64 = if self.num_resources >= 64 {
            u64::MAX
        } else {
            (1u64 << self.num_resources) - 1
        };

        let mut out = self.clone();
        let mut claimed = 0u64;
        for j in 0..n {
            // Resources reachable while j is in service: those of any type
            // disjoint from j.
            let mut reachable = 0u64;
            for l in 0..n {
                if masks[j] & masks[l] == 0 {
                    reachable |= masks[l];
                }
            }
            let forced_idle = all_mask & !masks[j] & !reachable;
            let add = forced_idle & !claimed;
            claimed |= forced_idle;
            if add != 0 {
                let mut resources = out.job_types[j].resources.clone();
                for i in 0..self.num_resources {
                    if add & (1u64 << i) != 0 {
                        resources.push(i);
                    }
                }
                resources.sort_unstable();
                out.job_types[j].resources = resources;
            }
        }
        out
    }

    /// Collapse resources with identical member type sets into one
    /// representative (the lowest index), renumbering the survivors densely
    /// in their original order.
    ///
    /// Resources serving exactly the same types are always occupied and
    /// idle together, so the group behaves as a single resource; this is
    /// the merge that [`Violation::NestedResourceTypes`] asks for when the
    /// sets are equal. Companion networks built by
    /// [`NetworkSpec::hypothetical_network`] routinely widen several
    /// requirement sets to the same resource set, and this canonical form
    /// is what simulation and decision logic should run on.
    pub fn merge_duplicate_resources(&self) -> NetworkSpec {
        let mut members = vec![0u128; self.num_resources];
        for (j, t) in self.job_types.iter().enumerate() {
            for &r in &t.resources {
                if r < self.num_resources {
                    members[r] |= 1u128 << j;
                }
            }
        }
        let mut map = vec![0usize; self.num_resources];
        let mut survivors = 0usize;
        for r in 0..self.num_resources {
            match (0..r).find(|&s| members[s] == members[r]) {
                Some(s) => map[r] = map[s],
                None => {
                    map[r] = survivors;
                    survivors += 1;
                }
            }
        }
        let remap = |rs: &[usize]| -> Vec<usize> {
            let mut out: Vec<usize> =
                rs.iter().filter(|&&r| r < self.num_resources).map(|&r| map[r]).collect();
            out.sort_unstable();
            out.dedup();
            out
        };
        let job_types = self
            .job_types
            .iter()
            .map(|t| JobType { resources: remap(&t.resources), ..t.clone() })
            .collect();
        let heavy_set = self.heavy_set.as_ref().map(|hs| remap(hs));
        NetworkSpec {
            job_types,
            num_resources: survivors,
            heavy_set,
            heavy_threshold: self.heavy_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn resource_mask_and_loads_are_consistent() {
        let spec = crate::topologies::pair_collab(0.5, 2.0, [1.0, 1.0, 1.0]);
        assert_eq!(spec.resource_mask(0), 0b11);
        assert_eq!(spec.resource_mask(1), 0b01);
        assert_eq!(spec.resource_mask(2), 0b10);
        let rho = spec.loads();
        assert_eq!(rho, vec![0.5, 0.5]);
    }

    /// Widening the conflict network puts every type on all three
    /// resources; merging then collapses them to one station. A network
    /// without duplicates passes through unchanged.
    #[test]
    fn duplicate_resources_merge_into_one_station() {
        let widened = crate::topologies::forced_idle_square(0.2, 1.0).hypothetical_network();
        let merged = widened.merge_duplicate_resources();
        assert_eq!(merged.num_resources, 1);
        assert_eq!(merged.heavy_set, Some(vec![0]));
        for t in &merged.job_types {
            assert_eq!(t.resources, vec![0]);
        }
        assert!(merged.validate().is_empty());

        let pair = crate::topologies::pair_collab(0.5, 2.0, [1.0, 1.0, 1.0]);
        let same = pair.merge_duplicate_resources();
        assert_eq!(same.num_resources, 2);
        assert_eq!(same.resource_masks(), pair.resource_masks());
    }
}
