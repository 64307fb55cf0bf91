//! Small reference topologies used in tests, benchmarks, and examples.
//!
//! All constructors produce exponential arrival and service distributions
//! unless stated otherwise, and leave `heavy_set` explicit so experiments are
//! not at the mercy of the load-threshold classification.

use crate::network::{JobType, NetworkSpec};

fn job(arrival_rate: f64, service_rate: f64, holding_cost: f64, resources: &[usize]) -> JobType {
    JobType {
        arrival_rate,
        service_rate,
        holding_cost,
        arrival_dist: Default::default(),
        service_dist: Default::default(),
        arrival_cv: None,
        service_cv: None,
        resources: resources.to_vec(),
    }
}

/// Two resources; type 0 needs both simultaneously, types 1 and 2 are served
/// individually by resource 0 and 1 respectively. The smallest network in
/// which collaboration and multitasking interact, and hierarchical.
///
/// All types share arrival rate `lambda` and service rate `mu`; holding
/// costs are given per type. Both resources are declared heavy.
pub fn pair_collab(lambda: f64, mu: f64, h: [f64; 3]) -> NetworkSpec {
    NetworkSpec {
        job_types: vec![
            job(lambda, mu, h[0], &[0, 1]),
            job(lambda, mu, h[1], &[0]),
            job(lambda, mu, h[2], &[1]),
        ],
        num_resources: 2,
        heavy_set: Some(vec![0, 1]),
        heavy_threshold: None,
    }
}

/// Three resources and the three pairwise collaborations {0,1}, {0,2}, {1,2}.
/// Overlapping but never nested, hence not hierarchical; serving any type
/// forces the third resource to idle, so the companion network produced by
/// [`NetworkSpec::hypothetical_network`] requires all three resources for
/// every type (a single multi-class station).
pub fn triangle_collab(lambda: f64, mu: f64, h: [f64; 3]) -> NetworkSpec {
    NetworkSpec {
        job_types: vec![
            job(lambda, mu, h[0], &[0, 1]),
            job(lambda, mu, h[1], &[0, 2]),
            job(lambda, mu, h[2], &[1, 2]),
        ],
        num_resources: 3,
        heavy_set: Some(vec![0, 1, 2]),
        heavy_threshold: None,
    }
}

/// Four types on three resources: one full collaboration {0,1,2} plus the
/// overlapping pairs {0,1}, {1,2} and {0,2}. Not hierarchical. While the
/// pair type {0,1} is in service, resource 2 cannot be used by anyone (every
/// other type intersects {0,1}), so the companion construction adds it —
/// and symmetrically for the other pairs — making the companion hierarchical.
pub fn forced_idle_square(lambda: f64, mu: f64) -> NetworkSpec {
    NetworkSpec {
        job_types: vec![
            job(lambda, mu, 1.0, &[0, 1, 2]),
            job(lambda, mu, 1.0, &[0, 1]),
            job(lambda, mu, 1.0, &[1, 2]),
            job(lambda, mu, 1.0, &[0, 2]),
        ],
        num_resources: 3,
        heavy_set: Some(vec![0, 1, 2]),
        heavy_threshold: None,
    }
}

/// All six two-resource collaborations on four resources. Every type has a
/// disjoint complementary type, so no resource is ever *forced* to idle and
/// the companion construction is the identity — yet the network still loses
/// capacity in states where the present types pairwise conflict.
pub fn all_pairs_four(lambda: f64, mu: f64) -> NetworkSpec {
    let pairs: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    NetworkSpec {
        job_types: pairs.iter().map(|p| job(lambda, mu, 1.0, p)).collect(),
        num_resources: 4,
        heavy_set: Some(vec![0, 1, 2, 3]),
        heavy_threshold: None,
    }
}

/// One job type served by one resource: the classic single-server queue.
pub fn single_queue(lambda: f64, mu: f64) -> NetworkSpec {
    NetworkSpec {
        job_types: vec![job(lambda, mu, 1.0, &[0])],
        num_resources: 1,
        heavy_set: Some(vec![0]),
        heavy_threshold: None,
    }
}

/// One resource shared by `n` individually served job types with the given
/// rates and costs. The cost-optimal split sends all workload to the type
/// with the smallest `h·μ` product.
pub fn shared_single_resource(rates: &[(f64, f64, f64)]) -> NetworkSpec {
    NetworkSpec {
        job_types: rates.iter().map(|&(l, m, h)| job(l, m, h, &[0])).collect(),
        num_resources: 1,
        heavy_set: Some(vec![0]),
        heavy_threshold: None,
    }
}

/// Three-level nested hierarchy on three resources:
/// type 0 = {0,1,2}, type 1 = {0,1}, types 2..=4 = {0}, {1}, {2}.
/// Exercises depth-3 laminar structure beyond the two-level pair network.
pub fn three_level_nest(lambda: f64, mu: f64) -> NetworkSpec {
    NetworkSpec {
        job_types: vec![
            job(lambda, mu, 1.0, &[0, 1, 2]),
            job(lambda, mu, 1.0, &[0, 1]),
            job(lambda, mu, 1.0, &[0]),
            job(lambda, mu, 1.0, &[1]),
            job(lambda, mu, 1.0, &[2]),
        ],
        num_resources: 3,
        heavy_set: Some(vec![0, 1, 2]),
        heavy_threshold: None,
    }
}

/// Replace every type's arrival rate with a common value, the way load
/// sweeps drive a family of experiments.
pub fn with_common_arrival_rate(spec: &NetworkSpec, lambda: f64) -> NetworkSpec {
    let mut out = spec.clone();
    for jt in &mut out.job_types {
        jt.arrival_rate = lambda;
    }
    out
}

/// Options for [`random_hierarchical`].
#[derive(Clone, Copy, Debug)]
pub struct RandomNetworkOptions {
    /// Resources are drawn uniformly from `2..=max_resources`.
    pub max_resources: usize,
    /// Probability that an internal node of the laminar tree carries a job
    /// type spanning its whole resource block.
    pub internal_type_prob: f64,
    /// Probability that a singleton resource carries a second individually
    /// served job type.
    pub extra_leaf_type_prob: f64,
    /// When true, every resource is heavy; otherwise a random nonempty
    /// subset is.
    pub all_heavy: bool,
}

impl Default for RandomNetworkOptions {
    fn default() -> Self {
        RandomNetworkOptions {
            max_resources: 5,
            internal_type_prob: 0.7,
            extra_leaf_type_prob: 0.25,
            all_heavy: true,
        }
    }
}

/// Generate a random *hierarchical* network: resource requirements form a
/// laminar family built by recursively partitioning the resource set, every
/// resource keeps at least one individually served job type (which is what
/// makes the result pass validation: no two resources ever serve nested type
/// sets), and
/// rates/costs are drawn from moderate ranges.
pub fn random_hierarchical(seed: u64, opts: RandomNetworkOptions) -> NetworkSpec {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, &[0x6e65_74]);

    let num_resources = rng.gen_range(2..=opts.max_resources.max(2));
    let mut blocks: Vec<Vec<usize>> = vec![(0..num_resources).collect()];
    let mut type_sets: Vec<Vec<usize>> = Vec::new();
    while let Some(block) = blocks.pop() {
        if block.len() == 1 {
            type_sets.push(block.clone());
            if rng.gen_bool(opts.extra_leaf_type_prob) {
                type_sets.push(block);
            }
            continue;
        }
        if rng.gen_bool(opts.internal_type_prob) {
            type_sets.push(block.clone());
        }
        // Split the block into two nonempty sub-blocks at a random cut of a
        // random shuffle, preserving laminarity by construction.
        let mut shuffled = block;
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        let cut = rng.gen_range(1..shuffled.len());
        let (left, right) = shuffled.split_at(cut);
        blocks.push(left.to_vec());
        blocks.push(right.to_vec());
    }

    let job_types = type_sets
        .iter()
        .map(|set| {
            let mut resources = set.clone();
            resources.sort_unstable();
            JobType {
                arrival_rate: rng.gen_range(0.2..1.0),
                service_rate: rng.gen_range(0.8..3.0),
                holding_cost: rng.gen_range(0.5..3.0),
                arrival_dist: Default::default(),
                service_dist: Default::default(),
                arrival_cv: None,
                service_cv: None,
                resources,
            }
        })
        .collect();

    let heavy_set = if opts.all_heavy {
        (0..num_resources).collect()
    } else {
        let mut set: Vec<usize> = (0..num_resources).filter(|_| rng.gen_bool(0.5)).collect();
        if set.is_empty() {
            set.push(rng.gen_range(0..num_resources));
        }
        set
    };

    let spec = NetworkSpec {
        job_types,
        num_resources,
        heavy_set: Some(heavy_set),
        heavy_threshold: None,
    };
    debug_assert!(spec.validate().is_empty(), "generator produced invalid spec: {:?}", spec.validate());
    spec
}
