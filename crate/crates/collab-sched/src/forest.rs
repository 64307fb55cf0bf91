//! Laminar class forest and the allocation rules that run on it.
//!
//! Job types whose resource requirements form a laminar family (any two
//! requirement sets are disjoint or nested) group into *classes* by exact
//! requirement set; the strict-superset relation makes the classes a forest.
//! Serving one job of a class occupies the class's whole resource set, so a
//! feasible allocation picks classes that are pairwise resource-disjoint,
//! which in forest terms means: along any root-to-leaf path at most one
//! class is chosen.
//!
//! The allocators here maximize, over feasible allocations, a two-part
//! lexicographic value: a mode-specific priority first (credited
//! heavy-resource counts, or queue-pressure weights), then the number of
//! busy resources. Modes that enforce work conservation additionally refuse
//! to leave a constrained resource idle when any type that could occupy it
//! has jobs. Because subtrees occupy disjoint resources, the optimum
//! decomposes child-by-child and is found by one post-order pass.

use thiserror::Error;

/// Errors raised while building a forest from requirement masks.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    /// Two requirement sets overlap without one containing the other.
    #[error("requirement sets {first:#b} and {second:#b} overlap without nesting")]
    NotLaminar { first: u64, second: u64 },
    /// A resource belongs to no requirement set.
    #[error("resource {resource} belongs to no job type")]
    UncoveredResource { resource: usize },
    /// A job type has an empty requirement set.
    #[error("job type {type_index} has an empty requirement set")]
    EmptyTypeMask { type_index: usize },
    /// No job types at all.
    #[error("cannot build a forest from zero job types")]
    NoTypes,
}

/// A class: all job types sharing one exact requirement set.
#[derive(Clone, Debug)]
pub struct Class {
    /// Resource set shared by every member type.
    pub mask: u64,
    /// Member job types, ascending.
    pub types: Vec<usize>,
    /// Index of the smallest class strictly containing this one.
    pub parent: Option<usize>,
    /// Child classes, ascending by class index.
    pub children: Vec<usize>,
    /// Resources whose *smallest* containing class is this one.
    minimal_resources: u64,
}

/// A chosen set of job types, pairwise resource-disjoint.
#[derive(Clone, Debug, Default)]
pub struct Allocation {
    /// Served types, ascending. One job of each is in service.
    pub serve: Vec<usize>,
    /// Bitmask over job types of `serve`.
    pub types_mask: u128,
    /// Resources occupied by `serve` (not counting externally pinned work).
    pub busy_mask: u64,
}

/// The class forest for one incidence structure.
#[derive(Clone, Debug)]
pub struct Forest {
    classes: Vec<Class>,
    roots: Vec<usize>,
    class_of_type: Vec<usize>,
    minimal_class_of_resource: Vec<usize>,
    num_resources: usize,
}

impl Forest {
    /// Build the forest for per-type requirement masks over
    /// `num_resources` resources.
    pub fn build(masks: &[u64], num_resources: usize) -> Result<Forest, ForestError> {
        if masks.is_empty() {
            return Err(ForestError::NoTypes);
        }
        for (j, &m) in masks.iter().enumerate() {
            if m == 0 {
                return Err(ForestError::EmptyTypeMask { type_index: j });
            }
        }
        for (a, &ma) in masks.iter().enumerate() {
            for &mb in &masks[a + 1..] {
                let inter = ma & mb;
                if inter != 0 && inter != ma && inter != mb {
                    return Err(ForestError::NotLaminar { first: ma, second: mb });
                }
            }
        }

        // Classes in order of first appearance.
        let mut classes: Vec<Class> = Vec::new();
        let mut class_of_type = Vec::with_capacity(masks.len());
        for (j, &m) in masks.iter().enumerate() {
            let idx = match classes.iter().position(|c| c.mask == m) {
                Some(i) => i,
                None => {
                    classes.push(Class {
                        mask: m,
                        types: Vec::new(),
                        parent: None,
                        children: Vec::new(),
                        minimal_resources: 0,
                    });
                    classes.len() - 1
                }
            };
            classes[idx].types.push(j);
            class_of_type.push(idx);
        }

        // Parents: the strict supersets of a class form a chain, so the one
        // with the fewest resources is the parent.
        for v in 0..classes.len() {
            let mut parent: Option<usize> = None;
            for u in 0..classes.len() {
                if u != v
                    && classes[v].mask & !classes[u].mask == 0
                    && classes[v].mask != classes[u].mask
                {
                    let better = match parent {
                        None => true,
                        Some(p) => classes[u].mask.count_ones() < classes[p].mask.count_ones(),
                    };
                    if better {
                        parent = Some(u);
                    }
                }
            }
            classes[v].parent = parent;
            if let Some(p) = parent {
                classes[p].children.push(v);
            }
        }
        for c in classes.iter_mut() {
            c.children.sort_unstable();
        }
        let roots: Vec<usize> = (0..classes.len())
            .filter(|&v| classes[v].parent.is_none())
            .collect();

        // Smallest containing class per resource.
        let mut minimal_class_of_resource = Vec::with_capacity(num_resources);
        for r in 0..num_resources {
            let mut min: Option<usize> = None;
            for (v, c) in classes.iter().enumerate() {
                if c.mask >> r & 1 == 1 {
                    let better = match min {
                        None => true,
                        Some(m) => c.mask.count_ones() < classes[m].mask.count_ones(),
                    };
                    if better {
                        min = Some(v);
                    }
                }
            }
            match min {
                Some(v) => minimal_class_of_resource.push(v),
                None => return Err(ForestError::UncoveredResource { resource: r }),
            }
        }
        for (r, &v) in minimal_class_of_resource.iter().enumerate() {
            classes[v].minimal_resources |= 1u64 << r;
        }

        Ok(Forest {
            classes,
            roots,
            class_of_type,
            minimal_class_of_resource,
            num_resources,
        })
    }

    pub fn classes(&self) -> &[Class] {
        &self.classes
    }

    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    /// Index of the class with exactly this requirement mask.
    pub fn class_of_mask(&self, mask: u64) -> Option<usize> {
        self.classes.iter().position(|c| c.mask == mask)
    }

    /// Class a job type belongs to.
    pub fn class_of_type(&self, type_index: usize) -> usize {
        self.class_of_type[type_index]
    }

    /// Smallest class containing a resource.
    pub fn minimal_class(&self, resource: usize) -> usize {
        self.minimal_class_of_resource[resource]
    }

    /// Allocation maximizing (credited heavy resources, busy resources)
    /// lexicographically, subject to work conservation on `heavy_mask`:
    /// a heavy resource may idle only when no type that could occupy it has
    /// jobs. A served type earns credit for its heavy resources exactly
    /// when it is flagged in `over_target`; within a class, the served
    /// member is the lowest-indexed flagged type, or the lowest-indexed
    /// nonempty type when none is flagged.
    ///
    /// `pinned` marks types whose running jobs already occupy their
    /// resources; classes touching those resources are unavailable and the
    /// result covers only the remaining structure (pinned types are not
    /// repeated in it).
    pub fn allocate_targeted(
        &self,
        queues: &[u64],
        pinned: u128,
        over_target: u128,
        heavy_mask: u64,
    ) -> Allocation {
        self.allocate(queues, pinned, &Mode::Targeted { over_target, heavy_mask })
    }

    /// Allocation maximizing (total weight of served types, busy
    /// resources) lexicographically, with no work-conservation side
    /// constraint. Within a class the heaviest member is served, lowest
    /// index on ties.
    pub fn allocate_pressure(&self, queues: &[u64], pinned: u128, weights: &[f64]) -> Allocation {
        self.allocate(queues, pinned, &Mode::Pressure { weights })
    }

    fn allocate(&self, queues: &[u64], pinned: u128, mode: &Mode) -> Allocation {
        let busy0 = self.pinned_busy(pinned);
        let mut total = Candidate::default();
        for &root in &self.roots {
            total.merge(self.node_best(root, 0, busy0, queues, mode));
        }
        self.finish(total)
    }

    fn pinned_busy(&self, pinned: u128) -> u64 {
        let mut busy = 0u64;
        if pinned != 0 {
            for (j, &v) in self.class_of_type.iter().enumerate() {
                if pinned >> j & 1 == 1 {
                    busy |= self.classes[v].mask;
                }
            }
        }
        busy
    }

    fn own_jobs(&self, v: usize, queues: &[u64]) -> u64 {
        self.classes[v].types.iter().map(|&j| queues[j]).sum()
    }

    /// Best candidate for the subtree rooted at `v`, assuming no ancestor
    /// class is served and ancestors hold `path_jobs` jobs in total.
    ///
    /// Passing over a class whose private resources are constrained while
    /// work for them exists counts as a coverage violation; violations are
    /// the leading (negated) lexicographic term, so the result coincides
    /// with a hard work-conservation constraint whenever any conserving
    /// allocation exists, and degrades gracefully when pinned work makes
    /// conservation impossible.
    fn node_best(&self, v: usize, path_jobs: u64, busy0: u64, queues: &[u64], mode: &Mode) -> Candidate {
        let class = &self.classes[v];
        let here_jobs = self.own_jobs(v, queues);

        let choose = if class.mask & busy0 == 0 {
            self.pick_member(class, queues, mode).map(|(member, p1)| Candidate {
                violations: 0,
                p1,
                p2: class.mask.count_ones(),
                serve: vec![member],
            })
        } else {
            None
        };

        let demand = match mode {
            Mode::Targeted { heavy_mask, .. } => {
                class.minimal_resources & heavy_mask & !busy0 != 0 && path_jobs + here_jobs > 0
            }
            Mode::Pressure { .. } => false,
        };
        let mut skip = Candidate { violations: demand as u32, ..Candidate::default() };
        for &c in &class.children {
            skip.merge(self.node_best(c, path_jobs + here_jobs, busy0, queues, mode));
        }

        match choose {
            Some(c) if !skip.beats(&c) => c,
            _ => skip,
        }
    }

    /// Member to serve in a chosen class and the priority it earns, or
    /// `None` when every member queue is empty.
    fn pick_member(&self, class: &Class, queues: &[u64], mode: &Mode) -> Option<(usize, f64)> {
        match *mode {
            Mode::Targeted { over_target, heavy_mask } => {
                let flagged = class
                    .types
                    .iter()
                    .copied()
                    .find(|&j| queues[j] > 0 && over_target >> j & 1 == 1);
                match flagged {
                    Some(j) => Some((j, (class.mask & heavy_mask).count_ones() as f64)),
                    None => class
                        .types
                        .iter()
                        .copied()
                        .find(|&j| queues[j] > 0)
                        .map(|j| (j, 0.0)),
                }
            }
            Mode::Pressure { weights } => {
                let mut best: Option<(usize, f64)> = None;
                for &j in &class.types {
                    if queues[j] > 0 && best.map_or(true, |(_, w)| weights[j] > w) {
                        best = Some((j, weights[j]));
                    }
                }
                best
            }
        }
    }

    /// Sample uniformly-at-random among admissible branch choices while
    /// preserving work conservation on `heavy_mask`: at each class that can
    /// either be served or passed over, flip a fair coin; a served class
    /// picks a uniformly random nonempty member.
    pub fn allocate_random_conserving<R: rand::Rng>(
        &self,
        queues: &[u64],
        pinned: u128,
        heavy_mask: u64,
        rng: &mut R,
    ) -> Allocation {
        let busy0 = self.pinned_busy(pinned);
        // Bottom-up feasibility flags.
        let mut skip_ok = vec![false; self.classes.len()];
        let mut feasible = vec![false; self.classes.len()];
        let mut order: Vec<(usize, u64)> = Vec::with_capacity(self.classes.len());
        let mut stack: Vec<(usize, u64)> = self.roots.iter().map(|&r| (r, 0)).collect();
        while let Some((v, path_jobs)) = stack.pop() {
            order.push((v, path_jobs));
            let below = path_jobs + self.own_jobs(v, queues);
            for &c in &self.classes[v].children {
                stack.push((c, below));
            }
        }
        for &(v, path_jobs) in order.iter().rev() {
            let class = &self.classes[v];
            let here = self.own_jobs(v, queues);
            let choose_ok = class.mask & busy0 == 0 && here > 0;
            let demand =
                class.minimal_resources & heavy_mask & !busy0 != 0 && path_jobs + here > 0;
            skip_ok[v] = !demand && class.children.iter().all(|&c| feasible[c]);
            feasible[v] = choose_ok || skip_ok[v];
        }

        let mut total = Candidate::default();
        let mut walk: Vec<usize> = self.roots.clone();
        while let Some(v) = walk.pop() {
            let class = &self.classes[v];
            let choose_ok = class.mask & busy0 == 0 && self.own_jobs(v, queues) > 0;
            // Without pinned work both options can never be closed at once;
            // with it, fall through to the children rather than fail.
            let serve_here = choose_ok && (!skip_ok[v] || rng.gen_bool(0.5));
            if serve_here {
                let nonempty: Vec<usize> = class
                    .types
                    .iter()
                    .copied()
                    .filter(|&j| queues[j] > 0)
                    .collect();
                let j = nonempty[rng.gen_range(0..nonempty.len())];
                total.merge(Candidate { serve: vec![j], ..Candidate::default() });
            } else {
                walk.extend(class.children.iter().copied());
            }
        }
        self.finish(total)
    }

    fn finish(&self, mut total: Candidate) -> Allocation {
        total.serve.sort_unstable();
        let mut types_mask = 0u128;
        let mut busy_mask = 0u64;
        for &j in &total.serve {
            types_mask |= 1u128 << j;
            busy_mask |= self.classes[self.class_of_type[j]].mask;
        }
        Allocation { serve: total.serve, types_mask, busy_mask }
    }
}

/// Allocation mode: what the first lexicographic component rewards.
enum Mode<'a> {
    Targeted { over_target: u128, heavy_mask: u64 },
    Pressure { weights: &'a [f64] },
}

/// Partial allocation with its lexicographic value: fewest coverage
/// violations, then highest priority, then most busy resources.
#[derive(Clone, Debug, Default)]
struct Candidate {
    violations: u32,
    p1: f64,
    p2: u32,
    serve: Vec<usize>,
}

impl Candidate {
    fn merge(&mut self, other: Candidate) {
        self.violations += other.violations;
        self.p1 += other.p1;
        self.p2 += other.p2;
        self.serve.extend(other.serve);
    }

    /// Strictly better lexicographic value; equality is not "beats", which
    /// lets the caller prefer serving the upper class on ties.
    fn beats(&self, other: &Candidate) -> bool {
        if self.violations != other.violations {
            return self.violations < other.violations;
        }
        self.p1 > other.p1 || (self.p1 == other.p1 && self.p2 > other.p2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_resources_land_on_smallest_classes() {
        let f = Forest::build(&[0b111, 0b011, 0b001], 3).unwrap();
        let bottom = f.class_of_mask(0b001).unwrap();
        let middle = f.class_of_mask(0b011).unwrap();
        let top = f.class_of_mask(0b111).unwrap();
        assert_eq!(f.minimal_class(0), bottom);
        assert_eq!(f.minimal_class(1), middle);
        assert_eq!(f.minimal_class(2), top);
        assert_eq!(f.classes()[bottom].parent, Some(middle));
        assert_eq!(f.classes()[middle].parent, Some(top));
    }
}
