//! Discrete-event simulation and scheduling policies for multi-class queueing
//! networks in which a job may need several resources *simultaneously*
//! (resource collaboration) and a resource may be shared across several job
//! types (multitasking).
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`network`] — describe a network (job types, resource requirements,
//!    rates, holding costs), validate it, and analyze its collaboration
//!    architecture. Networks whose overlapping resource requirements are
//!    always nested ("hierarchical" architecture) admit much stronger
//!    scheduling guarantees; non-hierarchical networks can be transformed
//!    into hierarchical companions via [`network::NetworkSpec::hypothetical_network`].
//! 2. [`solver`] — the workload-split problem: given the total backlog
//!    (workload) observed by each bottleneck resource, compute the cheapest
//!    queue-length vector consistent with those workloads (an LP) and select
//!    the minimum-norm point of the optimal set (a QP) so the target depends
//!    continuously on the workload.
//! 3. [`policies`] — scheduling policies built on top of the split: the
//!    review-period policy that steers queues toward the split targets, plus
//!    a family of priority / max-pressure / threshold baselines and their
//!    non-preemptive variants.
//! 4. [`sim`] — a preempt-resume discrete-event engine with deterministic,
//!    stream-based randomness (common random numbers across coupled runs),
//!    metric collection, and an instability detector.
//! 5. [`diffusion`] — the heavy-traffic reflected-Brownian-motion companion
//!    of a network and the Monte Carlo lower bound on achievable discounted
//!    holding cost that it implies.
//!
//! Replication fan-out, parameter sweeps, and Monte Carlo loops run in
//! parallel via `rayon` when the `parallel` feature (default) is enabled and
//! fall back to equivalent sequential loops when it is disabled. Results are
//! deterministic either way: every unit of work derives its own named RNG
//! stream, so the schedule of threads never influences a number.

pub mod diffusion;
pub mod dist;
pub mod forest;
pub mod network;
pub mod parallel;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod stats;
pub mod topologies;

pub use network::{ArchitectureReport, NetworkSpec, Violation};
pub use policies::{build_policy, Policy};
pub use sim::{run, run_coupled, RunConfig, RunMetrics};
pub use solver::{SolveStatus, SplitProblem, SplitSolution};



