//! Workload-split optimization: distribute per-resource workloads across job
//! types at minimum holding cost, with a minimum-norm tie-break.
//!
//! The primal problem is a small dense linear program
//!
//! ```text
//! minimize    sum_j h_j q_j
//! subject to  sum_j d_rj q_j = w_r   for every constrained resource r
//!             q_j >= 0
//! ```
//!
//! where `d_rj` is the reciprocal service rate of type `j` when it occupies
//! resource `r` (and zero otherwise). Because optimal solutions are often
//! non-unique (ties between cost rates create optimal faces), a second stage
//! picks the minimum-Euclidean-norm point of the optimal face, which makes
//! the split a continuous, deterministic function of the workload vector.
//!
//! The linear program is solved by a two-phase dense-tableau simplex with an
//! index-ordered anti-cycling rule; the tie-break stage is a primal
//! active-set method whose equality subproblems are solved in minimum-norm
//! form via modified Gram-Schmidt on the active constraint rows. Both stages
//! are deterministic, iteration-capped, and allocation-light: problems here
//! have at most a few dozen rows and columns.

use serde::Serialize;
use thiserror::Error;

use crate::network::NetworkSpec;

/// Absolute slack granted when the tie-break stage re-imposes the optimal
/// cost as an inequality, and the threshold under which a coordinate counts
/// as zero when seeding the active set.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Hard cap on simplex pivots and active-set iterations; exceeding it yields
/// [`SolveStatus::NumericalFailure`] instead of looping.
pub const MAX_ITERATIONS: usize = 10_000;

/// Relative tolerance for detecting inconsistent duplicate constraint rows
/// and for the phase-one residual test.
const ROW_CONSISTENCY_TOL: f64 = 1e-7;

/// Reduced-cost / pivot-entry threshold inside the simplex.
const PIVOT_TOL: f64 = 1e-9;

/// Errors raised while constructing a problem (solving never errors; it
/// reports through [`SolveStatus`]).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverError {
    /// The problem has no rows or no columns.
    #[error("problem must have at least one row and one column")]
    EmptyProblem,
    /// A constraint row's length differs from the cost vector's.
    #[error("row {row} has {got} coefficients, expected {expected}")]
    DimensionMismatch { row: usize, got: usize, expected: usize },
    /// A coefficient or cost is NaN or infinite.
    #[error("coefficients and costs must be finite")]
    NonFiniteData,
    /// The network has no constrained (heavy) resources.
    #[error("network has no heavy resources")]
    NoHeavyResources,
    /// No job type is confined to the heavy resources, so there is nothing
    /// to split over.
    #[error("network has no job types confined to heavy resources")]
    NoHeavyTypes,
}

/// Outcome classification shared by both solver stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// An optimal point was found.
    Optimal,
    /// The equality constraints admit no nonnegative solution.
    Infeasible,
    /// The objective is unbounded below (possible only with negative costs).
    Unbounded,
    /// An iteration cap or numerical consistency check tripped.
    NumericalFailure,
}

/// Anti-cycling pivot preference. Both orders are cycling-safe; running the
/// solver under each and comparing results is a cheap uniqueness probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotPreference {
    /// Among eligible columns/rows, prefer the lowest index (the default).
    LowestIndex,
    /// Among eligible columns/rows, prefer the highest index.
    HighestIndex,
}

/// A workload-split problem: cost vector, constraint matrix, and the
/// bookkeeping that maps columns back to job types and rows back to
/// resources.
#[derive(Clone, Debug)]
pub struct SplitProblem {
    rows: Vec<Vec<f64>>,
    h: Vec<f64>,
    col_types: Vec<usize>,
    row_resources: Vec<usize>,
}

/// Result of the cost-minimization stage.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: SolveStatus,
    /// Minimal total holding cost (0 unless `status` is `Optimal`).
    pub objective: f64,
    /// Optimal vertex, indexed like the problem columns.
    pub q: Vec<f64>,
    /// Simplex pivots performed.
    pub iterations: usize,
}

/// Result of the minimum-norm tie-break stage.
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub status: SolveStatus,
    /// Minimum-norm point of the optimal face, indexed like the columns.
    pub q: Vec<f64>,
    /// Active-set iterations performed.
    pub iterations: usize,
}

/// Combined result of both stages: the point policies actually consume.
#[derive(Clone, Debug, Serialize)]
pub struct SplitSolution {
    pub status: SolveStatus,
    /// Minimal total holding cost.
    pub objective: f64,
    /// Tie-broken optimal split, indexed like the problem columns; use
    /// [`SplitProblem::col_types`] or [`SplitSolution::q_by_type`] to map
    /// components back to job types.
    pub q: Vec<f64>,
    /// Job type owning each component of `q`.
    pub col_types: Vec<usize>,
    /// Resource owning each constraint row.
    pub row_resources: Vec<usize>,
    pub lp_iterations: usize,
    pub qp_iterations: usize,
}

impl SplitSolution {
    /// Scatter the split into a dense per-type vector of length `num_types`,
    /// zero for types that are not columns of the problem.
    pub fn q_by_type(&self, num_types: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_types];
        for (k, &t) in self.col_types.iter().enumerate() {
            out[t] = self.q[k];
        }
        out
    }
}

impl SplitProblem {
    /// Build a problem from explicit constraint rows and costs. Columns are
    /// reported as types `0..n` and rows as resources `0..m`.
    pub fn new(rows: Vec<Vec<f64>>, h: Vec<f64>) -> Result<Self, SolverError> {
        if rows.is_empty() || h.is_empty() {
            return Err(SolverError::EmptyProblem);
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != h.len() {
                return Err(SolverError::DimensionMismatch {
                    row: r,
                    got: row.len(),
                    expected: h.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::NonFiniteData);
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteData);
        }
        let n = h.len();
        let m = rows.len();
        Ok(SplitProblem {
            rows,
            h,
            col_types: (0..n).collect(),
            row_resources: (0..m).collect(),
        })
    }

    /// Build the problem a review policy solves: one row per heavy resource
    /// (ascending index), one column per job type confined to heavy
    /// resources (ascending index), coefficient `1/mu_j` where type `j`
    /// occupies resource `r`.
    ///
    /// This reads only the incidence structure, rates, and heavy set, so it
    /// also accepts degenerate specs (for example single-station collapses
    /// produced by hypothetical constructions) that the full validator
    /// rejects for simulation use.
    pub fn from_network(spec: &NetworkSpec) -> Result<Self, SolverError> {
        let heavy = spec.heavy_resources();
        if heavy.is_empty() {
            return Err(SolverError::NoHeavyResources);
        }
        let heavy_mask = spec.heavy_mask();
        let cols: Vec<usize> = (0..spec.num_types())
            .filter(|&j| {
                let m = spec.resource_mask(j);
                m != 0 && m & !heavy_mask == 0
            })
            .collect();
        if cols.is_empty() {
            return Err(SolverError::NoHeavyTypes);
        }
        let rows = heavy
            .iter()
            .map(|&r| {
                cols.iter()
                    .map(|&j| {
                        if spec.resource_mask(j) & (1u64 << r) != 0 {
                            1.0 / spec.job_types[j].service_rate
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let h = cols.iter().map(|&j| spec.job_types[j].holding_cost).collect();
        Ok(SplitProblem {
            rows,
            h,
            col_types: cols,
            row_resources: heavy,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.h.len()
    }

    /// Job type owning each column, ascending.
    pub fn col_types(&self) -> &[usize] {
        &self.col_types
    }

    /// Resource owning each row, ascending.
    pub fn row_resources(&self) -> &[usize] {
        &self.row_resources
    }

    /// Per-column holding cost rates.
    pub fn holding_costs(&self) -> &[f64] {
        &self.h
    }

    /// Constraint coefficient at `(row, col)`.
    pub fn coefficient(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    /// Minimize total holding cost subject to the workload constraints,
    /// with the default pivot preference. `w` is indexed like the rows.
    pub fn solve_lp(&self, w: &[f64]) -> LpSolution {
        self.solve_lp_with(w, PivotPreference::LowestIndex)
    }

    /// As [`solve_lp`](Self::solve_lp) with an explicit pivot preference.
    pub fn solve_lp_with(&self, w: &[f64], pref: PivotPreference) -> LpSolution {
        assert_eq!(w.len(), self.rows.len(), "workload length must match rows");
        let reduced = match reduce_rows(&self.rows, w) {
            Ok(r) => r,
            Err(()) => {
                return LpSolution {
                    status: SolveStatus::Infeasible,
                    objective: 0.0,
                    q: vec![0.0; self.num_cols()],
                    iterations: 0,
                }
            }
        };
        if reduced.rows.is_empty() {
            // Every constraint degenerated to 0 = 0: the origin is optimal
            // for nonnegative costs; negative costs make it unbounded.
            let status = if self.h.iter().any(|&c| c < 0.0) {
                SolveStatus::Unbounded
            } else {
                SolveStatus::Optimal
            };
            return LpSolution {
                status,
                objective: 0.0,
                q: vec![0.0; self.num_cols()],
                iterations: 0,
            };
        }
        simplex(&reduced.rows, &reduced.w, &self.h, pref)
    }

    /// Minimum-norm point among feasible points whose cost does not exceed
    /// `cost_cap`, starting the active-set iteration from `start` (a point
    /// satisfying the constraints, typically an optimal vertex).
    pub fn min_norm_split(&self, w: &[f64], cost_cap: f64, start: &[f64]) -> QpSolution {
        assert_eq!(w.len(), self.rows.len(), "workload length must match rows");
        assert_eq!(start.len(), self.num_cols(), "start length must match columns");
        let reduced = match reduce_rows(&self.rows, w) {
            Ok(r) => r,
            Err(()) => {
                return QpSolution {
                    status: SolveStatus::Infeasible,
                    q: start.to_vec(),
                    iterations: 0,
                }
            }
        };
        min_norm_active_set(&reduced.rows, &reduced.w, &self.h, cost_cap, start)
    }

    /// Full pipeline: minimize cost, then tie-break by minimum norm.
    pub fn split(&self, w: &[f64]) -> SplitSolution {
        self.split_with(w, PivotPreference::LowestIndex)
    }

    /// As [`split`](Self::split) with an explicit pivot preference for the
    /// cost-minimization stage.
    pub fn split_with(&self, w: &[f64], pref: PivotPreference) -> SplitSolution {
        let lp = self.solve_lp_with(w, pref);
        if lp.status != SolveStatus::Optimal {
            return SplitSolution {
                status: lp.status,
                objective: 0.0,
                q: lp.q,
                col_types: self.col_types.clone(),
                row_resources: self.row_resources.clone(),
                lp_iterations: lp.iterations,
                qp_iterations: 0,
            };
        }
        let qp = self.min_norm_split(w, lp.objective + FEASIBILITY_TOL, &lp.q);
        let (status, q) = if qp.status == SolveStatus::Optimal {
            (SolveStatus::Optimal, qp.q)
        } else {
            // Fall back to the vertex: it is optimal, merely not tie-broken.
            (qp.status, lp.q)
        };
        SplitSolution {
            status,
            objective: lp.objective,
            q,
            col_types: self.col_types.clone(),
            row_resources: self.row_resources.clone(),
            lp_iterations: lp.iterations,
            qp_iterations: qp.iterations,
        }
    }
}

/// Deduplicated, sign-normalized constraint system.
struct ReducedRows {
    rows: Vec<Vec<f64>>,
    w: Vec<f64>,
}

/// Merge exactly-identical coefficient rows (checking their right-hand
/// sides agree), drop all-zero rows (checking their right-hand sides are
/// zero), and flip rows with negative right-hand sides. Returns `Err` on
/// any inconsistency, which means the system is infeasible.
fn reduce_rows(rows: &[Vec<f64>], w: &[f64]) -> Result<ReducedRows, ()> {
    let scale = 1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = ROW_CONSISTENCY_TOL * scale;
    let mut out_rows: Vec<Vec<f64>> = Vec::new();
    let mut out_w: Vec<f64> = Vec::new();
    for (row, &rhs) in rows.iter().zip(w) {
        if row.iter().all(|&v| v == 0.0) {
            if rhs.abs() > tol {
                return Err(());
            }
            continue;
        }
        if let Some(k) = out_rows.iter().position(|r| r == row) {
            if (out_w[k] - rhs).abs() > tol {
                return Err(());
            }
            continue;
        }
        if rhs < 0.0 {
            out_rows.push(row.iter().map(|v| -v).collect());
            out_w.push(-rhs);
        } else {
            out_rows.push(row.clone());
            out_w.push(rhs);
        }
    }
    Ok(ReducedRows { rows: out_rows, w: out_w })
}

/// Two-phase dense-tableau simplex with an index-ordered anti-cycling rule.
/// `rows` must already be reduced (no duplicates, nonnegative `w`).
fn simplex(rows: &[Vec<f64>], w: &[f64], h: &[f64], pref: PivotPreference) -> LpSolution {
    let m = rows.len();
    let n = h.len();
    let rhs_col = n + m;
    // Tableau: structural columns, artificial columns, right-hand side.
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut row = vec![0.0; n + m + 1];
            row[..n].copy_from_slice(&rows[r]);
            row[n + r] = 1.0;
            row[rhs_col] = w[r];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut live: Vec<bool> = vec![true; m];
    let mut iterations = 0usize;

    // Phase one: minimize the sum of artificial variables.
    let mut cost: Vec<f64> = vec![0.0; n + m + 1];
    for j in n..n + m {
        cost[j] = 1.0;
    }
    for row in &t {
        for (c, v) in cost.iter_mut().zip(row) {
            *c -= *v;
        }
    }
    let phase1 = run_phase(&mut t, &mut basis, &mut cost, &live, n, true, pref, &mut iterations);
    if phase1 == PhaseOutcome::IterationCap {
        return failure(n, iterations, SolveStatus::NumericalFailure);
    }
    let residual = -cost[rhs_col];
    let scale = 1.0 + w.iter().sum::<f64>();
    if residual > ROW_CONSISTENCY_TOL * scale {
        return failure(n, iterations, SolveStatus::Infeasible);
    }

    // Drive remaining artificial variables out of the basis; rows that
    // cannot pivot on any structural column are redundant and retire.
    for r in 0..m {
        if basis[r] < n {
            continue;
        }
        let j = match pref {
            PivotPreference::LowestIndex => (0..n).find(|&j| t[r][j].abs() > ROW_CONSISTENCY_TOL),
            PivotPreference::HighestIndex => (0..n).rev().find(|&j| t[r][j].abs() > ROW_CONSISTENCY_TOL),
        };
        match j {
            Some(j) => {
                pivot(&mut t, &mut cost, r, j);
                basis[r] = j;
            }
            None => live[r] = false,
        }
    }

    // Phase two: minimize the real costs over the structural columns.
    cost[..n].copy_from_slice(h);
    for c in cost[n..].iter_mut() {
        *c = 0.0;
    }
    for r in 0..m {
        if live[r] && basis[r] < n {
            let b = h[basis[r]];
            if b != 0.0 {
                for (c, v) in cost.iter_mut().zip(&t[r]) {
                    *c -= b * *v;
                }
            }
        }
    }
    match run_phase(&mut t, &mut basis, &mut cost, &live, n, false, pref, &mut iterations) {
        PhaseOutcome::IterationCap => failure(n, iterations, SolveStatus::NumericalFailure),
        PhaseOutcome::Unbounded => failure(n, iterations, SolveStatus::Unbounded),
        PhaseOutcome::Optimal => {
            let mut q = vec![0.0; n];
            for r in 0..m {
                if live[r] && basis[r] < n {
                    q[basis[r]] = t[r][rhs_col].max(0.0);
                }
            }
            let objective = q.iter().zip(h).map(|(a, b)| a * b).sum();
            LpSolution {
                status: SolveStatus::Optimal,
                objective,
                q,
                iterations,
            }
        }
    }
}

fn failure(n: usize, iterations: usize, status: SolveStatus) -> LpSolution {
    LpSolution {
        status,
        objective: 0.0,
        q: vec![0.0; n],
        iterations,
    }
}

#[derive(PartialEq, Eq)]
enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterationCap,
}

/// Run simplex iterations until no column prices out, the problem proves
/// unbounded, or the global iteration cap trips. In phase one artificial
/// columns may enter; in phase two they are barred.
#[allow(clippy::too_many_arguments)]
fn run_phase(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &mut Vec<f64>,
    live: &[bool],
    n: usize,
    allow_artificial: bool,
    pref: PivotPreference,
    iterations: &mut usize,
) -> PhaseOutcome {
    let m = t.len();
    let rhs_col = cost.len() - 1;
    let limit = if allow_artificial { cost.len() - 1 } else { n };
    loop {
        if *iterations >= MAX_ITERATIONS {
            return PhaseOutcome::IterationCap;
        }
        let entering = match pref {
            PivotPreference::LowestIndex => (0..limit).find(|&j| cost[j] < -PIVOT_TOL),
            PivotPreference::HighestIndex => (0..limit).rev().find(|&j| cost[j] < -PIVOT_TOL),
        };
        let Some(j) = entering else {
            return PhaseOutcome::Optimal;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if !live[r] || t[r][j] <= PIVOT_TOL {
                continue;
            }
            let ratio = t[r][rhs_col] / t[r][j];
            let better = match leave {
                None => true,
                Some((cur, best)) => {
                    ratio < best - 1e-12
                        || (ratio <= best + 1e-12
                            && match pref {
                                PivotPreference::LowestIndex => basis[r] < basis[cur],
                                PivotPreference::HighestIndex => basis[r] > basis[cur],
                            })
                }
            };
            if better {
                leave = Some((r, ratio));
            }
        }
        let Some((r, _)) = leave else {
            return PhaseOutcome::Unbounded;
        };
        pivot(t, cost, r, j);
        basis[r] = j;
        *iterations += 1;
    }
}

/// Standard pivot: normalize row `r` on column `j`, eliminate `j` from all
/// other rows and from the cost row.
fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], r: usize, j: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    for k in 0..t.len() {
        if k == r {
            continue;
        }
        let f = t[k][j];
        if f != 0.0 {
            let (pivot_row, other) = if k < r {
                let (a, b) = t.split_at_mut(r);
                (&b[0], &mut a[k])
            } else {
                let (a, b) = t.split_at_mut(k);
                (&a[r], &mut b[0])
            };
            for (o, pv) in other.iter_mut().zip(pivot_row) {
                *o -= f * *pv;
            }
        }
    }
    let f = cost[j];
    if f != 0.0 {
        for (c, pv) in cost.iter_mut().zip(&t[r]) {
            *c -= f * *pv;
        }
    }
}

/// Constraint identifiers for the active-set stage.
#[derive(Clone, Copy, PartialEq, Eq)]
enum ActiveConstraint {
    /// Workload equality row `r` (always active).
    Row(usize),
    /// Nonnegativity bound on column `j`, held at zero.
    Bound(usize),
    /// The cost cap, held at equality.
    Cost,
}

/// Primal active-set minimization of `||q||^2` subject to the (reduced)
/// workload equalities, `h . q <= cost_cap`, and `q >= 0`, starting from a
/// feasible `start`.
fn min_norm_active_set(
    rows: &[Vec<f64>],
    w: &[f64],
    h: &[f64],
    cost_cap: f64,
    start: &[f64],
) -> QpSolution {
    let n = h.len();
    let mut q: Vec<f64> = start.iter().map(|&v| v.max(0.0)).collect();
    let mut bound_active: Vec<bool> = q.iter().map(|&v| v <= FEASIBILITY_TOL).collect();
    let cost_now: f64 = q.iter().zip(h).map(|(a, b)| a * b).sum();
    let mut cost_active = cost_now >= cost_cap - FEASIBILITY_TOL;
    let mut iterations = 0usize;

    loop {
        if iterations >= MAX_ITERATIONS {
            return QpSolution {
                status: SolveStatus::NumericalFailure,
                q,
                iterations,
            };
        }
        iterations += 1;

        // Assemble the active constraint list in a fixed order: workload
        // rows, active bounds ascending, then the cost cap.
        let mut active: Vec<ActiveConstraint> = (0..rows.len()).map(ActiveConstraint::Row).collect();
        for (j, &on) in bound_active.iter().enumerate() {
            if on {
                active.push(ActiveConstraint::Bound(j));
            }
        }
        if cost_active {
            active.push(ActiveConstraint::Cost);
        }

        let gradient = |c: &ActiveConstraint| -> (Vec<f64>, f64) {
            match *c {
                ActiveConstraint::Row(r) => (rows[r].clone(), w[r]),
                ActiveConstraint::Bound(j) => {
                    let mut g = vec![0.0; n];
                    g[j] = 1.0;
                    (g, 0.0)
                }
                ActiveConstraint::Cost => (h.to_vec(), cost_cap),
            }
        };

        // Minimum-norm solution of the active equalities via modified
        // Gram-Schmidt, remembering the triangular expansion so multipliers
        // can be recovered by back-substitution.
        let mut ortho: Vec<Vec<f64>> = Vec::new();
        let mut ortho_rhs: Vec<f64> = Vec::new();
        // expansion[k] holds the coefficients of active row k over the
        // orthonormal rows produced so far; dependent rows record None.
        let mut expansion: Vec<Option<(usize, Vec<f64>)>> = Vec::new();
        let mut inconsistent = false;
        for c in &active {
            let (mut g, mut b) = gradient(c);
            let orig_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut coeffs = Vec::with_capacity(ortho.len());
            for (e, &eb) in ortho.iter().zip(&ortho_rhs) {
                let d: f64 = g.iter().zip(e).map(|(a, x)| a * x).sum();
                coeffs.push(d);
                for (gv, ev) in g.iter_mut().zip(e) {
                    *gv -= d * ev;
                }
                b -= d * eb;
            }
            let rem = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rem <= 1e-10 * (1.0 + orig_norm) {
                if b.abs() > 1e-6 * (1.0 + orig_norm) {
                    inconsistent = true;
                    break;
                }
                expansion.push(None);
            } else {
                for v in g.iter_mut() {
                    *v /= rem;
                }
                expansion.push(Some((ortho.len(), {
                    coeffs.push(rem);
                    coeffs
                })));
                ortho.push(g);
                ortho_rhs.push(b / rem);
            }
        }
        if inconsistent {
            return QpSolution {
                status: SolveStatus::NumericalFailure,
                q,
                iterations,
            };
        }
        let target: Vec<f64> = (0..n)
            .map(|j| ortho.iter().zip(&ortho_rhs).map(|(e, &b)| b * e[j]).sum())
            .collect();

        let step: Vec<f64> = target.iter().zip(&q).map(|(t, c)| t - c).collect();
        let step_inf = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        if step_inf <= 1e-11 {
            // At the equality-constrained optimum: recover multipliers of
            // 2q over the active rows by back-substitution through the
            // Gram-Schmidt expansion and test their signs.
            let mut coeff_on_ortho: Vec<f64> = ortho
                .iter()
                .map(|e| 2.0 * q.iter().zip(e).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let mut y = vec![0.0; active.len()];
            for k in (0..active.len()).rev() {
                if let Some((last, coeffs)) = &expansion[k] {
                    let yk = coeff_on_ortho[*last] / coeffs[*last];
                    y[k] = yk;
                    if yk != 0.0 {
                        for (l, c) in coeffs[..*last].iter().enumerate() {
                            coeff_on_ortho[l] -= yk * c;
                        }
                        coeff_on_ortho[*last] = 0.0;
                    }
                }
            }
            // First wrongly-signed multiplier leaves the active set: bounds
            // need y >= 0 (they entered as +e_j), the cost cap needs y <= 0
            // (it entered as +h but constrains from above).
            let mut released = false;
            for (k, c) in active.iter().enumerate() {
                match *c {
                    ActiveConstraint::Bound(j) if y[k] < -1e-9 => {
                        bound_active[j] = false;
                        released = true;
                        break;
                    }
                    ActiveConstraint::Cost if y[k] > 1e-9 => {
                        cost_active = false;
                        released = true;
                        break;
                    }
                    _ => {}
                }
            }
            if released {
                continue;
            }
            for (v, &on) in q.iter_mut().zip(&bound_active) {
                if on {
                    *v = 0.0;
                }
            }
            return QpSolution {
                status: SolveStatus::Optimal,
                q,
                iterations,
            };
        }

        // Walk toward the equality optimum until an inactive inequality
        // blocks; ties resolve to the lowest-indexed bound, then the cap.
        let mut alpha = 1.0f64;
        let mut blocking: Option<ActiveConstraint> = None;
        for j in 0..n {
            if !bound_active[j] && step[j] < -1e-12 {
                let a = q[j] / -step[j];
                if a < alpha - 1e-12 {
                    alpha = a;
                    blocking = Some(ActiveConstraint::Bound(j));
                }
            }
        }
        if !cost_active {
            let slope: f64 = step.iter().zip(h).map(|(s, c)| s * c).sum();
            if slope > 1e-12 {
                let here: f64 = q.iter().zip(h).map(|(a, b)| a * b).sum();
                let a = (cost_cap - here) / slope;
                if a < alpha - 1e-12 {
                    alpha = a;
                    blocking = Some(ActiveConstraint::Cost);
                }
            }
        }
        let alpha = alpha.max(0.0);
        for (v, s) in q.iter_mut().zip(&step) {
            *v = (*v + alpha * s).max(0.0);
        }
        match blocking {
            Some(ActiveConstraint::Bound(j)) => {
                q[j] = 0.0;
                bound_active[j] = true;
            }
            Some(ActiveConstraint::Cost) => cost_active = true,
            _ => {}
        }
    }
}

/// Independent reference implementations used only by tests: exhaustive
/// basic-solution enumeration for the cost stage and a convex-hull search
/// for the minimum-norm stage. Deliberately share no code with the solver.
pub mod oracle {
    use super::SplitProblem;

    /// Outcome of exact Gaussian elimination on a small square-ish system.
    enum Elim {
        Unique(Vec<f64>),
        Inconsistent,
        Underdetermined,
    }

    /// Solve `a x = b` where `a` is `m x k`, by elimination with partial
    /// pivoting. Declares under-determined systems instead of picking one.
    fn eliminate(a: &[Vec<f64>], b: &[f64]) -> Elim {
        let m = a.len();
        let k = if m == 0 { 0 } else { a[0].len() };
        let mut aug: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(row, &rhs)| {
                let mut r = row.clone();
                r.push(rhs);
                r
            })
            .collect();
        let mut pivot_of_col = vec![usize::MAX; k];
        let mut row = 0usize;
        for col in 0..k {
            let best = (row..m).max_by(|&x, &y| {
                aug[x][col].abs().partial_cmp(&aug[y][col].abs()).unwrap()
            });
            let Some(best) = best else { break };
            if aug[best][col].abs() <= 1e-11 {
                continue;
            }
            aug.swap(row, best);
            let p = aug[row][col];
            for v in aug[row].iter_mut() {
                *v /= p;
            }
            for r2 in 0..m {
                if r2 != row {
                    let f = aug[r2][col];
                    if f != 0.0 {
                        let prow = aug[row].clone();
                        for (v, pv) in aug[r2].iter_mut().zip(&prow) {
                            *v -= f * pv;
                        }
                    }
                }
            }
            pivot_of_col[col] = row;
            row += 1;
            if row == m {
                break;
            }
        }
        for r in aug.iter() {
            if r[..k].iter().all(|v| v.abs() <= 1e-8) && r[k].abs() > 1e-7 {
                return Elim::Inconsistent;
            }
        }
        if pivot_of_col.iter().any(|&p| p == usize::MAX) {
            return Elim::Underdetermined;
        }
        let mut x = vec![0.0; k];
        for (col, &p) in pivot_of_col.iter().enumerate() {
            x[col] = aug[p][k];
        }
        Elim::Unique(x)
    }

    /// All feasible basic solutions (vertices) of `{q >= 0 : D q = w}`,
    /// found by trying every column subset of size at most the row count.
    pub fn enumerate_vertices(p: &SplitProblem, w: &[f64]) -> Vec<Vec<f64>> {
        let n = p.num_cols();
        let m = p.num_rows();
        let cap = m.min(n);
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut seen: Vec<Vec<i64>> = Vec::new();
        let mut subset: Vec<usize> = Vec::new();
        enumerate_subsets(n, cap, &mut subset, &mut |s: &[usize]| {
            let a: Vec<Vec<f64>> = (0..m)
                .map(|r| s.iter().map(|&c| p.coefficient(r, c)).collect())
                .collect();
            let x = match eliminate(&a, w) {
                Elim::Unique(x) => x,
                _ => return,
            };
            if x.iter().any(|&v| v < -1e-9) {
                return;
            }
            let mut q = vec![0.0; n];
            for (&c, &v) in s.iter().zip(&x) {
                q[c] = v.max(0.0);
            }
            let key: Vec<i64> = q.iter().map(|v| (v * 1e7).round() as i64).collect();
            if !seen.contains(&key) {
                seen.push(key);
                out.push(q);
            }
        });
        out
    }

    fn enumerate_subsets(n: usize, cap: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        f(cur);
        if cur.len() == cap {
            return;
        }
        let start = cur.last().map_or(0, |&l| l + 1);
        for c in start..n {
            cur.push(c);
            enumerate_subsets(n, cap, cur, f);
            cur.pop();
        }
    }

    /// Reference cost minimum: the best vertex by exhaustive enumeration.
    pub fn lp_by_enumeration(p: &SplitProblem, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        enumerate_vertices(p, w)
            .into_iter()
            .map(|q| {
                let z: f64 = q.iter().zip(p.holding_costs()).map(|(a, b)| a * b).sum();
                (z, q)
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
    }

    /// Reference minimum-norm point of the optimal face: enumerate the
    /// face's vertices, then search convex combinations of every small
    /// vertex subset (the projection of the origin onto a polytope is a
    /// combination of at most dimension-plus-one of its vertices). Returns
    /// `None` when the face has too many vertices to search exhaustively.
    pub fn min_norm_on_optimal_face(p: &SplitProblem, w: &[f64], z: f64) -> Option<Vec<f64>> {
        let tol = 1e-7 * (1.0 + z.abs());
        let vertices: Vec<Vec<f64>> = enumerate_vertices(p, w)
            .into_iter()
            .filter(|q| {
                let cost: f64 = q.iter().zip(p.holding_costs()).map(|(a, b)| a * b).sum();
                cost <= z + tol
            })
            .collect();
        if vertices.is_empty() || vertices.len() > 14 {
            return None;
        }
        let n = p.num_cols();
        let cap = vertices.len().min(n + 1);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut subset = Vec::new();
        enumerate_subsets(vertices.len(), cap, &mut subset, &mut |s: &[usize]| {
            if s.is_empty() {
                return;
            }
            // Minimize ||sum_a alpha_a v_a||^2 with alpha summing to one:
            // stationarity gives a linear system in alpha and one
            // multiplier over the Gram matrix of the chosen vertices.
            let k = s.len();
            let mut a = vec![vec![0.0; k + 1]; k + 1];
            let mut b = vec![0.0; k + 1];
            for (i, &vi) in s.iter().enumerate() {
                for (j, &vj) in s.iter().enumerate() {
                    a[i][j] = 2.0
                        * vertices[vi]
                            .iter()
                            .zip(&vertices[vj])
                            .map(|(x, y)| x * y)
                            .sum::<f64>();
                }
                a[i][k] = 1.0;
                a[k][i] = 1.0;
            }
            b[k] = 1.0;
            let alpha = match eliminate(&a, &b) {
                Elim::Unique(x) => x,
                _ => return,
            };
            if alpha[..k].iter().any(|&v| v < -1e-9) {
                return;
            }
            let mut point = vec![0.0; n];
            for (i, &vi) in s.iter().enumerate() {
                for (c, x) in point.iter_mut().zip(&vertices[vi]) {
                    *c += alpha[i] * x;
                }
            }
            let norm: f64 = point.iter().map(|v| v * v).sum();
            if best.as_ref().map_or(true, |(bn, _)| norm < bn - 1e-12) {
                best = Some((norm, point));
            }
        });
        best.map(|(_, p)| p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_rows_merges_duplicates_and_flips_signs() {
        let rows = vec![vec![0.5, 0.0], vec![0.5, 0.0], vec![-1.0, -2.0], vec![0.0, 0.0]];
        let w = vec![3.0, 3.0, -4.0, 0.0];
        let r = reduce_rows(&rows, &w).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[1], vec![1.0, 2.0]);
        assert_eq!(r.w, vec![3.0, 4.0]);
    }

    #[test]
    fn reduce_rows_rejects_contradictions() {
        assert!(reduce_rows(&[vec![1.0], vec![1.0]], &[1.0, 2.0]).is_err());
        assert!(reduce_rows(&[vec![0.0]], &[1.0]).is_err());
    }

    #[test]
    fn negative_cost_with_free_direction_is_unbounded() {
        // Second column does not appear in the constraint and has negative
        // cost, so the objective can decrease without limit.
        let p = SplitProblem::new(vec![vec![1.0, 0.0]], vec![1.0, -1.0]).unwrap();
        let sol = p.solve_lp(&[2.0]);
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }
}
