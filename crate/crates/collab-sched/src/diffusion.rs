//! Heavy-traffic diffusion companion of a network and the Monte Carlo
//! lower bound on discounted holding cost built from it.
//!
//! Near saturation, the vector of workloads seen by the constrained
//! resources behaves like a reflected Brownian motion: drift
//! `θ_i = r (ρ_i − 1)` under load scaling `r`, covariance
//! `Σ_ik = Σ_j λ_j (c_{a,j}² + c_{s,j}²) / μ_j²` summed over the job types
//! that the workload-split problem retains and that occupy both resources,
//! and normal reflection at the origin (each coordinate regulated at its
//! own zero boundary).
//!
//! No admissible schedule can hold instantaneous cost below the
//! workload-split value `z(w)` while the workload is `w`, so the expected
//! discounted area under `z(W(t))` is a floor on the discounted holding
//! cost achievable by *any* policy. [`lower_bound`] estimates that floor
//! by Euler–Maruyama simulation: trapezoid integration of
//! `e^{-δt} z(W(t))` to the horizon plus the tail `e^{-δT} z(W(T)) / δ`,
//! averaged over independently seeded paths (fanned out in parallel).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::network::{NetworkSpec, Violation};
use crate::parallel;
use crate::rng;
use crate::solver::{SolveStatus, SolverError, SplitProblem};
use crate::stats;

/// Diagonal residuals more negative than this (relative to the largest
/// diagonal entry) mean the matrix is not a covariance matrix.
const PSD_TOL: f64 = 1e-10;

/// Errors from companion construction or lower-bound estimation.
#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid network: {0:?}")]
    InvalidNetwork(Vec<Violation>),
    #[error(transparent)]
    Problem(#[from] SolverError),
    #[error(
        "heavy resource {resource} has no job type confined to the heavy set; \
         its workload cost is unbounded"
    )]
    UncoveredResource { resource: usize },
    #[error("matrix is not positive semidefinite (row {row})")]
    NotPositiveSemidefinite { row: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("workload cost evaluation failed with status {0:?}")]
    CostEvaluation(SolveStatus),
}

/// Drift, covariance, and Cholesky-type factor of the reflected Brownian
/// workload limit, indexed by the heavy resources the split problem keeps.
#[derive(Clone, Debug)]
pub struct DiffusionCompanion {
    resources: Vec<usize>,
    drift: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    factor: Vec<Vec<f64>>,
}

impl DiffusionCompanion {
    /// Derive the companion of `spec` under load scaling `scaling`.
    pub fn from_network(spec: &NetworkSpec, scaling: f64) -> Result<Self, DiffusionError> {
        let violations = spec.validate();
        if !violations.is_empty() {
            return Err(DiffusionError::InvalidNetwork(violations));
        }
        let problem = SplitProblem::from_network(spec)?;
        let resources = problem.row_resources().to_vec();
        let cols = problem.col_types().to_vec();
        let masks = spec.resource_masks();
        let n = resources.len();

        // Every retained resource needs at least one retained type, or the
        // split cost of its workload is infinite.
        for (row, &r) in resources.iter().enumerate() {
            if (0..cols.len()).all(|c| problem.coefficient(row, c) == 0.0) {
                let _ = row;
                return Err(DiffusionError::UncoveredResource { resource: r });
            }
        }

        let mut drift = vec![0.0; n];
        let mut covariance = vec![vec![0.0; n]; n];
        for &j in &cols {
            let jt = &spec.job_types[j];
            let (ca, cs) = (jt.arrival_cv(), jt.service_cv());
            if !ca.is_finite() || !cs.is_finite() {
                return Err(DiffusionError::BadConfig(format!(
                    "job type {j} has no usable coefficient of variation"
                )));
            }
            let lambda = jt.arrival_rate;
            let mu = jt.service_rate;
            let wiggle = lambda * (ca * ca + cs * cs) / (mu * mu);
            let members: Vec<usize> = (0..n)
                .filter(|&i| masks[j] >> resources[i] & 1 == 1)
                .collect();
            for &i in &members {
                drift[i] += lambda / mu;
                for &k in &members {
                    covariance[i][k] += wiggle;
                }
            }
        }
        for d in &mut drift {
            *d = scaling * (*d - 1.0);
        }
        let factor = cholesky_semidefinite(&covariance)?;
        Ok(DiffusionCompanion { resources, drift, covariance, factor })
    }

    /// Dimension of the workload space.
    pub fn dim(&self) -> usize {
        self.resources.len()
    }

    /// The heavy resources each coordinate tracks, ascending.
    pub fn resources(&self) -> &[usize] {
        &self.resources
    }

    /// Drift vector `θ`.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Covariance matrix `Σ`.
    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &[Vec<f64>] {
        &self.factor
    }

    /// One Euler–Maruyama step of the reflected process, in place:
    /// `w ← max(w + θ dt + √dt · L ξ, 0)` with `ξ` standard normal.
    pub fn step<R: Rng + ?Sized>(&self, w: &mut [f64], dt: f64, rng: &mut R) {
        let n = self.dim();
        let sqrt_dt = dt.sqrt();
        let xi: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..n {
            let noise: f64 = (0..=i).map(|m| self.factor[i][m] * xi[m]).sum();
            w[i] = (w[i] + self.drift[i] * dt + sqrt_dt * noise).max(0.0);
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`, tolerating positive
/// *semi*definite input: a zero pivot zeroes its column instead of
/// failing, so rank-deficient covariance matrices factor cleanly.
pub fn cholesky_semidefinite(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DiffusionError> {
    let n = a.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(DiffusionError::BadConfig(format!(
                "matrix must be square; row {i} has {} entries for size {n}",
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(DiffusionError::BadConfig(format!("row {i} has non-finite entries")));
        }
    }
    let scale = (0..n).map(|i| a[i][i].abs()).fold(1.0f64, f64::max);
    let tol = PSD_TOL * scale;
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..=i {
            let dot: f64 = (0..k).map(|m| l[i][m] * l[k][m]).sum();
            let s = a[i][k] - dot;
            if k == i {
                if s < -tol {
                    return Err(DiffusionError::NotPositiveSemidefinite { row: i });
                }
                l[i][i] = if s > tol { s.sqrt() } else { 0.0 };
            } else if l[k][k] > 0.0 {
                l[i][k] = s / l[k][k];
            } else if s.abs() > tol {
                // A zero pivot in a true covariance matrix forces the rest
                // of its column to zero; a leftover this large means the
                // input was not one.
                return Err(DiffusionError::NotPositiveSemidefinite { row: i });
            }
        }
    }
    Ok(l)
}

/// Parameters of one lower-bound estimation.
#[derive(Clone, Copy, Debug)]
pub struct LowerBoundConfig {
    /// Load scaling `r` in the drift `θ_i = r (ρ_i − 1)`.
    pub scaling: f64,
    /// Discount rate `δ > 0`.
    pub discount_rate: f64,
    /// Integration horizon in diffusion time; the tail beyond it is priced
    /// at the frozen final state.
    pub time_horizon: f64,
    /// Euler step size (the horizon is rounded to a whole number of steps).
    pub time_step: f64,
    /// Monte Carlo sample size.
    pub paths: usize,
    /// Master seed; path `p` uses its own derived stream.
    pub seed: u64,
}

/// Monte Carlo estimate of the discounted-cost floor.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LowerBoundEstimate {
    /// Sample mean over paths.
    pub mean: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    /// Half-width of the 95% confidence interval.
    pub ci_halfwidth: f64,
    /// Paths averaged.
    pub paths: usize,
}

/// Estimate the floor on expected discounted holding cost:
/// `E ∫_0^∞ e^{-δt} z(W(t)) dt` with `W` the reflected workload diffusion
/// and `z` the workload-split cost, truncated at the horizon with the tail
/// `e^{-δT} z(W(T)) / δ`.
pub fn lower_bound(
    spec: &NetworkSpec,
    cfg: &LowerBoundConfig,
) -> Result<LowerBoundEstimate, DiffusionError> {
    if !(cfg.scaling.is_finite() && cfg.scaling > 0.0) {
        return Err(DiffusionError::BadConfig(format!(
            "scaling must be positive, got {}",
            cfg.scaling
        )));
    }
    if !(cfg.discount_rate.is_finite() && cfg.discount_rate > 0.0) {
        return Err(DiffusionError::BadConfig(format!(
            "discount rate must be positive (the tail term divides by it), got {}",
            cfg.discount_rate
        )));
    }
    if !(cfg.time_horizon.is_finite() && cfg.time_horizon > 0.0) {
        return Err(DiffusionError::BadConfig(format!(
            "time horizon must be positive, got {}",
            cfg.time_horizon
        )));
    }
    if !(cfg.time_step.is_finite() && cfg.time_step > 0.0 && cfg.time_step <= cfg.time_horizon) {
        return Err(DiffusionError::BadConfig(format!(
            "time step must lie in (0, horizon], got {}",
            cfg.time_step
        )));
    }
    if cfg.paths == 0 {
        return Err(DiffusionError::BadConfig("at least one path is required".into()));
    }

    let companion = DiffusionCompanion::from_network(spec, cfg.scaling)?;
    let problem = SplitProblem::from_network(spec)?;
    let delta = cfg.discount_rate;
    let dt = cfg.time_step;
    let steps = (cfg.time_horizon / dt).round().max(1.0) as usize;

    let per_path: Vec<Result<f64, DiffusionError>> =
        parallel::par_map_indexed(cfg.paths, |p| {
            let mut rng = rng::stream(cfg.seed, &[rng::ROLE_DIFFUSION, p as u64]);
            let mut w = vec![0.0; companion.dim()];
            let mut prev = split_cost(&problem, &w)?; // e^{-δ·0} = 1
            let mut acc = 0.0;
            let mut last = prev;
            for k in 1..=steps {
                companion.step(&mut w, dt, &mut rng);
                let z = split_cost(&problem, &w)?;
                let f = (-delta * (k as f64 * dt)).exp() * z;
                acc += 0.5 * (prev + f) * dt;
                prev = f;
                last = z;
            }
            let horizon = steps as f64 * dt;
            acc += (-delta * horizon).exp() * last / delta;
            Ok(acc)
        });
    let values = per_path.into_iter().collect::<Result<Vec<f64>, _>>()?;

    let summary = stats::summarize(&values);
    Ok(LowerBoundEstimate {
        mean: summary.mean,
        std_error: summary.std_dev / (summary.n as f64).sqrt(),
        ci_halfwidth: summary.ci_halfwidth,
        paths: summary.n,
    })
}

/// The split value `z(w)`: cheapest holding-cost rate any queue state
/// consistent with workload `w` can have.
fn split_cost(problem: &SplitProblem, w: &[f64]) -> Result<f64, DiffusionError> {
    let sol = problem.solve_lp(w);
    if sol.status != SolveStatus::Optimal {
        return Err(DiffusionError::CostEvaluation(sol.status));
    }
    Ok(sol.objective)
}
