//! Positive distributions parametrized by mean and coefficient of variation.
//!
//! The simulator only ever needs positive variates with a prescribed mean and
//! coefficient of variation (cv = standard deviation / mean): inter-arrival
//! times with mean `1/λ` and service requirements with mean `1/μ`. Every
//! supported family is therefore specified as `(kind, mean, cv)`:
//!
//! | kind          | cv constraint | parametrization                                  |
//! |---------------|---------------|--------------------------------------------------|
//! | `exponential` | cv = 1        | rate `1/mean`                                    |
//! | `deterministic` | cv = 0      | constant `mean` (consumes no randomness)         |
//! | `gamma`       | cv > 0        | shape `1/cv²`, scale `mean·cv²`                  |
//! | `lognormal`   | cv > 0        | `σ² = ln(1+cv²)`, `μ = ln(mean) − σ²/2`          |

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distribution family. Serialized as a lowercase string in JSON configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    #[default]
    Exponential,
    Deterministic,
    Gamma,
    Lognormal,
}

impl DistKind {
    /// The cv this family forces, if it forces one.
    pub fn forced_cv(self) -> Option<f64> {
        match self {
            DistKind::Exponential => Some(1.0),
            DistKind::Deterministic => Some(0.0),
            _ => None,
        }
    }
}

impl std::fmt::Display for DistKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DistKind::Exponential => "exponential",
            DistKind::Deterministic => "deterministic",
            DistKind::Gamma => "gamma",
            DistKind::Lognormal => "lognormal",
        };
        f.write_str(s)
    }
}

/// A fully resolved distribution: family plus mean and cv.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub mean: f64,
    pub cv: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("mean must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("{kind} requires cv = {required}, got {got}")]
    ForcedCv { kind: DistKind, required: f64, got: f64 },
    #[error("{kind} requires a positive finite cv, got {got}")]
    BadCv { kind: DistKind, got: f64 },
}

impl DistributionSpec {
    pub fn new(kind: DistKind, mean: f64, cv: f64) -> Result<Self, DistError> {
        let spec = DistributionSpec { kind, mean, cv };
        spec.check()?;
        Ok(spec)
    }

    /// Validate the (kind, mean, cv) combination.
    pub fn check(&self) -> Result<(), DistError> {
        if !(self.mean.is_finite() && self.mean > 0.0) {
            return Err(DistError::BadMean(self.mean));
        }
        match self.kind.forced_cv() {
            Some(required) => {
                if self.cv != required {
                    return Err(DistError::ForcedCv { kind: self.kind, required, got: self.cv });
                }
            }
            None => {
                if !(self.cv.is_finite() && self.cv > 0.0) {
                    return Err(DistError::BadCv { kind: self.kind, got: self.cv });
                }
            }
        }
        Ok(())
    }

    /// Build a sampler. Fails if the parametrization is invalid.
    pub fn sampler(&self) -> Result<Sampler, DistError> {
        self.check()?;
        let inner = match self.kind {
            DistKind::Exponential => SamplerInner::Exp(Exp::new(1.0 / self.mean).expect("validated rate")),
            DistKind::Deterministic => SamplerInner::Constant(self.mean),
            DistKind::Gamma => {
                let shape = 1.0 / (self.cv * self.cv);
                let scale = self.mean * self.cv * self.cv;
                SamplerInner::Gamma(Gamma::new(shape, scale).expect("validated shape/scale"))
            }
            DistKind::Lognormal => {
                let sigma2 = (1.0 + self.cv * self.cv).ln();
                let mu = self.mean.ln() - sigma2 / 2.0;
                SamplerInner::LogNormal(LogNormal::new(mu, sigma2.sqrt()).expect("validated sigma"))
            }
        };
        Ok(Sampler { inner })
    }
}

/// Prepared sampler for one [`DistributionSpec`].
#[derive(Clone, Debug)]
pub struct Sampler {
    inner: SamplerInner,
}

#[derive(Clone, Debug)]
enum SamplerInner {
    Exp(Exp<f64>),
    Constant(f64),
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
}

impl Sampler {
    /// Draw one variate. Deterministic samplers consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.inner {
            SamplerInner::Exp(d) => d.sample(rng),
            SamplerInner::Constant(c) => *c,
            SamplerInner::Gamma(d) => d.sample(rng),
            SamplerInner::LogNormal(d) => d.sample(rng),
        }
    }
}
