//! Two-phase proposal adaptation.
//!
//! In the SCALE phase the proposal is `ε²·(2.38²/d)·Σ₀` and `ε` is tuned
//! towards 23.4% acceptance with a cooling exponent. Once `S` proposals have
//! been accepted the proposal becomes `(2.38²/d)·Σ_Emp`, the running
//! covariance of every chain state so far, and `ε` stops moving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{ridge_cholesky, stabilize};
use crate::model::ParamSpec;
use crate::{Error, Result};

pub const TARGET_ACCEPTANCE: f64 = 0.234;

/// `2.38²/d`.
pub fn optimal_factor(d: usize) -> f64 {
    2.38 * 2.38 / d as f64
}

/// Starting point of the SCALE phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRecipe {
    pub epsilon0: f64,
    /// Covariance-level multiplier applied to `Σ₀`.
    pub factor: f64,
}

impl ScaleRecipe {
    /// Effective first proposal `ε₀²·factor·Σ₀`.
    pub fn apply(&self, sigma0: &DMatrix<f64>) -> DMatrix<f64> {
        sigma0 * (self.epsilon0 * self.epsilon0 * self.factor)
    }
}

/// `ε₀ = 1` with the `2.38²/d` factor carried by the covariance.
pub fn initial_scale(d: usize) -> ScaleRecipe {
    ScaleRecipe { epsilon0: 1.0, factor: optimal_factor(d) }
}

/// `ε_{i+1} = ε_i · exp(aⁱ·(AccRate − 0.234))`.
pub fn adapt_scale(epsilon: f64, acc_rate: f64, a: f64, i: u64) -> f64 {
    let cool = a.powf(i as f64);
    epsilon * (cool * (acc_rate - TARGET_ACCEPTANCE)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Scale,
    Empirical,
}

/// Single-pass mean and covariance (denominator `n − 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningCov {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningCov {
    pub fn new(d: usize) -> Self {
        RunningCov { n: 0, mean: DVector::zeros(d), m2: DMatrix::zeros(d, d) }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `None` until two samples are in.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if self.n < 2 {
            return None;
        }
        let mut c = &self.m2 / (self.n - 1) as f64;
        crate::linalg::symmetrize(&mut c);
        Some(c)
    }
}

/// Adaptation bookkeeping for one chain.
#[derive(Debug, Clone)]
pub struct AdaptState {
    pub epsilon: f64,
    pub cooling: f64,
    pub switch_after: usize,
    pub accepted: usize,
    pub iteration: u64,
    pub phase: Phase,
    pub stats: RunningCov,
    distinct: usize,
}

impl AdaptState {
    /// `theta0` is the first chain state and enters the running covariance.
    pub fn new(theta0: &[f64], cooling: f64, switch_after: usize) -> Result<Self> {
        if !(cooling > 0.0 && cooling < 1.0) {
            return Err(Error::Invalid(format!("cooling factor {cooling} outside (0, 1)")));
        }
        let mut stats = RunningCov::new(theta0.len());
        stats.push(theta0);
        Ok(AdaptState {
            epsilon: initial_scale(theta0.len().max(1)).epsilon0,
            cooling,
            switch_after,
            accepted: 0,
            iteration: 0,
            phase: Phase::Scale,
            stats,
            distinct: 1,
        })
    }

    pub fn dim(&self) -> usize {
        self.stats.mean.len()
    }

    /// Cumulative proportion of accepted proposals.
    pub fn acceptance_rate(&self) -> f64 {
        if self.iteration == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iteration as f64
        }
    }

    /// Account for one iteration whose resulting state is `theta`. Returns
    /// true on the iteration that switches to the EMPIRICAL phase.
    pub fn record(&mut self, theta: &[f64], accepted: bool) -> bool {
        let i = self.iteration;
        self.iteration += 1;
        if accepted {
            self.accepted += 1;
            self.distinct += 1;
        }
        self.stats.push(theta);
        if self.phase == Phase::Scale {
            self.epsilon = adapt_scale(self.epsilon, self.acceptance_rate(), self.cooling, i);
            if self.accepted >= self.switch_after && self.distinct > self.dim() {
                self.phase = Phase::Empirical;
                return true;
            }
        }
        false
    }
}

/// Where a proposal covariance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovSource {
    Diagonal,
    Empirical,
    File,
}

/// A proposal covariance with its (ridge-regularized) Cholesky factor.
#[derive(Debug, Clone)]
pub struct ProposalCov {
    pub sigma: DMatrix<f64>,
    pub source: CovSource,
    chol: DMatrix<f64>,
}

impl ProposalCov {
    pub fn new(sigma: DMatrix<f64>, source: CovSource) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::Invalid("proposal covariance must be a non-empty square matrix".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("proposal covariance has non-finite entries".into()));
        }
        let sigma = stabilize(&sigma);
        let chol = ridge_cholesky(&sigma, 0.0)
            .ok_or_else(|| Error::Invalid("proposal covariance cannot be factorized".into()))?;
        Ok(ProposalCov { sigma, source, chol })
    }

    /// `diag(sd_transf²)`.
    pub fn from_specs(specs: &[ParamSpec]) -> Result<Self> {
        let d = DVector::from_iterator(specs.len(), specs.iter().map(|s| s.sd_transf * s.sd_transf));
        ProposalCov::new(DMatrix::from_diagonal(&d), CovSource::Diagonal)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Lower Cholesky factor.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn scaled(&self, s: f64) -> ProposalCov {
        ProposalCov { sigma: &self.sigma * s, source: self.source, chol: &self.chol * s.sqrt() }
    }
}

/// Proposal for the next iteration given the adaptation state.
pub fn current_proposal(state: &AdaptState, sigma0: &ProposalCov) -> Result<ProposalCov> {
    let d = state.dim();
    if sigma0.dim() != d {
        return Err(Error::LengthMismatch { expected: d, got: sigma0.dim() });
    }
    let factor = optimal_factor(d);
    match state.phase {
        Phase::Scale => Ok(sigma0.scaled(state.epsilon * state.epsilon * factor)),
        Phase::Empirical => {
            if state.distinct <= d {
                return Err(Error::NotEnoughSamples { have: state.distinct, need: d + 1 });
            }
            let emp = state.stats.covariance().ok_or(Error::NotEnoughSamples { have: state.stats.n, need: d + 1 })?;
            empirical_proposal(&emp)
        }
    }
}

/// `(2.38²/d)·(Σ_Emp + 1e-9·tr(Σ_Emp)/d·I)`.
pub fn empirical_proposal(emp: &DMatrix<f64>) -> Result<ProposalCov> {
    let d = emp.nrows();
    let ridge = 1e-9 * emp.trace() / d as f64;
    let reg = emp + DMatrix::identity(d, d) * ridge;
    ProposalCov::new(reg * optimal_factor(d), CovSource::Empirical)
}
