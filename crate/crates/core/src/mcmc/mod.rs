//! Adaptive random-walk Metropolis over `θ` with EKF (`kmcmc`) or particle
//! filter (`pmcmc`) likelihoods, plus chain diagnostics.

mod adapt;
mod chain;
pub mod diagnostics;

pub use adapt::{
    adapt_scale, current_proposal, empirical_proposal, initial_scale, optimal_factor, AdaptState, CovSource, Phase,
    ProposalCov, RunningCov, ScaleRecipe, TARGET_ACCEPTANCE,
};
pub use chain::{
    acceptance_between, metropolis_step, run_chain, BackendKind, ChainConfig, ChainPoint, CovSnapshot, EkfBackend,
    FnBackend, Likelihood, McmcTrace, PfBackend, TraceRow,
};
pub use diagnostics::{ess, relative_efficiency};
