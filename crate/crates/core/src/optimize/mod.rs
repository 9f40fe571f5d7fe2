//! Latin hypercube screening and Nelder–Mead maximization of the EKF or ODE
//! likelihood.

mod lhs;
mod simplex;

pub use lhs::{lhs_sample, lhs_screen, LhsDesign, Ranked};
pub use simplex::{ksimplex, nelder_mead, simplex, MapEstimate, NmOptions, NmResult, SimplexOptions, SimplexState, StopReason};
