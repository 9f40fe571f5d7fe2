use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adapt::{current_proposal, AdaptState, ProposalCov};
use crate::ekf::ekf_loglik;
use crate::integrate::IntegratorConfig;
use crate::model::{log_prior, to_natural, ModelDef, ObservationSeries, ParamSpec, Theta};
use crate::rng::{derive_seed, stream_rng};
use crate::smc::{run_pf, PfConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Ekf,
    Pf,
    Custom,
}

/// Log-likelihood of a natural-scale parameter vector. `call` numbers the
/// evaluations of one chain so stochastic backends can derive fresh seeds.
pub trait Likelihood {
    fn loglik(&mut self, theta_natural: &[f64], call: u64) -> f64;

    fn kind(&self) -> BackendKind {
        BackendKind::Custom
    }
}

/// EKF approximation (`kmcmc`).
pub struct EkfBackend<'a> {
    pub model: &'a ModelDef,
    pub series: &'a ObservationSeries,
    pub integrator: IntegratorConfig,
}

impl Likelihood for EkfBackend<'_> {
    fn loglik(&mut self, theta: &[f64], _call: u64) -> f64 {
        ekf_loglik(self.model, theta, self.series, &self.integrator)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Ekf
    }
}

/// Particle-filter estimate (`pmcmc`). Evaluation `call` runs the filter with
/// seed `derive_seed(pf.seed, call)`.
pub struct PfBackend<'a> {
    pub model: &'a ModelDef,
    pub series: &'a ObservationSeries,
    pub pf: PfConfig,
}

impl Likelihood for PfBackend<'_> {
    fn loglik(&mut self, theta: &[f64], call: u64) -> f64 {
        let cfg = PfConfig { seed: derive_seed(self.pf.seed, call), ..self.pf };
        run_pf(self.model, theta, self.series, &cfg).map_or(f64::NEG_INFINITY, |o| o.loglik)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Pf
    }
}

/// Any closure over the natural-scale parameters.
pub struct FnBackend<F>(pub F);

impl<F: FnMut(&[f64]) -> f64> Likelihood for FnBackend<F> {
    fn loglik(&mut self, theta: &[f64], _call: u64) -> f64 {
        (self.0)(theta)
    }
}

/// Current chain state; `theta` is in transformed space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPoint {
    pub theta: Theta,
    pub loglik: f64,
    pub logprior: f64,
}

impl ChainPoint {
    fn target(&self) -> f64 {
        self.loglik + self.logprior
    }
}

/// One Metropolis–Hastings move with a Gaussian random walk. The current
/// point's likelihood is reused, never recomputed, and a proposal outside the
/// prior support is rejected before the backend is called.
pub fn metropolis_step(
    current: &ChainPoint,
    proposal: &ProposalCov,
    specs: &[ParamSpec],
    backend: &mut dyn Likelihood,
    rng: &mut ChaCha8Rng,
    call: u64,
) -> (ChainPoint, bool) {
    let d = current.theta.dim();
    let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let step = proposal.chol() * z;
    let theta = Theta(current.theta.0.iter().zip(step.iter()).map(|(a, b)| a + b).collect());
    let u: f64 = rng.random();
    let logprior = log_prior(specs, &theta);
    if logprior == f64::NEG_INFINITY {
        return (current.clone(), false);
    }
    let mut loglik = backend.loglik(&to_natural(specs, &theta), call);
    if loglik.is_nan() {
        loglik = f64::NEG_INFINITY;
    }
    let candidate = ChainPoint { theta, loglik, logprior };
    let new = candidate.target();
    let old = current.target();
    let accept = if new == f64::NEG_INFINITY {
        false
    } else if old == f64::NEG_INFINITY || new >= old {
        true
    } else {
        u.ln() < new - old
    };
    if accept {
        (candidate, true)
    } else {
        (current.clone(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    /// Cooling factor `a`.
    pub cooling: f64,
    /// Accepted proposals before switching to the empirical covariance (`S`).
    pub switch_after: usize,
    pub seed: u64,
    /// When false the proposal is `Σ₀` itself for the whole run.
    pub adaptive: bool,
    pub snapshot_every: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { iterations: 1000, cooling: 0.999, switch_after: 100, seed: 0, adaptive: true, snapshot_every: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Transformed-space parameters.
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub logprior: f64,
    pub accepted: bool,
    /// Scale used for this iteration's proposal.
    pub epsilon: f64,
}

/// Empirical covariance (transformed space, without the `2.38²/d` factor)
/// recorded after iteration `iteration` (1-based count of completed rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CovSnapshot {
    pub iteration: usize,
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct McmcTrace {
    pub names: Vec<String>,
    pub specs: Vec<ParamSpec>,
    pub backend: BackendKind,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<CovSnapshot>,
    /// Row index at which the EMPIRICAL phase began.
    pub switched_at: Option<usize>,
    /// Covariance of all chain states, `None` with fewer than two.
    pub empirical: Option<DMatrix<f64>>,
}

impl McmcTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        acceptance_between(&self.rows, 0, self.rows.len())
    }

    /// Column `j` on the natural scale.
    pub fn natural_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| self.specs[j].inverse(r.theta[j])).collect()
    }

    /// Column `j` in transformed space.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.theta[j]).collect()
    }

    /// Rows in transformed space.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.theta.clone()).collect()
    }

    pub fn logliks(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loglik).collect()
    }
}

/// Proportion of accepted rows in `rows[from..to]`.
pub fn acceptance_between(rows: &[TraceRow], from: usize, to: usize) -> f64 {
    let span = &rows[from.min(rows.len())..to.min(rows.len())];
    if span.is_empty() {
        return 0.0;
    }
    span.iter().filter(|r| r.accepted).count() as f64 / span.len() as f64
}

/// Run an adaptive random-walk Metropolis chain from `theta0` (transformed).
///
/// Evaluation 0 of the backend is the starting point; proposal `i` uses call
/// `i + 1`. A snapshot of the empirical covariance is kept every
/// `snapshot_every` iterations and at the phase switch.
pub fn run_chain(
    specs: &[ParamSpec],
    backend: &mut dyn Likelihood,
    theta0: &Theta,
    sigma0: &ProposalCov,
    cfg: &ChainConfig,
) -> Result<McmcTrace> {
    let d = specs.len();
    if theta0.dim() != d {
        return Err(Error::LengthMismatch { expected: d, got: theta0.dim() });
    }
    if sigma0.dim() != d {
        return Err(Error::LengthMismatch { expected: d, got: sigma0.dim() });
    }
    if cfg.iterations == 0 {
        return Err(Error::Invalid("a chain needs at least one iteration".into()));
    }
    if !theta0.is_finite() {
        return Err(Error::Invalid("starting point is not finite".into()));
    }
    let logprior = log_prior(specs, theta0);
    if logprior == f64::NEG_INFINITY {
        return Err(Error::Invalid("starting point lies outside the prior support".into()));
    }
    let loglik = backend.loglik(&to_natural(specs, theta0), 0);
    let mut current = ChainPoint { theta: theta0.clone(), loglik: if loglik.is_nan() { f64::NEG_INFINITY } else { loglik }, logprior };
    let mut state = AdaptState::new(theta0.as_slice(), cfg.cooling, cfg.switch_after)?;
    let mut rng = stream_rng(derive_seed(cfg.seed, 0x6d63_6d63), 0);
    let mut trace = McmcTrace {
        names: specs.iter().map(|s| s.name.clone()).collect(),
        specs: specs.to_vec(),
        backend: backend.kind(),
        rows: Vec::with_capacity(cfg.iterations),
        snapshots: Vec::new(),
        switched_at: None,
        empirical: None,
    };
    let mut proposal = if cfg.adaptive { current_proposal(&state, sigma0)? } else { sigma0.clone() };

    for i in 0..cfg.iterations {
        let epsilon = state.epsilon;
        let (next, accepted) = metropolis_step(&current, &proposal, specs, backend, &mut rng, i as u64 + 1);
        current = next;
        let switched = state.record(current.theta.as_slice(), accepted);
        trace.rows.push(TraceRow {
            theta: current.theta.0.clone(),
            loglik: current.loglik,
            logprior: current.logprior,
            accepted,
            epsilon,
        });
        let done = i + 1;
        if switched {
            trace.switched_at = Some(done);
        }
        let periodic = cfg.snapshot_every > 0 && done % cfg.snapshot_every == 0;
        if switched || periodic {
            if let Some(sigma) = state.stats.covariance() {
                trace.snapshots.push(CovSnapshot { iteration: done, sigma });
            }
        }
        if cfg.adaptive {
            proposal = current_proposal(&state, sigma0)?;
        }
    }
    trace.empirical = state.stats.covariance();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::CovSource;
    use crate::model::Transform;

    fn flat_specs(d: usize) -> Vec<ParamSpec> {
        (0..d).map(|j| ParamSpec::new(&format!("p{j}"), Transform::Identity, 0.0, 1.0, -1e6, 1e6).unwrap()).collect()
    }

    #[test]
    fn out_of_support_skips_backend() {
        let specs = vec![ParamSpec::new("a", Transform::Identity, 0.5, 0.1, 0.0, 1.0).unwrap()];
        let cur = ChainPoint { theta: Theta(vec![0.999_999]), loglik: 0.0, logprior: 0.0 };
        let prop = ProposalCov::new(DMatrix::from_element(1, 1, 100.0), CovSource::File).unwrap();
        let mut calls = 0;
        let mut rng = stream_rng(5, 0);
        let mut rejected_out = 0;
        for _ in 0..200 {
            let mut be = FnBackend(|_: &[f64]| {
                calls += 1;
                0.0
            });
            let (next, acc) = metropolis_step(&cur, &prop, &specs, &mut be, &mut rng, 1);
            if !acc {
                assert_eq!(next, cur);
                rejected_out += 1;
            }
        }
        // proposals have sd 10 around ~1, so almost all leave [0, 1]
        assert!(rejected_out > 150);
        assert!(calls < 50);
    }

    #[test]
    fn flat_target_always_accepts() {
        let specs = flat_specs(2);
        let s0 = ProposalCov::new(DMatrix::identity(2, 2), CovSource::Diagonal).unwrap();
        // fixed unit steps wander ~300 units in 1e5 moves, far inside the box
        let cfg = ChainConfig { iterations: 100_000, seed: 3, adaptive: false, ..Default::default() };
        let t = run_chain(&specs, &mut FnBackend(|_: &[f64]| 1.5), &Theta(vec![0.0, 0.0]), &s0, &cfg).unwrap();
        assert_eq!(t.acceptance_rate(), 1.0);
    }

    #[test]
    fn single_forced_reject() {
        let specs = flat_specs(1);
        let s0 = ProposalCov::new(DMatrix::identity(1, 1), CovSource::Diagonal).unwrap();
        let cfg = ChainConfig { iterations: 1, ..Default::default() };
        let mut first = true;
        let mut be = FnBackend(move |_: &[f64]| {
            let v = if first { 0.0 } else { f64::NEG_INFINITY };
            first = false;
            v
        });
        let t = run_chain(&specs, &mut be, &Theta(vec![0.25]), &s0, &cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].theta, vec![0.25]);
        assert!(!t.rows[0].accepted);
    }

    #[test]
    fn rejected_rows_copy_previous() {
        let specs = flat_specs(2);
        let s0 = ProposalCov::new(DMatrix::identity(2, 2), CovSource::Diagonal).unwrap();
        let cfg = ChainConfig { iterations: 3000, seed: 9, switch_after: 50, ..Default::default() };
        let mut be = FnBackend(|x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let t = run_chain(&specs, &mut be, &Theta(vec![0.0, 0.0]), &s0, &cfg).unwrap();
        for w in t.rows.windows(2) {
            if !w[1].accepted {
                assert_eq!((&w[1].theta, w[1].loglik, w[1].logprior), (&w[0].theta, w[0].loglik, w[0].logprior));
            }
        }
        let sw = t.switched_at.unwrap();
        assert_eq!(t.rows[..sw].iter().filter(|r| r.accepted).count(), 50);
        // epsilon is frozen after the switch
        assert!(t.rows[sw + 1..].windows(2).all(|w| w[0].epsilon == w[1].epsilon));
        assert!(t.snapshots.iter().any(|s| s.iteration == sw));
        assert!(t.snapshots.iter().any(|s| s.iteration == 1000));
    }
}
