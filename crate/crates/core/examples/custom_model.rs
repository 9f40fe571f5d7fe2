//! A model written directly against `Dynamics`: an Ornstein–Uhlenbeck
//! process observed with noise, fitted with ksimplex and checked with the
//! particle filter.

use std::sync::Arc;

use plugplay::ekf::ekf_loglik;
use plugplay::integrate::IntegratorConfig;
use plugplay::model::{
    guess, simulate, Dynamics, JacobianPolicy, ModelDef, ObservationNoise, ObservationStream, ParamSpec, Schedule,
    SimulateOptions, StateRole, StreamKind, Transform,
};
use plugplay::optimize::{ksimplex, SimplexOptions};
use plugplay::smc::{run_pf, PfConfig};

/// `dx = -κ (x - μ) dt + s dW`, with `θ = (κ, μ)` and `s` fixed.
struct Ou {
    names: Vec<String>,
    roles: Vec<StateRole>,
    s: f64,
}

impl Dynamics for Ou {
    fn state_names(&self) -> &[String] {
        &self.names
    }

    fn roles(&self) -> &[StateRole] {
        &self.roles
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[f64], theta: &[f64], _t: f64, dx: &mut [f64]) {
        dx[0] = -theta[0] * (x[0] - theta[1]);
    }

    fn noise_loadings(&self, _x: &[f64], _theta: &[f64], _t: f64, g: &mut [f64]) {
        g[0] = self.s;
    }

    fn constant_noise(&self) -> bool {
        true
    }

    fn jacobian(&self, _x: &[f64], theta: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        jac[0] = -theta[0];
        true
    }

    fn initial(&self, _theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![1.0])
    }
}

fn main() -> plugplay::Result<()> {
    let ou = Ou { names: vec!["x".into()], roles: vec![StateRole::Other], s: 0.5 };
    let stream = ObservationStream {
        name: "y".into(),
        kind: StreamKind::Prevalence(vec![0]),
        noise: ObservationNoise { tau: 0.0, sigma_min: 0.3 },
    };
    let model = ModelDef::new(Arc::new(ou), vec![stream], JacobianPolicy::Analytic, 0.0)?;
    let specs = vec![
        ParamSpec::new("kappa", Transform::Log, 1.0, 0.1, 0.01, 10.0)?,
        ParamSpec::new("mu", Transform::Identity, 0.0, 0.1, -10.0, 10.0)?,
    ];

    let truth = [0.7, 2.0];
    let schedule = Schedule::regular(1, 0.5, 0.5, 200);
    let (series, _) = simulate(&model, &truth, &schedule, &SimulateOptions { seed: 11, ..Default::default() })?;

    let fit = ksimplex(&model, &specs, &series, &guess(&specs)?, &SimplexOptions::default())?;
    println!("truth {truth:?}, ksimplex {:.3?}", fit.natural);

    let ekf = ekf_loglik(&model, &fit.natural, &series, &IntegratorConfig::default());
    let pf = run_pf(&model, &fit.natural, &series, &PfConfig { particles: 2000, ..Default::default() })?;
    println!("loglik at the estimate: EKF {ekf:.3}, PF {:.3}", pf.loglik);
    Ok(())
}
