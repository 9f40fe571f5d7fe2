//! Two-city SIS model with a log-scale diffusing reproduction number.
//!
//! Per city `c`, with `R_c = exp(logR_c)`:
//!
//! ```text
//! infection  = R_c / v · S_c · I_c / N_c
//! dS_c       = (I_c / v − infection) dt
//! dI_c       = (infection − I_c / v) dt
//! d logR_c   = σ_vol dW_c
//! d inc_c    = infection dt
//! ```
//!
//! State order is `[S1, I1, S2, I2, logR1, logR2, inc1, inc2]` (k = 8) and the
//! estimated parameters are `θ = {R₀¹(t₀), R₀²(t₀), v}`, all on the log scale.
//! Four streams are reported: grouped incidence of both cities from two
//! sources with different noise, city-2 incidence and city-1 prevalence.

use std::sync::Arc;

use super::def::{
    Dynamics, JacobianPolicy, ModelDef, ObservationNoise, ObservationStream, Schedule, StateRole, StreamKind,
    StreamSchedule,
};
use super::params::{ParamSpec, Transform};
use super::Problem;

const S1: usize = 0;
const I1: usize = 1;
const S2: usize = 2;
const I2: usize = 3;
const LOGR1: usize = 4;
const LOGR2: usize = 5;
const INC1: usize = 6;
const INC2: usize = 7;
const K: usize = 8;

/// Fixed settings of the bundled example.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoCityConfig {
    pub population: [f64; 2],
    pub initial_infected: [f64; 2],
    pub sigma_vol: f64,
    /// Reports every `step` days starting at `step`, `weeks` times.
    pub weeks: usize,
    pub step: f64,
    /// `(tau, sigma_min)` for grouped-CDC, grouped-FluTrend, city-2 incidence,
    /// city-1 prevalence.
    pub noise: [(f64, f64); 4],
    /// Natural-scale values used to generate the bundled data.
    pub truth: [f64; 3],
    pub guess: [f64; 3],
    pub sd_transf: f64,
    /// Apply the bundled missingness pattern.
    pub missing: bool,
}

impl Default for TwoCityConfig {
    fn default() -> Self {
        TwoCityConfig {
            population: [100_000.0, 50_000.0],
            initial_infected: [50.0, 20.0],
            sigma_vol: 0.02,
            weeks: 40,
            step: 7.0,
            noise: [(0.1, 2.0), (0.2, 2.0), (0.1, 2.0), (0.1, 2.0)],
            truth: [2.0, 1.6, 7.0],
            guess: [3.0, 3.0, 10.0],
            sd_transf: 0.05,
            missing: true,
        }
    }
}

pub const STREAM_NAMES: [&str; 4] = ["grouped_cdc", "grouped_flutrend", "incidence_city2", "prevalence_city1"];
pub const PARAM_NAMES: [&str; 3] = ["r0_1", "r0_2", "v"];

#[derive(Debug, Clone)]
pub struct TwoCitySi {
    names: Vec<String>,
    roles: Vec<StateRole>,
    population: [f64; 2],
    initial_infected: [f64; 2],
    sigma_vol: f64,
}

impl TwoCitySi {
    pub fn new(cfg: &TwoCityConfig) -> Self {
        TwoCitySi {
            names: ["S1", "I1", "S2", "I2", "logR1", "logR2", "inc1", "inc2"].iter().map(|s| s.to_string()).collect(),
            roles: vec![
                StateRole::Population,
                StateRole::Population,
                StateRole::Population,
                StateRole::Population,
                StateRole::Other,
                StateRole::Other,
                StateRole::Accumulator,
                StateRole::Accumulator,
            ],
            population: cfg.population,
            initial_infected: cfg.initial_infected,
            sigma_vol: cfg.sigma_vol,
        }
    }

    fn city(c: usize) -> (usize, usize, usize, usize) {
        if c == 0 {
            (S1, I1, LOGR1, INC1)
        } else {
            (S2, I2, LOGR2, INC2)
        }
    }
}

impl Dynamics for TwoCitySi {
    fn state_names(&self) -> &[String] {
        &self.names
    }

    fn roles(&self) -> &[StateRole] {
        &self.roles
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64], theta: &[f64], _t: f64, dx: &mut [f64]) {
        let v = theta[2];
        for c in 0..2 {
            let (s, i, lr, inc) = Self::city(c);
            let infection = x[lr].exp() / v * x[s] * x[i] / self.population[c];
            let recovery = x[i] / v;
            dx[s] = recovery - infection;
            dx[i] = infection - recovery;
            dx[lr] = 0.0;
            dx[inc] = infection;
        }
    }

    fn noise_loadings(&self, _x: &[f64], _theta: &[f64], _t: f64, g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        g[LOGR1 * 2] = self.sigma_vol;
        g[LOGR2 * 2 + 1] = self.sigma_vol;
    }

    fn constant_noise(&self) -> bool {
        true
    }

    fn jacobian(&self, x: &[f64], theta: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        let v = theta[2];
        jac.iter_mut().for_each(|e| *e = 0.0);
        for c in 0..2 {
            let (s, i, lr, inc) = Self::city(c);
            let rate = x[lr].exp() / v / self.population[c];
            let d_s = rate * x[i];
            let d_i = rate * x[s];
            let d_lr = rate * x[s] * x[i];
            // row s: recovery − infection
            jac[s * K + s] = -d_s;
            jac[s * K + i] = 1.0 / v - d_i;
            jac[s * K + lr] = -d_lr;
            jac[i * K + s] = d_s;
            jac[i * K + i] = d_i - 1.0 / v;
            jac[i * K + lr] = d_lr;
            jac[inc * K + s] = d_s;
            jac[inc * K + i] = d_i;
            jac[inc * K + lr] = d_lr;
        }
        true
    }

    fn initial(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut m = vec![0.0; K];
        for c in 0..2 {
            let (s, i, lr, _) = Self::city(c);
            m[s] = self.population[c] - self.initial_infected[c];
            m[i] = self.initial_infected[c];
            m[lr] = theta[c].ln();
        }
        (m, vec![0.0; K * K])
    }
}

/// The bundled two-city problem: model, parameter declarations and the
/// reporting schedule used for the bundled data.
pub fn build_two_city_si(cfg: &TwoCityConfig) -> Problem {
    let dynamics = Arc::new(TwoCitySi::new(cfg));
    let noise = |j: usize| ObservationNoise { tau: cfg.noise[j].0, sigma_min: cfg.noise[j].1 };
    let streams = vec![
        ObservationStream { name: STREAM_NAMES[0].into(), kind: StreamKind::Incidence(vec![INC1, INC2]), noise: noise(0) },
        ObservationStream { name: STREAM_NAMES[1].into(), kind: StreamKind::Incidence(vec![INC1, INC2]), noise: noise(1) },
        ObservationStream { name: STREAM_NAMES[2].into(), kind: StreamKind::Incidence(vec![INC2]), noise: noise(2) },
        ObservationStream { name: STREAM_NAMES[3].into(), kind: StreamKind::Prevalence(vec![I1]), noise: noise(3) },
    ];
    let model = ModelDef::new(dynamics, streams, JacobianPolicy::Analytic, 0.0).expect("bundled model is valid");
    let bounds = [(0.5, 20.0), (0.5, 20.0), (1.0, 30.0)];
    let params = (0..3)
        .map(|j| {
            ParamSpec::new(PARAM_NAMES[j], Transform::Log, cfg.guess[j], cfg.sd_transf, bounds[j].0, bounds[j].1)
                .expect("bundled parameter is valid")
        })
        .collect();
    Problem { model, params, schedule: two_city_schedule(cfg), truth: Some(cfg.truth.to_vec()), data: None }
}

/// Weekly reports for all four streams. With `cfg.missing`: the FluTrend
/// source starts in week 7, city-2 incidence drops weeks 10, 11 and 23, and
/// city-1 prevalence is surveyed every other week.
pub fn two_city_schedule(cfg: &TwoCityConfig) -> Schedule {
    let mut schedule = Schedule::regular(4, cfg.step, cfg.step, cfg.weeks);
    if cfg.missing {
        for (s, StreamSchedule { missing, .. }) in schedule.streams.iter_mut().enumerate() {
            for (w, m) in missing.iter_mut().enumerate() {
                let week = w + 1;
                *m = match s {
                    1 => week < 7,
                    2 => matches!(week, 10 | 11 | 23),
                    3 => week % 2 == 1,
                    _ => false,
                };
            }
        }
    }
    schedule
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let cfg = TwoCityConfig::default();
        let p = build_two_city_si(&cfg);
        let mut fd = p.model.clone();
        fd.jacobian = JacobianPolicy::Central { scale: 1e-6 };
        let x = [90_000.0, 9_000.0, 40_000.0, 8_000.0, 0.7, 0.4, 120.0, 80.0];
        let theta = [2.0, 1.6, 7.0];
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        let mut scratch = vec![0.0; 16];
        p.model.jacobian_into(&x, &theta, 0.0, &mut a, &mut scratch);
        fd.jacobian_into(&x, &theta, 0.0, &mut b, &mut scratch);
        for (u, w) in a.iter().zip(&b) {
            assert!((u - w).abs() <= 1e-5 * (1.0 + u.abs()), "{u} vs {w}");
        }
    }

    #[test]
    fn dimensions() {
        let p = build_two_city_si(&TwoCityConfig::default());
        assert_eq!(p.params.len(), 3);
        assert_eq!(p.model.k(), 8);
        assert_eq!(p.model.streams.len(), 4);
        // the poor start of the illustration is inside the prior support
        let theta = crate::model::to_transformed(&p.params, &[13.0, 13.0, 16.0]).unwrap();
        assert!(crate::model::log_prior(&p.params, &theta).is_finite());
    }
}
