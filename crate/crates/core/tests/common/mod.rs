//! Shared fixtures: a linear SDE with an exact discrete Kalman filter computed
//! from matrix exponentials, independent of the crate's integrator and EKF.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use plugplay::model::{
    simulate, Dynamics, Frame, JacobianPolicy, ModelDef, ObservationNoise, ObservationSeries, ObservationStream,
    Schedule, SimulateOptions, StateRole, StreamKind,
};

/// `dx = (A x + b) dt + G dW`, `x(t0) ~ N(m0, P0)`.
#[derive(Debug, Clone)]
pub struct LinearSde {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    names: Vec<String>,
    roles: Vec<StateRole>,
}

impl LinearSde {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, g: DMatrix<f64>, m0: DVector<f64>, p0: DMatrix<f64>) -> Self {
        let k = a.nrows();
        LinearSde {
            names: (0..k).map(|i| format!("x{i}")).collect(),
            roles: vec![StateRole::Other; k],
            a,
            b,
            g,
            m0,
            p0,
        }
    }

    pub fn q(&self) -> DMatrix<f64> {
        &self.g * self.g.transpose()
    }
}

impl Dynamics for LinearSde {
    fn state_names(&self) -> &[String] {
        &self.names
    }

    fn roles(&self) -> &[StateRole] {
        &self.roles
    }

    fn noise_dim(&self) -> usize {
        self.g.ncols()
    }

    fn drift(&self, x: &[f64], _theta: &[f64], _t: f64, dx: &mut [f64]) {
        let v = &self.a * DVector::from_column_slice(x) + &self.b;
        dx.copy_from_slice(v.as_slice());
    }

    fn noise_loadings(&self, _x: &[f64], _theta: &[f64], _t: f64, g: &mut [f64]) {
        let m = self.g.ncols();
        for i in 0..self.g.nrows() {
            for j in 0..m {
                g[i * m + j] = self.g[(i, j)];
            }
        }
    }

    fn constant_noise(&self) -> bool {
        true
    }

    fn jacobian(&self, _x: &[f64], _theta: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        let k = self.a.nrows();
        for i in 0..k {
            for j in 0..k {
                jac[i * k + j] = self.a[(i, j)];
            }
        }
        true
    }

    fn initial(&self, _theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.a.nrows();
        let p: Vec<f64> = (0..k * k).map(|n| self.p0[(n / k, n % k)]).collect();
        (self.m0.as_slice().to_vec(), p)
    }
}

pub fn prevalence(name: &str, states: Vec<usize>, sigma: f64) -> ObservationStream {
    ObservationStream {
        name: name.into(),
        kind: StreamKind::Prevalence(states),
        noise: ObservationNoise { tau: 0.0, sigma_min: sigma },
    }
}

/// The two-state damped oscillator used by the Kalman oracles: stream `y0`
/// sees `x0`, stream `ysum` sees `x0 + x1`.
pub fn oscillator() -> (LinearSde, ModelDef) {
    let sde = LinearSde::new(
        DMatrix::from_row_slice(2, 2, &[-0.3, 0.8, -0.6, -0.2]),
        DVector::from_column_slice(&[0.5, -0.1]),
        DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.1, 0.3]),
        DVector::from_column_slice(&[1.0, -0.5]),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
    );
    let streams = vec![prevalence("y0", vec![0], 0.3), prevalence("ysum", vec![0, 1], 0.5)];
    let model = ModelDef::new(Arc::new(sde.clone()), streams, JacobianPolicy::Analytic, 0.0).unwrap();
    (sde, model)
}

/// 50 frames: 25 report times with both streams, a few values withheld.
pub fn oscillator_series(model: &ModelDef, seed: u64) -> ObservationSeries {
    let mut schedule = Schedule::regular(2, 0.5, 0.5, 25);
    schedule.streams[1].missing[3] = true;
    schedule.streams[0].missing[10] = true;
    let (series, _) = simulate(model, &[], &schedule, &SimulateOptions { seed, ..Default::default() }).unwrap();
    series
}

/// Exact transition over `dt`: `x' = F x + c + w`, `w ~ N(0, Qd)` (Van Loan).
pub fn discretize(sde: &LinearSde, dt: f64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let k = sde.a.nrows();
    // affine drift folded into an augmented state with a constant 1
    let n = k + 1;
    let mut aa = DMatrix::zeros(n, n);
    aa.view_mut((0, 0), (k, k)).copy_from(&sde.a);
    aa.view_mut((0, k), (k, 1)).copy_from(&sde.b);
    let mut qa = DMatrix::zeros(n, n);
    qa.view_mut((0, 0), (k, k)).copy_from(&sde.q());
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-&aa));
    m.view_mut((0, n), (n, n)).copy_from(&qa);
    m.view_mut((n, n), (n, n)).copy_from(&aa.transpose());
    let e = (m * dt).exp();
    let fa = e.view((n, n), (n, n)).transpose();
    let qd = &fa * e.view((0, n), (n, n));
    let f = fa.view((0, 0), (k, k)).into_owned();
    let c = fa.view((0, k), (k, 1)).column(0).into_owned();
    let mut qk = qd.view((0, 0), (k, k)).into_owned();
    qk = (&qk + qk.transpose()) * 0.5;
    (f, c, qk)
}

/// Exact discrete Kalman filter log-likelihood of `series` under `sde`, with
/// the streams given as row selectors and noise sd.
pub fn kalman_loglik(sde: &LinearSde, model: &ModelDef, series: &ObservationSeries) -> f64 {
    let k = sde.a.nrows();
    let mut m = sde.m0.clone();
    let mut p = sde.p0.clone();
    let mut t = model.t0;
    let mut ll = 0.0;
    for f in series.frames() {
        if f.time > t {
            let (fm, c, qd) = discretize(sde, f.time - t);
            m = &fm * &m + c;
            p = &fm * &p * fm.transpose() + qd;
            t = f.time;
        }
        let Some(y) = f.value else { continue };
        let stream = &model.streams[f.stream];
        let mut h = DVector::zeros(k);
        for &i in stream.indices() {
            h[i] = 1.0;
        }
        let r = stream.noise.sigma_min.powi(2);
        let s = (h.transpose() * &p * &h)[0] + r;
        let nu = y - h.dot(&m);
        let gain = &p * &h / s;
        m += &gain * nu;
        p = &p - &gain * h.transpose() * &p;
        p = (&p + p.transpose()) * 0.5;
        ll += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + nu * nu / s);
    }
    ll
}

pub fn frames_at(times: &[f64], stream: usize, values: &[f64]) -> Vec<Frame> {
    times.iter().zip(values).map(|(&time, &v)| Frame { time, stream, value: Some(v) }).collect()
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
