//! Continuous-discrete extended Kalman filter.
//!
//! Between reports the mean and covariance follow
//!
//! ```text
//! dm/dt = f(m, θ, t)
//! dP/dt = F P + P Fᵀ + Q(m, θ, t),   F = ∂f/∂x
//! ```
//!
//! integrated as a single packed ODE (mean followed by the upper triangle of
//! `P`, row-major) with the adaptive integrator. Reports are scalar Gaussian
//! updates in Joseph form.

use nalgebra::{DMatrix, DVector};

use crate::integrate::{integrate, IntegratorConfig};
use crate::linalg::{packed_is_psd, symmetrize};
use crate::model::{gaussian_log_density, ModelDef, ObservationSeries, ObservationStream};
use crate::{Error, Result};

pub use crate::linalg::stabilize;

/// Mean and covariance of the latent state at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time: f64,
}

impl GaussianBelief {
    pub fn k(&self) -> usize {
        self.mean.len()
    }
}

/// Length of the packed vector: `k(k+1)/2 + k`.
pub const fn packed_len(k: usize) -> usize {
    k * (k + 1) / 2 + k
}

fn tri(k: usize, i: usize, j: usize) -> usize {
    // row-major upper triangle, i <= j
    i * k - i * (i + 1) / 2 + j
}

pub fn pack(belief: &GaussianBelief) -> Vec<f64> {
    let k = belief.k();
    let mut out = Vec::with_capacity(packed_len(k));
    out.extend(belief.mean.iter());
    for i in 0..k {
        for j in i..k {
            out.push(belief.cov[(i, j)]);
        }
    }
    out
}

pub fn unpack(packed: &[f64], k: usize, time: f64) -> Result<GaussianBelief> {
    if packed.len() != packed_len(k) {
        return Err(Error::LengthMismatch { expected: packed_len(k), got: packed.len() });
    }
    let mean = DVector::from_column_slice(&packed[..k]);
    let mut cov = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = packed[k + tri(k, i, j)];
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianBelief { mean, cov, time })
}

/// One report's view of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfRecord {
    pub time: f64,
    pub stream: usize,
    /// `h(m)` before the update.
    pub pred_mean: f64,
    /// Innovation variance `S = H P Hᵀ + v(h(m))`.
    pub pred_var: f64,
    pub innovation: f64,
    pub loglik_inc: f64,
    pub filtered: GaussianBelief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Sum of `loglik_inc` over non-missing frames; `-inf` when diverged.
    pub loglik: f64,
    pub records: Vec<EkfRecord>,
    pub diverged: bool,
    /// Why the filter diverged.
    pub failure: Option<String>,
}

/// Scratch buffers for the packed moment ODE.
struct MomentOde<'a> {
    model: &'a ModelDef,
    theta: &'a [f64],
    p: Vec<f64>,
    jac: Vec<f64>,
    a: Vec<f64>,
    q: Vec<f64>,
    g: Vec<f64>,
    scratch: Vec<f64>,
    /// `q` already holds the state-free diffusion.
    q_fixed: bool,
}

impl<'a> MomentOde<'a> {
    fn new(model: &'a ModelDef, theta: &'a [f64]) -> Self {
        let k = model.k();
        let mut ode = MomentOde {
            model,
            theta,
            p: vec![0.0; k * k],
            jac: vec![0.0; k * k],
            a: vec![0.0; k * k],
            q: vec![0.0; k * k],
            g: vec![0.0; k * model.noise_dim()],
            scratch: vec![0.0; 2 * k],
            q_fixed: false,
        };
        if model.constant_noise() {
            let x0 = vec![0.0; k];
            model.diffusion_into(&x0, theta, model.t0, &mut ode.g, &mut ode.q);
            ode.q_fixed = true;
        }
        ode
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let k = self.model.k();
        let (m, packed) = y.split_at(k);
        let (dm, out) = dy.split_at_mut(k);
        self.model.drift(m, self.theta, t, dm);
        self.model.jacobian_into(m, self.theta, t, &mut self.jac, &mut self.scratch);
        if !self.q_fixed {
            self.model.diffusion_into(m, self.theta, t, &mut self.g, &mut self.q);
        }
        macro_rules! fixed {
            ($($n:literal)*) => {
                match k {
                    $($n => covariance_rhs::<$n>(packed, &self.jac, &self.q, out),)*
                    _ => covariance_rhs_dyn(k, packed, &self.jac, &self.q, &mut self.p, &mut self.a, out),
                }
            };
        }
        fixed!(1 2 3 4 5 6 7 8 9 10 11 12);
    }
}

/// `dP = F P + P Fᵀ + Q` on packed storage, with stack arrays for small `k`.
fn covariance_rhs<const K: usize>(packed: &[f64], jac: &[f64], q: &[f64], out: &mut [f64]) {
    let mut p = [[0.0; K]; K];
    let mut ix = 0;
    for i in 0..K {
        for j in i..K {
            p[i][j] = packed[ix];
            p[j][i] = packed[ix];
            ix += 1;
        }
    }
    let mut a = [[0.0; K]; K];
    for i in 0..K {
        for l in 0..K {
            let f = jac[i * K + l];
            if f != 0.0 {
                for j in 0..K {
                    a[i][j] += f * p[l][j];
                }
            }
        }
    }
    let mut ix = 0;
    for i in 0..K {
        for j in i..K {
            out[ix] = a[i][j] + a[j][i] + q[i * K + j];
            ix += 1;
        }
    }
}

fn covariance_rhs_dyn(k: usize, packed: &[f64], jac: &[f64], q: &[f64], p: &mut [f64], a: &mut [f64], out: &mut [f64]) {
    let mut ix = 0;
    for i in 0..k {
        for j in i..k {
            p[i * k + j] = packed[ix];
            p[j * k + i] = packed[ix];
            ix += 1;
        }
    }
    // A = F P, skipping structural zeros of F
    for i in 0..k {
        let arow = &mut a[i * k..(i + 1) * k];
        arow.fill(0.0);
        for (l, &f) in jac[i * k..(i + 1) * k].iter().enumerate() {
            if f != 0.0 {
                for (av, pv) in arow.iter_mut().zip(&p[l * k..(l + 1) * k]) {
                    *av += f * pv;
                }
            }
        }
    }
    let mut ix = 0;
    for i in 0..k {
        for j in i..k {
            out[ix] = a[i * k + j] + a[j * k + i] + q[i * k + j];
            ix += 1;
        }
    }
}

/// Working state of a filter pass, kept packed between reports.
struct PackedFilter<'a> {
    ode: MomentOde<'a>,
    y: Vec<f64>,
    time: f64,
    h: f64,
    chol: Vec<f64>,
}

impl<'a> PackedFilter<'a> {
    fn new(model: &'a ModelDef, theta: &'a [f64], belief: &GaussianBelief, cfg: &IntegratorConfig) -> Self {
        PackedFilter { ode: MomentOde::new(model, theta), y: pack(belief), time: belief.time, h: cfg.h_init, chol: Vec::new() }
    }

    fn k(&self) -> usize {
        self.ode.model.k()
    }

    fn predict(&mut self, t_next: f64, cfg: &IntegratorConfig) -> Result<()> {
        if t_next < self.time {
            return Err(Error::Invalid(format!("cannot predict backwards from {} to {t_next}", self.time)));
        }
        if t_next == self.time {
            return Ok(());
        }
        let run_cfg = IntegratorConfig { h_init: self.h, ..*cfg };
        let ode = &mut self.ode;
        let out = integrate(|t, y, dy| ode.rhs(t, y, dy), &self.y, self.time, t_next, &run_cfg)?;
        self.y = out.state;
        self.h = out.next_step;
        self.time = t_next;
        self.ensure_psd()
    }

    /// Project the covariance when the cheap factorization check fails.
    fn ensure_psd(&mut self) -> Result<()> {
        let k = self.k();
        if packed_is_psd(&self.y[k..], k, &mut self.chol) {
            return Ok(());
        }
        let b = unpack(&self.y, k, self.time)?;
        let fixed = GaussianBelief { cov: stabilize(&b.cov), ..b };
        if fixed.cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("covariance lost finiteness at t = {}", self.time)));
        }
        self.y = pack(&fixed);
        Ok(())
    }

    fn update(&mut self, stream: &ObservationStream, value: f64) -> Result<(f64, f64, f64, f64)> {
        let k = self.k();
        update_packed(&mut self.y, k, stream, value)
    }

    fn reset(&mut self, accumulators: &[usize]) {
        let k = self.k();
        for &a in accumulators {
            self.y[a] = 0.0;
            for j in 0..k {
                let ix = if a <= j { tri(k, a, j) } else { tri(k, j, a) };
                self.y[k + ix] = 0.0;
            }
        }
    }

    fn belief(&self) -> GaussianBelief {
        unpack(&self.y, self.k(), self.time).expect("packed length is maintained")
    }
}

/// Propagate the belief to `t_next` through the moment ODE.
pub fn predict(
    belief: &GaussianBelief,
    model: &ModelDef,
    theta: &[f64],
    t_next: f64,
    cfg: &IntegratorConfig,
) -> Result<GaussianBelief> {
    let mut pf = PackedFilter::new(model, theta, belief, cfg);
    pf.predict(t_next, cfg)?;
    let mut b = pf.belief();
    symmetrize(&mut b.cov);
    Ok(b)
}

/// Scalar Joseph-form update of a packed belief. Returns
/// `(h(m), S, ν, log N(ν; 0, S))`.
fn update_packed(y: &mut [f64], k: usize, stream: &ObservationStream, value: f64) -> Result<(f64, f64, f64, f64)> {
    let idx = stream.indices();
    let (m, packed) = y.split_at_mut(k);
    let p = |i: usize, j: usize| if i <= j { packed[tri(k, i, j)] } else { packed[tri(k, j, i)] };
    let hm: f64 = idx.iter().map(|&i| m[i]).sum();
    let u: Vec<f64> = (0..k).map(|r| idx.iter().map(|&c| p(r, c)).sum()).collect();
    let hph: f64 = idx.iter().map(|&i| u[i]).sum();
    let v = stream.noise.variance(hm);
    let s = hph + v;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::SingularInnovation(s));
    }
    let nu = value - hm;
    let gain: Vec<f64> = u.iter().map(|x| x / s).collect();
    for i in 0..k {
        m[i] += gain[i] * nu;
    }
    // (I − K h) P (I − K h)ᵀ + v K Kᵀ expanded for a rank-one h, with P h = u
    // and h P h = hph
    for i in 0..k {
        for j in i..k {
            let cur = packed[tri(k, i, j)];
            packed[tri(k, i, j)] = cur - gain[i] * u[j] - u[i] * gain[j] + (hph + v) * gain[i] * gain[j];
        }
    }
    Ok((hm, s, nu, gaussian_log_density(nu, s)))
}

/// Condition on one report of `stream`; returns the filtered belief and the
/// log predictive density of the report.
pub fn update(belief: &GaussianBelief, stream: &ObservationStream, value: f64) -> Result<(GaussianBelief, f64)> {
    let k = belief.k();
    if stream.indices().iter().any(|&i| i >= k) {
        return Err(Error::Invalid(format!("stream `{}` does not fit a {k}-state belief", stream.name)));
    }
    let mut y = pack(belief);
    let (_, _, _, inc) = update_packed(&mut y, k, stream, value)?;
    Ok((unpack(&y, k, belief.time)?, inc))
}

/// Alternate prediction and update over the series. Missing frames only
/// advance time; accumulators of every stream scheduled at a time are zeroed
/// after that time's updates. Never fails: numerical trouble yields a
/// diverged output with `loglik = -inf`.
pub fn run_ekf(model: &ModelDef, theta: &[f64], series: &ObservationSeries, cfg: &IntegratorConfig) -> FilterOutput {
    run_inner(model, theta, series, cfg, true)
}

/// [`run_ekf`] without per-frame records, for samplers and optimizers.
pub fn ekf_loglik(model: &ModelDef, theta: &[f64], series: &ObservationSeries, cfg: &IntegratorConfig) -> f64 {
    run_inner(model, theta, series, cfg, false).loglik
}

fn run_inner(
    model: &ModelDef,
    theta: &[f64],
    series: &ObservationSeries,
    cfg: &IntegratorConfig,
    keep_records: bool,
) -> FilterOutput {
    let diverged = |records, why: String| FilterOutput { loglik: f64::NEG_INFINITY, records, diverged: true, failure: Some(why) };
    if theta.iter().any(|v| !v.is_finite()) {
        return diverged(Vec::new(), "non-finite parameters".into());
    }
    let (mean, cov) = model.initial(theta);
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return diverged(Vec::new(), "non-finite initial belief".into());
    }
    let init = GaussianBelief { mean, cov, time: model.t0 };
    let mut filter = PackedFilter::new(model, theta, &init, cfg);
    let mut records = Vec::new();
    let mut loglik = 0.0;
    for (t, frames) in series.groups() {
        if let Err(e) = filter.predict(t, cfg) {
            return diverged(records, e.to_string());
        }
        let mut resets = Vec::new();
        for f in frames {
            let stream = &model.streams[f.stream];
            resets.extend_from_slice(stream.resets());
            let Some(value) = f.value else { continue };
            match filter.update(stream, value) {
                Ok((pred_mean, pred_var, innovation, inc)) => {
                    loglik += inc;
                    if keep_records {
                        records.push(EkfRecord {
                            time: t,
                            stream: f.stream,
                            pred_mean,
                            pred_var,
                            innovation,
                            loglik_inc: inc,
                            filtered: filter.belief(),
                        });
                    }
                }
                Err(e) => return diverged(records, e.to_string()),
            }
        }
        filter.reset(&resets);
        if !loglik.is_finite() || filter.y.iter().any(|v| !v.is_finite()) {
            return diverged(records, format!("non-finite filter state at t = {t}"));
        }
    }
    FilterOutput { loglik, records, diverged: false, failure: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_lengths() {
        assert_eq!(packed_len(1), 2);
        assert_eq!(packed_len(5), 20);
        assert_eq!(packed_len(10), 65);
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        assert!(unpack(&[0.0; 5], 2, 0.0).is_ok());
        assert!(matches!(unpack(&[0.0; 4], 2, 0.0), Err(Error::LengthMismatch { expected: 5, got: 4 })));
    }
}
