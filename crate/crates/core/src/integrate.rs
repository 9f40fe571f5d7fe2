//! Adaptive explicit Runge–Kutta integration (Dormand–Prince 5(4)).

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; clipped to the span.
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rtol: 1e-6, atol: 1e-6, h_init: 0.1, h_min: 1e-12, max_steps: 100_000 }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorConfig { rtol, atol, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.h_min > 0.0 && self.max_steps >= 1) {
            return Err(Error::Invalid("integrator tolerances, h_min and max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one [`integrate`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub state: Vec<f64>,
    /// Accepted steps.
    pub steps: usize,
    /// Step size the controller would try next; useful as `h_init` when the
    /// caller continues from `t1`.
    pub next_step: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Integrate `dx/dt = f(t, x)` from `t0` to `t1`, landing exactly on `t1`.
///
/// A step is accepted when the scaled RMS of the embedded error estimate,
/// measured against `atol + rtol·max(|x_old|, |x_new|)`, is at most one.
pub fn integrate<F>(mut f: F, x0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Integration>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::Invalid(format!("integration span [{t0}, {t1}] runs backwards")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("non-finite initial state at t = {t0}")));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    if t1 == t0 || n == 0 {
        return Ok(Integration { state: x, steps: 0, next_step: cfg.h_init });
    }

    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut t = t0;
    let mut h = cfg.h_init.abs().min(t1 - t0);
    if !(h > 0.0) {
        h = t1 - t0;
    }
    let mut steps = 0usize;
    let mut attempts = 0usize;
    f(t, &x, &mut k[0]);
    let mut next_step = h;

    while t < t1 {
        attempts += 1;
        if attempts > cfg.max_steps {
            return Err(Error::Budget { t, max_steps: cfg.max_steps });
        }
        let last = t + h >= t1;
        let h_try = if last { t1 - t } else { h };

        let (xo, tmp, xn) = (&x[..n], &mut tmp[..n], &mut x_new[..n]);
        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0][..n];
        let (k2, rest) = rest.split_at_mut(1);
        let k2 = &mut k2[0][..n];
        for i in 0..n {
            tmp[i] = xo[i] + h_try * A21 * k1[i];
        }
        f(t + C2 * h_try, tmp, k2);
        let (k3, rest) = rest.split_at_mut(1);
        let k3 = &mut k3[0][..n];
        for i in 0..n {
            tmp[i] = xo[i] + h_try * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h_try, tmp, k3);
        let (k4, rest) = rest.split_at_mut(1);
        let k4 = &mut k4[0][..n];
        for i in 0..n {
            tmp[i] = xo[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h_try, tmp, k4);
        let (k5, rest) = rest.split_at_mut(1);
        let k5 = &mut k5[0][..n];
        for i in 0..n {
            tmp[i] = xo[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h_try, tmp, k5);
        let (k6, rest) = rest.split_at_mut(1);
        let k6 = &mut k6[0][..n];
        for i in 0..n {
            tmp[i] = xo[i] + h_try * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h_try, tmp, k6);
        for i in 0..n {
            xn[i] = xo[i] + h_try * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        let k7 = &mut rest[0][..n];
        f(t + h_try, xn, k7);

        let mut acc = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = h_try * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.atol + cfg.rtol * xo[i].abs().max(xn[i].abs());
            let r = e / sc;
            acc += r * r;
            finite &= xn[i].is_finite() && k7[i].is_finite();
        }
        let err = (acc / n as f64).sqrt();

        if !finite || !err.is_finite() {
            // shrink hard and retry; give up once below h_min
            h = h_try * MIN_FACTOR;
            if h < cfg.h_min {
                return Err(Error::Divergence(format!("non-finite state near t = {t}")));
            }
            continue;
        }

        let factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
        if err <= 1.0 {
            t = if last { t1 } else { t + h_try };
            std::mem::swap(&mut x, &mut x_new);
            k.swap(0, 6);
            steps += 1;
            // a shortened landing step says little about the natural step size
            next_step = if last && h_try < h { h } else { h_try * factor };
            h = h_try * factor;
        } else {
            h = h_try * factor.min(1.0);
            if h < cfg.h_min {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    Ok(Integration { state: x, steps, next_step })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_exact() {
        let x0 = [1.5, -2.0, 3.25];
        let out = integrate(|_, _, d| d.iter_mut().for_each(|v| *v = 0.0), &x0, 0.0, 17.0, &Default::default()).unwrap();
        assert_eq!(out.state, x0);
    }

    #[test]
    fn empty_span() {
        let out = integrate(|_, x, d| d[0] = -x[0], &[2.0], 3.0, 3.0, &Default::default()).unwrap();
        assert_eq!(out.state, vec![2.0]);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn exponential_decay() {
        let cfg = IntegratorConfig::with_tolerances(1e-8, 1e-12);
        let out = integrate(|_, x, d| d[0] = -x[0], &[1.0], 0.0, 1.0, &cfg).unwrap();
        let exact = (-1.0f64).exp();
        assert!((out.state[0] - exact).abs() < 1e-8 * exact, "{}", out.state[0]);
    }

    #[test]
    fn rotation_returns_after_full_period() {
        let cfg = IntegratorConfig::with_tolerances(1e-9, 1e-12);
        let tau = 2.0 * std::f64::consts::PI;
        let out = integrate(|_, x, d| {
            d[0] = x[1];
            d[1] = -x[0];
        }, &[1.0, 0.5], 0.0, tau, &cfg)
        .unwrap();
        assert!((out.state[0] - 1.0).abs() < 1e-6 && (out.state[1] - 0.5).abs() < 1e-6, "{:?}", out.state);
    }

    #[test]
    fn error_paths() {
        let cfg = IntegratorConfig { max_steps: 3, h_init: 1e-3, ..Default::default() };
        assert!(matches!(integrate(|_, x, d| d[0] = -x[0], &[1.0], 0.0, 10.0, &cfg), Err(Error::Budget { .. })));
        let blowup = integrate(|_, x, d| d[0] = x[0] * x[0], &[1.0], 0.0, 2.0, &Default::default());
        assert!(matches!(blowup, Err(Error::StepUnderflow { .. }) | Err(Error::Divergence(_)) | Err(Error::Budget { .. })));
        assert!(integrate(|_, _, _| {}, &[f64::NAN], 0.0, 1.0, &Default::default()).is_err());
        assert!(integrate(|_, _, _| {}, &[1.0], 1.0, 0.0, &Default::default()).is_err());
    }
}
