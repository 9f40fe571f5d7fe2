use serde::{Deserialize, Serialize};

use crate::ekf::ekf_loglik;
use crate::integrate::IntegratorConfig;
use crate::model::{deterministic_collapse, log_prior, to_natural, ModelDef, ObservationSeries, ParamSpec, Theta};
use crate::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    /// Stop when the spread of vertex values falls to this.
    pub tol_f: f64,
    /// Stop when the simplex diameter falls to this.
    pub tol_x: f64,
    /// Checked between iterations, so the last iteration may overshoot by up
    /// to `d + 1` evaluations (a shrink).
    pub max_evals: usize,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { tol_f: 1e-6, tol_x: 1e-6, max_evals: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TolF,
    TolX,
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Working simplex: `d + 1` vertices with their values, kept best first.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState {
    pub vertices: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub iterations: usize,
}

impl SimplexState {
    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]));
        self.vertices = order.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    fn spread(&self) -> f64 {
        let (best, worst) = (self.values[0], *self.values.last().unwrap());
        if best == worst {
            0.0
        } else {
            best - worst
        }
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
            }
        }
        d
    }
}

/// Maximize `objective` with the classic Nelder–Mead moves, starting from
/// `init` and the vertices `init + step[i]·e_i`. `-inf` (or NaN) marks an
/// infeasible point. The returned point is the best ever evaluated.
pub fn nelder_mead<F>(mut objective: F, init: &[f64], step: &[f64], opts: &NmOptions) -> Result<NmResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let d = init.len();
    if step.len() != d {
        return Err(Error::LengthMismatch { expected: d, got: step.len() });
    }
    if d == 0 || init.iter().chain(step).any(|v| !v.is_finite()) || step.contains(&0.0) {
        return Err(Error::Degenerate("initial simplex has a zero or non-finite edge".into()));
    }
    let mut evals = 0usize;
    let mut best: (Vec<f64>, f64) = (init.to_vec(), f64::NEG_INFINITY);
    let mut f = |x: &[f64], evals: &mut usize, best: &mut (Vec<f64>, f64)| {
        *evals += 1;
        let v = objective(x);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if v > best.1 || *evals == 1 {
            *best = (x.to_vec(), v);
        }
        v
    };

    let mut s = SimplexState { vertices: Vec::with_capacity(d + 1), values: Vec::with_capacity(d + 1), iterations: 0 };
    s.vertices.push(init.to_vec());
    for i in 0..d {
        let mut v = init.to_vec();
        v[i] += step[i];
        if v[i] == init[i] {
            return Err(Error::Degenerate(format!("step {} vanishes against {}", step[i], init[i])));
        }
        s.vertices.push(v);
    }
    for i in 0..=d {
        let v = f(&s.vertices[i], &mut evals, &mut best);
        s.values.push(v);
    }
    if s.values.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Divergence(format!("objective is -inf at every initial vertex around {init:?}")));
    }

    let stop = loop {
        s.sort();
        if s.spread() <= opts.tol_f {
            break StopReason::TolF;
        }
        if s.diameter() <= opts.tol_x {
            break StopReason::TolX;
        }
        if evals >= opts.max_evals {
            break StopReason::Budget;
        }
        s.iterations += 1;
        let centroid: Vec<f64> =
            (0..d).map(|j| s.vertices[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64).collect();
        let toward = |t: &[f64], c: f64| -> Vec<f64> { centroid.iter().zip(t).map(|(m, x)| m + c * (x - m)).collect() };
        let worst = s.vertices[d].clone();
        let fw = s.values[d];
        let xr = toward(&worst, -REFLECT);
        let fr = f(&xr, &mut evals, &mut best);
        if fr > s.values[0] {
            let xe = toward(&xr, EXPAND);
            let fe = f(&xe, &mut evals, &mut best);
            if fe > fr {
                (s.vertices[d], s.values[d]) = (xe, fe);
            } else {
                (s.vertices[d], s.values[d]) = (xr, fr);
            }
            continue;
        }
        if fr > s.values[d - 1] {
            (s.vertices[d], s.values[d]) = (xr, fr);
            continue;
        }
        let (xc, fc, ok) = if fr > fw {
            let xc = toward(&xr, CONTRACT);
            let fc = f(&xc, &mut evals, &mut best);
            let ok = fc >= fr;
            (xc, fc, ok)
        } else {
            let xc = toward(&worst, CONTRACT);
            let fc = f(&xc, &mut evals, &mut best);
            let ok = fc > fw;
            (xc, fc, ok)
        };
        if ok {
            (s.vertices[d], s.values[d]) = (xc, fc);
            continue;
        }
        let x0 = s.vertices[0].clone();
        for i in 1..=d {
            let v: Vec<f64> = x0.iter().zip(&s.vertices[i]).map(|(b, x)| b + SHRINK * (x - b)).collect();
            s.values[i] = f(&v, &mut evals, &mut best);
            s.vertices[i] = v;
        }
    };
    Ok(NmResult { theta: best.0, value: best.1, evals, iterations: s.iterations, stop })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub nm: NmOptions,
    pub integrator: IntegratorConfig,
    /// Add the log prior to the likelihood (MAP); bounds then act as barriers.
    pub with_prior: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { nm: NmOptions::default(), integrator: IntegratorConfig::default(), with_prior: true }
    }
}

/// Result of [`ksimplex`] / [`simplex`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub theta: Theta,
    pub natural: Vec<f64>,
    /// Value that was maximized.
    pub objective: f64,
    pub loglik: f64,
    pub evals: usize,
    pub stop: StopReason,
}

/// Nelder–Mead over `loglik_EKF + log_prior` in transformed space, with
/// initial steps `sd_transf`.
pub fn ksimplex(
    model: &ModelDef,
    specs: &[ParamSpec],
    series: &ObservationSeries,
    theta_init: &Theta,
    opts: &SimplexOptions,
) -> Result<MapEstimate> {
    let objective = |th: &[f64]| {
        let theta = Theta(th.to_vec());
        let lp = log_prior(specs, &theta);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let ll = ekf_loglik(model, &to_natural(specs, &theta), series, &opts.integrator);
        if opts.with_prior {
            ll + lp
        } else {
            ll
        }
    };
    let step: Vec<f64> = specs.iter().map(|s| s.sd_transf).collect();
    let r = nelder_mead(objective, theta_init.as_slice(), &step, &opts.nm)?;
    let theta = Theta(r.theta);
    let natural = to_natural(specs, &theta);
    let loglik = ekf_loglik(model, &natural, series, &opts.integrator);
    Ok(MapEstimate { theta, natural, objective: r.value, loglik, evals: r.evals, stop: r.stop })
}

/// [`ksimplex`] on the deterministic skeleton of `model` (ODE likelihood).
pub fn simplex(
    model: &ModelDef,
    specs: &[ParamSpec],
    series: &ObservationSeries,
    theta_init: &Theta,
    opts: &SimplexOptions,
) -> Result<MapEstimate> {
    ksimplex(&deterministic_collapse(model), specs, series, theta_init, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_objective_stops_at_once() {
        let r = nelder_mead(|_| 3.0, &[1.0, 2.0], &[0.1, 0.1], &NmOptions::default()).unwrap();
        assert_eq!(r.stop, StopReason::TolF);
        assert_eq!(r.evals, 3);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn degenerate_start() {
        assert!(matches!(nelder_mead(|_| 0.0, &[1.0, 2.0], &[0.1, 0.0], &NmOptions::default()), Err(Error::Degenerate(_))));
        assert!(nelder_mead(|_| f64::NEG_INFINITY, &[1.0], &[0.1], &NmOptions::default()).is_err());
    }

    #[test]
    fn budget_is_reported() {
        let opts = NmOptions { tol_f: 0.0, tol_x: 0.0, max_evals: 20 };
        let r = nelder_mead(|x| -x[0] * x[0] - x[1] * x[1], &[3.0, -2.0], &[1.0, 1.0], &opts).unwrap();
        assert_eq!(r.stop, StopReason::Budget);
        assert!(r.evals >= 20);
    }

    #[test]
    fn escapes_infeasible_vertex() {
        // one initial vertex is infeasible
        let obj = |x: &[f64]| if x[0] > 1.05 { f64::NEG_INFINITY } else { -(x[0] - 0.2).powi(2) };
        let r = nelder_mead(obj, &[1.0], &[0.1], &NmOptions::default()).unwrap();
        assert!((r.theta[0] - 0.2).abs() < 1e-3);
    }
}
