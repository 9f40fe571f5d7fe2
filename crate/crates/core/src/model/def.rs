use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What a state component represents. Populations are kept non-negative by
/// the stochastic propagators; accumulators are reset at reporting times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateRole {
    Population,
    Accumulator,
    Other,
}

/// Model-specific code: the drift `f`, the noise loadings `G` (so that the
/// diffusion intensity is `Q = G Gᵀ`) and the initial belief.
///
/// `theta` is always the natural-scale parameter vector. Implementations must
/// hold no mutable shared state: every method may be called concurrently.
pub trait Dynamics: Send + Sync {
    fn state_names(&self) -> &[String];

    fn roles(&self) -> &[StateRole];

    fn dim(&self) -> usize {
        self.state_names().len()
    }

    /// Number of independent Brownian drivers (columns of `G`).
    fn noise_dim(&self) -> usize;

    fn drift(&self, x: &[f64], theta: &[f64], t: f64, dx: &mut [f64]);

    /// Row-major `k × noise_dim` loadings.
    fn noise_loadings(&self, x: &[f64], theta: &[f64], t: f64, g: &mut [f64]);

    /// True when the loadings depend on `theta` only, so `Q` can be computed
    /// once per filter pass.
    fn constant_noise(&self) -> bool {
        false
    }

    /// Analytic `∂f/∂x`, row-major `k × k`. Returns `false` when not provided.
    fn jacobian(&self, _x: &[f64], _theta: &[f64], _t: f64, _jac: &mut [f64]) -> bool {
        false
    }

    /// Mean and row-major covariance of the state at `t0`.
    fn initial(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianPolicy {
    /// Use [`Dynamics::jacobian`], falling back to finite differences when the
    /// model does not supply one.
    Analytic,
    /// Central differences with step `scale·(1 + |x_i|)`.
    Central { scale: f64 },
}

impl Default for JacobianPolicy {
    fn default() -> Self {
        JacobianPolicy::Central { scale: 1e-6 }
    }
}

/// Gaussian observation noise with variance `(tau·expected)² + sigma_min²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub tau: f64,
    pub sigma_min: f64,
}

impl ObservationNoise {
    pub fn variance(&self, expected: f64) -> f64 {
        let rel = self.tau * expected;
        rel * rel + self.sigma_min * self.sigma_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    /// Instantaneous value of the sum of the listed states.
    Prevalence(Vec<usize>),
    /// Sum of the listed accumulators since the stream's previous report.
    Incidence(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    pub name: String,
    pub kind: StreamKind,
    pub noise: ObservationNoise,
}

impl ObservationStream {
    pub fn indices(&self) -> &[usize] {
        match &self.kind {
            StreamKind::Prevalence(ix) | StreamKind::Incidence(ix) => ix,
        }
    }

    /// Accumulators to zero after this stream reports.
    pub fn resets(&self) -> &[usize] {
        match &self.kind {
            StreamKind::Prevalence(_) => &[],
            StreamKind::Incidence(ix) => ix,
        }
    }

    /// `h(x)`: the observed linear combination.
    pub fn expected(&self, x: &[f64]) -> f64 {
        self.indices().iter().map(|&i| x[i]).sum()
    }

    pub fn log_density(&self, value: f64, x: &[f64]) -> f64 {
        let mu = self.expected(x);
        gaussian_log_density(value - mu, self.noise.variance(mu))
    }
}

pub fn gaussian_log_density(residual: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + residual * residual / var)
}

/// A state-space model: dynamics plus observation streams.
#[derive(Clone)]
pub struct ModelDef {
    dynamics: Arc<dyn Dynamics>,
    pub streams: Vec<ObservationStream>,
    pub jacobian: JacobianPolicy,
    pub t0: f64,
    collapsed: bool,
}

impl fmt::Debug for ModelDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelDef")
            .field("states", &self.dynamics.state_names())
            .field("streams", &self.streams)
            .field("jacobian", &self.jacobian)
            .field("t0", &self.t0)
            .field("collapsed", &self.collapsed)
            .finish()
    }
}

impl ModelDef {
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        streams: Vec<ObservationStream>,
        jacobian: JacobianPolicy,
        t0: f64,
    ) -> Result<Self> {
        let k = dynamics.dim();
        if k == 0 || dynamics.roles().len() != k {
            return Err(Error::Invalid("state names and roles must be non-empty and aligned".into()));
        }
        for s in &streams {
            if s.indices().is_empty() || s.indices().iter().any(|&i| i >= k) {
                return Err(Error::Invalid(format!("stream `{}` references unknown states", s.name)));
            }
            if let StreamKind::Incidence(ix) = &s.kind {
                if ix.iter().any(|&i| dynamics.roles()[i] != StateRole::Accumulator) {
                    return Err(Error::Invalid(format!("incidence stream `{}` must read accumulators", s.name)));
                }
            }
            if !(s.noise.sigma_min > 0.0) || !(s.noise.tau >= 0.0) {
                return Err(Error::Invalid(format!("stream `{}` needs sigma_min > 0 and tau >= 0", s.name)));
            }
        }
        for (i, a) in streams.iter().enumerate() {
            if streams[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Invalid(format!("duplicate stream `{}`", a.name)));
            }
        }
        Ok(ModelDef { dynamics, streams, jacobian, t0, collapsed: false })
    }

    pub fn k(&self) -> usize {
        self.dynamics.dim()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn state_names(&self) -> &[String] {
        self.dynamics.state_names()
    }

    pub fn roles(&self) -> &[StateRole] {
        self.dynamics.roles()
    }

    pub fn noise_dim(&self) -> usize {
        if self.collapsed {
            0
        } else {
            self.dynamics.noise_dim()
        }
    }

    /// `Q` is fixed for a given `theta` (collapsed, or loadings free of `x` and `t`).
    pub fn constant_noise(&self) -> bool {
        self.collapsed || self.dynamics.constant_noise()
    }

    /// True when the diffusion has been switched off.
    pub fn is_collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn stream_index(&self, name: &str) -> Option<usize> {
        self.streams.iter().position(|s| s.name == name)
    }

    pub fn drift(&self, x: &[f64], theta: &[f64], t: f64, dx: &mut [f64]) {
        self.dynamics.drift(x, theta, t, dx)
    }

    /// Loadings `G` (row-major `k × noise_dim`); empty once collapsed.
    pub fn noise_loadings(&self, x: &[f64], theta: &[f64], t: f64, g: &mut [f64]) {
        if !self.collapsed {
            self.dynamics.noise_loadings(x, theta, t, g)
        }
    }

    /// Diffusion intensity `Q = G Gᵀ`, row-major, written into `q`.
    pub fn diffusion_into(&self, x: &[f64], theta: &[f64], t: f64, g: &mut [f64], q: &mut [f64]) {
        let k = self.k();
        let m = self.noise_dim();
        q.fill(0.0);
        if m == 0 {
            return;
        }
        self.noise_loadings(x, theta, t, g);
        let (g, q) = (&g[..k * m], &mut q[..k * k]);
        for i in 0..k {
            let gi = &g[i * m..(i + 1) * m];
            if gi.iter().all(|&v| v == 0.0) {
                continue;
            }
            for j in i..k {
                let s: f64 = gi.iter().zip(&g[j * m..(j + 1) * m]).map(|(a, b)| a * b).sum();
                q[i * k + j] = s;
                q[j * k + i] = s;
            }
        }
    }

    pub fn diffusion(&self, x: &[f64], theta: &[f64], t: f64) -> DMatrix<f64> {
        let k = self.k();
        let mut g = vec![0.0; k * self.noise_dim()];
        let mut q = vec![0.0; k * k];
        self.diffusion_into(x, theta, t, &mut g, &mut q);
        DMatrix::from_row_slice(k, k, &q)
    }

    /// `∂f/∂x` row-major into `jac`, per the model's [`JacobianPolicy`].
    /// `scratch` must hold `2k` values.
    pub fn jacobian_into(&self, x: &[f64], theta: &[f64], t: f64, jac: &mut [f64], scratch: &mut [f64]) {
        let scale = match self.jacobian {
            JacobianPolicy::Analytic => {
                if self.dynamics.jacobian(x, theta, t, jac) {
                    return;
                }
                1e-6
            }
            JacobianPolicy::Central { scale } => scale,
        };
        let k = self.k();
        let (fp, fm) = scratch.split_at_mut(k);
        let mut xp = x.to_vec();
        for j in 0..k {
            let h = scale * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            self.dynamics.drift(&xp, theta, t, fp);
            xp[j] = x[j] - h;
            self.dynamics.drift(&xp, theta, t, &mut fm[..k]);
            xp[j] = x[j];
            for i in 0..k {
                jac[i * k + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    /// Initial mean and covariance; the covariance is zero once collapsed.
    pub fn initial(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k();
        let (m, p) = self.dynamics.initial(theta);
        let p = if self.collapsed { DMatrix::zeros(k, k) } else { DMatrix::from_row_slice(k, k, &p) };
        (DVector::from_vec(m), p)
    }

    /// Clamp population compartments and accumulators at zero.
    pub fn constrain(&self, x: &mut [f64]) {
        for (v, role) in x.iter_mut().zip(self.roles()) {
            if *role != StateRole::Other && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Copy of `model` with the diffusion switched off (`Q ≡ 0`) and a
/// deterministic initial state. Idempotent.
pub fn deterministic_collapse(model: &ModelDef) -> ModelDef {
    let mut m = model.clone();
    m.collapsed = true;
    m
}

/// One datum: a stream's report at a time, or `None` when missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub stream: usize,
    pub value: Option<f64>,
}

/// Time-ordered frames across the model's streams.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSeries {
    frames: Vec<Frame>,
}

impl ObservationSeries {
    pub fn new(frames: Vec<Frame>, model: &ModelDef) -> Result<Self> {
        for w in frames.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::Invalid(format!("frame times decrease at t = {}", w[1].time)));
            }
        }
        for f in &frames {
            if f.stream >= model.streams.len() {
                return Err(Error::Invalid(format!("frame references unknown stream #{}", f.stream)));
            }
            if !f.time.is_finite() || f.time < model.t0 {
                return Err(Error::Invalid(format!("frame time {} precedes the model start", f.time)));
            }
            if matches!(f.value, Some(v) if !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite value at t = {}", f.time)));
            }
        }
        Ok(ObservationSeries { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of non-missing frames.
    pub fn n(&self) -> usize {
        self.frames.iter().filter(|f| f.value.is_some()).count()
    }

    /// Frames grouped by identical time, in order.
    pub fn groups(&self) -> Vec<(f64, &[Frame])> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.frames.len() {
            let t = self.frames[start].time;
            let mut end = start + 1;
            while end < self.frames.len() && self.frames[end].time == t {
                end += 1;
            }
            out.push((t, &self.frames[start..end]));
            start = end;
        }
        out
    }

    /// Default Euler–Maruyama step: a tenth of the smallest positive gap
    /// between distinct report times (counting from `t0`).
    pub fn default_dt(&self, t0: f64) -> f64 {
        let mut prev = t0;
        let mut best = f64::INFINITY;
        for (t, _) in self.groups() {
            if t > prev {
                best = best.min(t - prev);
            }
            prev = t;
        }
        if best.is_finite() {
            best / 10.0
        } else {
            0.1
        }
    }

    /// Keep only frames with `time <= t_max`.
    pub fn truncated(&self, t_max: f64) -> Self {
        ObservationSeries { frames: self.frames.iter().copied().filter(|f| f.time <= t_max).collect() }
    }
}

/// Ground-truth path recorded by the simulator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Reporting times for one stream, with a missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSchedule {
    pub stream: usize,
    pub times: Vec<f64>,
    /// `missing[i]` hides the report at `times[i]` (the accumulator still resets).
    pub missing: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub streams: Vec<StreamSchedule>,
}

impl Schedule {
    /// Same regular grid `start, start+step, …` (`count` times) for every stream.
    pub fn regular(n_streams: usize, start: f64, step: f64, count: usize) -> Self {
        let times: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
        Schedule {
            streams: (0..n_streams)
                .map(|s| StreamSchedule { stream: s, times: times.clone(), missing: vec![false; count] })
                .collect(),
        }
    }

    /// Sorted union of all reporting times.
    pub fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.streams.iter().flat_map(|s| s.times.iter().copied()).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Smallest gap between consecutive reporting times (including from `t0`).
    pub fn min_gap(&self, t0: f64) -> Option<f64> {
        let mut prev = t0;
        let mut best: Option<f64> = None;
        for t in self.times() {
            let gap = t - prev;
            if gap > 0.0 {
                best = Some(best.map_or(gap, |b: f64| b.min(gap)));
            }
            prev = t;
        }
        best
    }
}
