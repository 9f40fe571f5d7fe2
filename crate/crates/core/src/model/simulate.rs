use rand::Rng;
use rand_distr::StandardNormal;

use super::def::{Frame, LatentPath, ModelDef, ObservationSeries, Schedule};
use crate::linalg::psd_cholesky;
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    /// Euler–Maruyama step; `None` uses a tenth of the smallest reporting gap.
    pub dt: Option<f64>,
    pub seed: u64,
    /// When false, reports equal the expected value exactly.
    pub observation_noise: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions { dt: None, seed: 0, observation_noise: true }
    }
}

/// Default Euler–Maruyama step for a schedule.
pub fn default_dt(schedule: &Schedule, t0: f64) -> f64 {
    schedule.min_gap(t0).map_or(0.1, |g| g / 10.0)
}

/// Scratch for repeated Euler–Maruyama steps on one state.
pub(crate) struct EulerStepper {
    drift: Vec<f64>,
    loadings: Vec<f64>,
    noise: Vec<f64>,
}

impl EulerStepper {
    pub(crate) fn new(model: &ModelDef) -> Self {
        let k = model.k();
        let m = model.noise_dim();
        EulerStepper { drift: vec![0.0; k], loadings: vec![0.0; k * m], noise: vec![0.0; m] }
    }

    /// Advance `x` from `t` by `h`. Returns false on a non-finite state.
    pub(crate) fn step<R: Rng>(&mut self, model: &ModelDef, theta: &[f64], x: &mut [f64], t: f64, h: f64, rng: &mut R) -> bool {
        let k = x.len();
        let m = self.noise.len();
        model.drift(x, theta, t, &mut self.drift);
        if m > 0 {
            model.noise_loadings(x, theta, t, &mut self.loadings);
            let sq = h.sqrt();
            for z in self.noise.iter_mut() {
                *z = rng.sample::<f64, _>(StandardNormal) * sq;
            }
        }
        for i in 0..k {
            let mut v = x[i] + self.drift[i] * h;
            if m > 0 {
                let row = &self.loadings[i * m..(i + 1) * m];
                v += row.iter().zip(&self.noise).map(|(g, z)| g * z).sum::<f64>();
            }
            x[i] = v;
        }
        model.constrain(x);
        x.iter().all(|v| v.is_finite())
    }

    /// Advance `x` from `t` to `t_end` with steps of at most `dt`; the final
    /// step is shortened to land on `t_end`. Calls `record` after every step.
    pub(crate) fn advance<R: Rng>(
        &mut self,
        model: &ModelDef,
        theta: &[f64],
        x: &mut [f64],
        t: f64,
        t_end: f64,
        dt: f64,
        rng: &mut R,
        mut record: impl FnMut(f64, &[f64]),
    ) -> bool {
        let span = t_end - t;
        if span <= 0.0 {
            return true;
        }
        let n = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
        let mut now = t;
        for i in 0..n {
            let next = if i + 1 == n { t_end } else { t + dt * (i + 1) as f64 };
            if !self.step(model, theta, x, now, next - now, rng) {
                return false;
            }
            now = next;
            record(now, x);
        }
        true
    }
}

/// Draw a latent path by Euler–Maruyama and the reports of every scheduled
/// stream. Incidence accumulators are zeroed right after each of their
/// reporting times (missing or not).
pub fn simulate(
    model: &ModelDef,
    theta_natural: &[f64],
    schedule: &Schedule,
    opts: &SimulateOptions,
) -> Result<(ObservationSeries, LatentPath)> {
    let dt = opts.dt.unwrap_or_else(|| default_dt(schedule, model.t0));
    if !(dt > 0.0) {
        return Err(Error::Invalid("dt must be positive".into()));
    }
    for s in &schedule.streams {
        if s.stream >= model.streams.len() || s.missing.len() != s.times.len() {
            return Err(Error::Invalid("schedule does not match the model's streams".into()));
        }
        if s.times.iter().any(|&t| t < model.t0) {
            return Err(Error::Invalid("schedule starts before the model".into()));
        }
    }
    let mut rng = stream_rng(opts.seed, 0);
    let (mean, cov) = model.initial(theta_natural);
    let mut x: Vec<f64> = mean.iter().copied().collect();
    if cov.iter().any(|&v| v != 0.0) {
        let l = psd_cholesky(&cov).ok_or_else(|| Error::Invalid("initial covariance is not PSD".into()))?;
        let z: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..x.len() {
            x[i] += (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
        }
        model.constrain(&mut x);
    }

    let mut path = LatentPath { times: vec![model.t0], states: vec![x.clone()] };
    let mut frames = Vec::new();
    let mut stepper = EulerStepper::new(model);
    let mut t = model.t0;
    for t_obs in schedule.times() {
        let ok = stepper.advance(model, theta_natural, &mut x, t, t_obs, dt, &mut rng, |tt, xs| {
            path.times.push(tt);
            path.states.push(xs.to_vec());
        });
        if !ok {
            return Err(Error::Divergence(format!("non-finite state before t = {t_obs}")));
        }
        t = t_obs;
        let mut resets = Vec::new();
        let mut reporting: Vec<(usize, bool)> = schedule
            .streams
            .iter()
            .flat_map(|s| s.times.iter().zip(&s.missing).filter(|(&tt, _)| tt == t_obs).map(move |(_, &miss)| (s.stream, miss)))
            .collect();
        reporting.sort_by_key(|r| r.0);
        for (stream_ix, miss) in reporting {
            let stream = &model.streams[stream_ix];
            let mu = stream.expected(&x);
            let z: f64 = rng.sample(StandardNormal);
            let value = if opts.observation_noise { mu + stream.noise.variance(mu).sqrt() * z } else { mu };
            frames.push(Frame { time: t_obs, stream: stream_ix, value: (!miss).then_some(value) });
            resets.extend_from_slice(stream.resets());
        }
        for i in resets {
            x[i] = 0.0;
        }
    }
    Ok((ObservationSeries::new(frames, model)?, path))
}
