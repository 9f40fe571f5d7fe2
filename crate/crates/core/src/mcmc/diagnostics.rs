//! Effective sample size, relative efficiency and posterior summaries.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::{Error, Result};

/// Autocorrelations `ρ̂_0..ρ̂_{N-1}` with the biased (`1/N`) autocovariance.
/// `None` when the series has zero variance.
pub fn autocorrelation(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 1e-300 * n as f64) {
        return None;
    }
    Some(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Shortest series [`ess`] accepts.
pub const MIN_SAMPLES: usize = 10;

/// `N / (1 + 2 Σ ρ̂_t)`, summing lags until the first `t` with
/// `ρ̂_t + ρ̂_{t+1} < 0`, clamped to `[1, N]`. A constant series gives 1.
pub fn ess(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < MIN_SAMPLES {
        return Err(Error::NotEnoughSamples { have: n, need: MIN_SAMPLES });
    }
    let Some(rho) = autocorrelation(x) else {
        return Ok(1.0);
    };
    let mut sum = 0.0;
    let mut t = 1;
    while t + 1 < n && rho[t] + rho[t + 1] >= 0.0 {
        sum += rho[t];
        t += 1;
    }
    Ok((n as f64 / (1.0 + 2.0 * sum)).clamp(1.0, n as f64))
}

/// ESS of every column.
pub fn ess_columns(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    columns.iter().map(|c| ess(c)).collect()
}

/// Smallest per-component ESS ratio between two runs on the same target.
pub fn relative_efficiency(columns: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if columns.len() != reference.len() || columns.is_empty() {
        return Err(Error::LengthMismatch { expected: reference.len(), got: columns.len() });
    }
    let a = ess_columns(columns)?;
    let b = ess_columns(reference)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x / y).fold(f64::INFINITY, f64::min))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// `bins` equal-width bins over the sample range; the last bin is closed.
/// A constant sample puts everything in one bin of width zero.
pub fn histogram(x: &[f64], bins: usize) -> Vec<Bin> {
    let bins = bins.max(1);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.is_empty() || !(hi > lo) {
        let v = if x.is_empty() { 0.0 } else { lo };
        return vec![Bin { left: v, right: v, count: x.len() }];
    }
    let w = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> =
        (0..bins).map(|b| Bin { left: lo + w * b as f64, right: if b + 1 == bins { hi } else { lo + w * (b + 1) as f64 }, count: 0 }).collect();
    for &v in x {
        let b = (((v - lo) / w) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}

/// Per-parameter posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub ess: f64,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

pub fn summarize(name: &str, x: &[f64]) -> ParamSummary {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        ess: ess(x).unwrap_or(x.len() as f64),
        mean,
        sd: var.sqrt(),
        q025: quantile_sorted(&s, 0.025),
        q50: quantile_sorted(&s, 0.5),
        q975: quantile_sorted(&s, 0.975),
    }
}
