use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::ekf::ekf_loglik;
use crate::integrate::IntegratorConfig;
use crate::model::{to_natural, ModelDef, ObservationSeries, ParamSpec, Theta};
use crate::parallel::pool;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Latin hypercube design in transformed space.
#[derive(Debug, Clone, PartialEq)]
pub struct LhsDesign {
    pub points: Vec<Theta>,
    /// `strata[j][i]`: stratum of point `i` along dimension `j`.
    pub strata: Vec<Vec<usize>>,
    pub bounds: Vec<(f64, f64)>,
}

impl LhsDesign {
    /// Wrap hand-picked points (e.g. to add a known value to a screen).
    pub fn from_points(points: Vec<Theta>) -> Self {
        LhsDesign { points, strata: Vec::new(), bounds: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `m` points over the transformed prior box: each dimension is cut into `m`
/// equal strata, strata are permuted independently per dimension and each
/// point is jittered uniformly inside its stratum.
pub fn lhs_sample(specs: &[ParamSpec], m: usize, seed: u64) -> Result<LhsDesign> {
    if m < 2 {
        return Err(Error::Invalid("a Latin hypercube needs at least two points".into()));
    }
    let mut bounds = Vec::with_capacity(specs.len());
    for s in specs {
        let (lo, hi) = s.transformed_bounds();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::UnboundedDimension(s.name.clone()));
        }
        bounds.push((lo, hi));
    }
    let mut rng = stream_rng(seed, 0);
    let mut strata = Vec::with_capacity(specs.len());
    let mut coords = vec![vec![0.0; specs.len()]; m];
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let w = (hi - lo) / m as f64;
        for (i, &s) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            let (a, b) = (lo + w * s as f64, lo + w * (s + 1) as f64);
            // rounding must not push the point onto the next stratum's edge
            coords[i][j] = (a + w * u).clamp(a, b.next_down().max(a));
        }
        strata.push(perm);
    }
    Ok(LhsDesign { points: coords.into_iter().map(Theta).collect(), strata, bounds })
}

/// A screened design point.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    /// Position in the design.
    pub index: usize,
    pub theta: Theta,
    pub loglik: f64,
}

/// EKF log-likelihood at every design point, best first. Diverged points
/// score `-inf` and ties keep design order, so the ranking does not depend on
/// `workers`.
pub fn lhs_screen(
    model: &ModelDef,
    specs: &[ParamSpec],
    series: &ObservationSeries,
    design: &LhsDesign,
    integrator: &IntegratorConfig,
    workers: usize,
) -> Vec<Ranked> {
    let eval = |(index, theta): (usize, &Theta)| {
        let ll = ekf_loglik(model, &to_natural(specs, theta), series, integrator);
        Ranked { index, theta: theta.clone(), loglik: if ll.is_nan() { f64::NEG_INFINITY } else { ll } }
    };
    let mut out: Vec<Ranked> = if workers <= 1 {
        design.points.iter().enumerate().map(eval).collect()
    } else {
        pool(workers).install(|| design.points.par_iter().enumerate().map(eval).collect())
    };
    out.sort_by(|a, b| b.loglik.total_cmp(&a.loglik).then(a.index.cmp(&b.index)));
    out
}
