//! Parameter metadata, the transformed parameter vector and the prior.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Map between the natural parameter scale and the unconstrained scale the
/// samplers and optimizers move in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
    /// Logit on the parameter's `[min, max]` bounds.
    Logit,
}

/// Declaration of one estimated parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub transform: Transform,
    /// Natural-scale starting value.
    pub guess: f64,
    /// Proposal standard deviation on the transformed scale.
    pub sd_transf: f64,
    pub min: f64,
    pub max: f64,
}

impl ParamSpec {
    pub fn new(name: &str, transform: Transform, guess: f64, sd_transf: f64, min: f64, max: f64) -> Result<Self> {
        let spec = ParamSpec { name: name.to_string(), transform, guess, sd_transf, min, max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::Invalid(format!("parameter `{}`: {why}", self.name)));
        if !(self.sd_transf > 0.0 && self.sd_transf.is_finite()) {
            return bad("sd_transf must be positive");
        }
        if !(self.min < self.max) {
            return bad("min must be below max");
        }
        if !(self.min < self.guess && self.guess < self.max) {
            return bad("guess must lie strictly inside the bounds");
        }
        if self.transform == Transform::Log && self.guess <= 0.0 {
            return bad("log transform needs a positive guess");
        }
        if self.transform == Transform::Log && self.min < 0.0 {
            return bad("log transform needs non-negative bounds");
        }
        Ok(())
    }

    /// Natural → transformed.
    pub fn forward(&self, x: f64) -> Result<f64> {
        let out = match self.transform {
            Transform::Identity => x,
            Transform::Log => {
                if !(x > 0.0) {
                    return Err(self.out_of_domain(x));
                }
                x.ln()
            }
            Transform::Logit => {
                if !(x > self.min && x < self.max) {
                    return Err(self.out_of_domain(x));
                }
                let p = (x - self.min) / (self.max - self.min);
                (p / (1.0 - p)).ln()
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(self.out_of_domain(x))
        }
    }

    /// Transformed → natural.
    pub fn inverse(&self, y: f64) -> f64 {
        match self.transform {
            Transform::Identity => y,
            Transform::Log => y.exp(),
            Transform::Logit => self.min + (self.max - self.min) * sigmoid(y),
        }
    }

    /// `log |dx/dy|` at transformed value `y`.
    fn log_jacobian(&self, y: f64) -> f64 {
        match self.transform {
            Transform::Identity => 0.0,
            Transform::Log => y,
            Transform::Logit => (self.max - self.min).ln() + log_sigmoid(y) + log_sigmoid(-y),
        }
    }

    /// Transformed-scale image of the bounds. Infinite for logit, and for log
    /// with a zero lower bound.
    pub fn transformed_bounds(&self) -> (f64, f64) {
        match self.transform {
            Transform::Identity => (self.min, self.max),
            Transform::Log => (self.min.ln(), self.max.ln()),
            Transform::Logit => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Log density of the uniform prior on `[min, max]`, expressed on the
    /// transformed scale.
    pub fn log_prior(&self, y: f64) -> f64 {
        let x = self.inverse(y);
        if !y.is_finite() || x < self.min || x > self.max {
            return f64::NEG_INFINITY;
        }
        -(self.max - self.min).ln() + self.log_jacobian(y)
    }

    fn out_of_domain(&self, value: f64) -> Error {
        Error::OutOfDomain { name: self.name.clone(), value }
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        -(-y).exp().ln_1p()
    } else {
        y - y.exp().ln_1p()
    }
}

/// A point in the transformed (unconstrained) parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta(pub Vec<f64>);

impl Theta {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Map natural-scale values onto the transformed scale.
pub fn to_transformed(specs: &[ParamSpec], natural: &[f64]) -> Result<Theta> {
    if specs.len() != natural.len() {
        return Err(Error::LengthMismatch { expected: specs.len(), got: natural.len() });
    }
    specs.iter().zip(natural).map(|(s, &x)| s.forward(x)).collect::<Result<Vec<_>>>().map(Theta)
}

/// Inverse of [`to_transformed`].
pub fn to_natural(specs: &[ParamSpec], theta: &Theta) -> Vec<f64> {
    specs.iter().zip(&theta.0).map(|(s, &y)| s.inverse(y)).collect()
}

/// Sum of per-component log priors; `-inf` outside the support.
pub fn log_prior(specs: &[ParamSpec], theta: &Theta) -> f64 {
    if specs.len() != theta.dim() {
        return f64::NEG_INFINITY;
    }
    specs.iter().zip(&theta.0).map(|(s, &y)| s.log_prior(y)).sum()
}

/// The transformed guess vector.
pub fn guess(specs: &[ParamSpec]) -> Result<Theta> {
    to_transformed(specs, &specs.iter().map(|s| s.guess).collect::<Vec<_>>())
}

/// Names in declaration order.
pub fn names(specs: &[ParamSpec]) -> Vec<String> {
    specs.iter().map(|s| s.name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t: Transform, min: f64, max: f64) -> ParamSpec {
        ParamSpec { name: "p".into(), transform: t, guess: 0.5 * (min + max), sd_transf: 0.1, min, max }
    }

    #[test]
    fn identity_points() {
        assert_eq!(spec(Transform::Log, 0.1, 10.0).forward(1.0).unwrap(), 0.0);
        assert_eq!(spec(Transform::Logit, 0.0, 1.0).forward(0.5).unwrap(), 0.0);
    }

    #[test]
    fn log_of_thirteen_round_trips() {
        let s = spec(Transform::Log, 0.5, 20.0);
        let y = s.forward(13.0).unwrap();
        assert!((y - 13f64.ln()).abs() < 1e-15);
        assert!((y - 2.564_949_357_461_536_6).abs() < 1e-12);
        assert!((s.inverse(y) - 13.0).abs() < 13.0 * 1e-12);
    }

    #[test]
    fn out_of_domain() {
        let s = spec(Transform::Log, 0.1, 10.0);
        assert!(matches!(s.forward(0.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(s.forward(-1.0), Err(Error::OutOfDomain { .. })));
        let l = spec(Transform::Logit, 0.0, 1.0);
        assert!(l.forward(1.0).is_err());
    }

    #[test]
    fn prior_values() {
        let unit = spec(Transform::Identity, 0.0, 1.0);
        assert_eq!(unit.log_prior(0.3), 0.0);
        assert_eq!(unit.log_prior(1.5), f64::NEG_INFINITY);
        let e = std::f64::consts::E;
        let s = spec(Transform::Log, 1.0, e);
        assert!((s.log_prior(0.5) - (-(e - 1.0).ln() + 0.5)).abs() < 1e-14);
        assert_eq!(s.log_prior(1.2), f64::NEG_INFINITY);
    }

    /// Trapezoid rule over the transformed support.
    fn prior_mass(s: &ParamSpec, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * s.log_prior(lo + i as f64 * h).exp()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn priors_integrate_to_one() {
        let e = std::f64::consts::E;
        let log = spec(Transform::Log, 1.0, e);
        let m = prior_mass(&log, 0.0, 1.0);
        assert!((m - 1.0).abs() < 1e-3, "{m}");
        let logit = spec(Transform::Logit, 2.0, 5.0);
        let m = prior_mass(&logit, -40.0, 40.0);
        assert!((m - 1.0).abs() < 1e-3, "{m}");
        let id = spec(Transform::Identity, -1.0, 3.0);
        let m = prior_mass(&id, -1.0, 3.0);
        assert!((m - 1.0).abs() < 1e-3, "{m}");
    }

    #[test]
    fn validate_rejects_bad_specs() {
        assert!(ParamSpec::new("a", Transform::Log, 1.0, 0.0, 0.1, 2.0).is_err());
        assert!(ParamSpec::new("a", Transform::Log, 3.0, 0.1, 0.1, 2.0).is_err());
        assert!(ParamSpec::new("a", Transform::Log, 1.0, 0.1, 0.1, 2.0).is_ok());
    }
}
