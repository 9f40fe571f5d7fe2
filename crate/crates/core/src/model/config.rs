//! Models declared in three JSON documents.
//!
//! * `process.json` lists the state components, the flows between them (each
//!   flow may also feed accumulators), optional extra drift terms and the
//!   Brownian noise loadings.
//! * `context.json` holds constants, the estimated parameters, initial
//!   conditions, the start time, optional ground truth and the data file.
//! * `link.json` maps observation streams onto state sums, with their noise
//!   settings and reporting schedules.
//!
//! Expressions may reference states, estimated parameters (natural scale),
//! constants and `t`. See `data/two_city/` for the bundled example.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::def::{
    Dynamics, JacobianPolicy, ModelDef, ObservationNoise, ObservationStream, Schedule, StateRole, StreamKind,
    StreamSchedule,
};
use super::expr::Expr;
use super::params::ParamSpec;
use super::Problem;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDecl {
    pub name: String,
    #[serde(default = "default_role")]
    pub role: StateRole,
}

fn default_role() -> StateRole {
    StateRole::Population
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDecl {
    #[serde(default)]
    pub from: Option<String>,
    #[serde(default)]
    pub to: Option<String>,
    /// Total flow per unit time.
    pub rate: String,
    #[serde(default)]
    pub accumulate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDoc {
    pub state: Vec<StateDecl>,
    #[serde(default)]
    pub flows: Vec<FlowDecl>,
    #[serde(default)]
    pub drift: BTreeMap<String, String>,
    /// One map per Brownian driver: state name → loading expression.
    #[serde(default)]
    pub noises: Vec<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDoc {
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub parameters: Vec<ParamSpec>,
    #[serde(default)]
    pub truth: Option<BTreeMap<String, f64>>,
    pub initial: BTreeMap<String, String>,
    #[serde(default)]
    pub initial_sd: BTreeMap<String, String>,
    #[serde(default)]
    pub data: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDecl {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindDecl {
    Prevalence,
    Incidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamDecl {
    pub name: String,
    pub kind: KindDecl,
    pub states: Vec<String>,
    pub tau: f64,
    pub sigma_min: f64,
    pub schedule: GridDecl,
    /// Reporting times whose values are withheld.
    #[serde(default)]
    pub missing: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDoc {
    pub streams: Vec<StreamDecl>,
    /// Relative central-difference step for Jacobians.
    #[serde(default = "default_fd_scale")]
    pub fd_scale: f64,
}

fn default_fd_scale() -> f64 {
    1e-6
}

struct CompiledFlow {
    from: Option<usize>,
    to: Option<usize>,
    rate: Expr,
    accumulate: Vec<usize>,
}

/// Dynamics assembled from a [`ProcessDoc`] and [`ContextDoc`].
pub struct ExprModel {
    names: Vec<String>,
    roles: Vec<StateRole>,
    n_params: usize,
    constants: Vec<f64>,
    t0: f64,
    flows: Vec<CompiledFlow>,
    drift: Vec<(usize, Expr)>,
    /// `(state, driver, loading)`.
    loadings: Vec<(usize, usize, Expr)>,
    n_noises: usize,
    initial: Vec<Expr>,
    initial_sd: Vec<(usize, Expr)>,
}

const STACK_SLOTS: usize = 64;

impl ExprModel {
    fn slots(&self) -> usize {
        self.names.len() + self.n_params + self.constants.len() + 1
    }

    fn with_vars<R>(&self, x: Option<&[f64]>, theta: &[f64], t: f64, f: impl FnOnce(&[f64]) -> R) -> R {
        let k = self.names.len();
        let n = self.slots();
        let fill = |buf: &mut [f64]| {
            if let Some(x) = x {
                buf[..k].copy_from_slice(x);
            }
            buf[k..k + self.n_params].copy_from_slice(&theta[..self.n_params]);
            buf[k + self.n_params..n - 1].copy_from_slice(&self.constants);
            buf[n - 1] = t;
        };
        if n <= STACK_SLOTS {
            let mut buf = [0.0; STACK_SLOTS];
            fill(&mut buf[..n]);
            f(&buf[..n])
        } else {
            let mut buf = vec![0.0; n];
            fill(&mut buf);
            f(&buf)
        }
    }
}

impl Dynamics for ExprModel {
    fn state_names(&self) -> &[String] {
        &self.names
    }

    fn roles(&self) -> &[StateRole] {
        &self.roles
    }

    fn noise_dim(&self) -> usize {
        self.n_noises
    }

    fn drift(&self, x: &[f64], theta: &[f64], t: f64, dx: &mut [f64]) {
        self.with_vars(Some(x), theta, t, |vars| {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for fl in &self.flows {
                let r = fl.rate.eval(vars);
                if let Some(i) = fl.from {
                    dx[i] -= r;
                }
                if let Some(i) = fl.to {
                    dx[i] += r;
                }
                for &a in &fl.accumulate {
                    dx[a] += r;
                }
            }
            for (i, e) in &self.drift {
                dx[*i] += e.eval(vars);
            }
        })
    }

    fn noise_loadings(&self, x: &[f64], theta: &[f64], t: f64, g: &mut [f64]) {
        self.with_vars(Some(x), theta, t, |vars| {
            g.iter_mut().for_each(|v| *v = 0.0);
            for (i, j, e) in &self.loadings {
                g[i * self.n_noises + j] += e.eval(vars);
            }
        })
    }

    fn initial(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.names.len();
        self.with_vars(None, theta, self.t0, |vars| {
            let m = self.initial.iter().map(|e| e.eval(vars)).collect();
            let mut p = vec![0.0; k * k];
            for (i, e) in &self.initial_sd {
                let sd = e.eval(vars);
                p[i * k + i] = sd * sd;
            }
            (m, p)
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load and validate the three documents.
pub fn load_problem(process: &Path, context: &Path, link: &Path) -> Result<Problem> {
    let p: ProcessDoc = read_json(process)?;
    let c: ContextDoc = read_json(context)?;
    let l: LinkDoc = read_json(link)?;
    let mut problem = assemble(&p, &c, &l)?;
    problem.data = c.data.as_ref().map(|d| {
        let base = context.parent().unwrap_or_else(|| Path::new("."));
        base.join(d)
    });
    Ok(problem)
}

/// Build a [`Problem`] from parsed documents.
pub fn assemble(p: &ProcessDoc, c: &ContextDoc, l: &LinkDoc) -> Result<Problem> {
    let names: Vec<String> = p.state.iter().map(|s| s.name.clone()).collect();
    let roles: Vec<StateRole> = p.state.iter().map(|s| s.role).collect();
    let k = names.len();
    let param_names: Vec<String> = c.parameters.iter().map(|s| s.name.clone()).collect();
    let const_names: Vec<String> = c.constants.keys().cloned().collect();
    let mut seen = std::collections::HashSet::new();
    for n in names.iter().chain(&param_names).chain(&const_names) {
        if n == "t" || !seen.insert(n.clone()) {
            return Err(Error::Invalid(format!("identifier `{n}` is declared twice or reserved")));
        }
    }
    for s in &c.parameters {
        s.validate()?;
    }
    let state_ix = |n: &str| names.iter().position(|x| x == n);
    let lookup = |n: &str| -> Option<usize> {
        if n == "t" {
            return Some(k + param_names.len() + const_names.len());
        }
        state_ix(n)
            .or_else(|| param_names.iter().position(|x| x == n).map(|i| k + i))
            .or_else(|| const_names.iter().position(|x| x == n).map(|i| k + param_names.len() + i))
    };
    let no_states = |n: &str| if state_ix(n).is_some() { None } else { lookup(n) };
    let state = |n: &str| state_ix(n).ok_or_else(|| Error::Invalid(format!("unknown state `{n}`")));

    let flows = p
        .flows
        .iter()
        .map(|f| {
            Ok(CompiledFlow {
                from: f.from.as_deref().map(state).transpose()?,
                to: f.to.as_deref().map(state).transpose()?,
                rate: Expr::compile(&f.rate, &lookup)?,
                accumulate: f.accumulate.iter().map(|a| state(a)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let drift = p.drift.iter().map(|(n, e)| Ok((state(n)?, Expr::compile(e, &lookup)?))).collect::<Result<Vec<_>>>()?;
    let mut loadings = Vec::new();
    for (j, noise) in p.noises.iter().enumerate() {
        for (n, e) in noise {
            loadings.push((state(n)?, j, Expr::compile(e, &lookup)?));
        }
    }
    for n in c.initial.keys().chain(c.initial_sd.keys()) {
        state(n)?;
    }
    let initial = names
        .iter()
        .map(|n| c.initial.get(n).map_or(Ok(Expr::Num(0.0)), |e| Expr::compile(e, &no_states)))
        .collect::<Result<Vec<_>>>()?;
    let initial_sd =
        c.initial_sd.iter().map(|(n, e)| Ok((state(n)?, Expr::compile(e, &no_states)?))).collect::<Result<Vec<_>>>()?;

    let dynamics = ExprModel {
        names: names.clone(),
        roles,
        n_params: param_names.len(),
        constants: c.constants.values().copied().collect(),
        t0: c.t0,
        flows,
        drift,
        loadings,
        n_noises: p.noises.len(),
        initial,
        initial_sd,
    };

    let mut streams = Vec::new();
    let mut schedule = Schedule::default();
    for (ix, s) in l.streams.iter().enumerate() {
        let states = s.states.iter().map(|n| state(n)).collect::<Result<Vec<_>>>()?;
        let kind = match s.kind {
            KindDecl::Prevalence => StreamKind::Prevalence(states),
            KindDecl::Incidence => StreamKind::Incidence(states),
        };
        streams.push(ObservationStream {
            name: s.name.clone(),
            kind,
            noise: ObservationNoise { tau: s.tau, sigma_min: s.sigma_min },
        });
        let times: Vec<f64> = (0..s.schedule.count).map(|i| s.schedule.start + s.schedule.step * i as f64).collect();
        let missing = times.iter().map(|t| s.missing.iter().any(|m| (m - t).abs() < 1e-9)).collect();
        schedule.streams.push(StreamSchedule { stream: ix, times, missing });
    }
    let model = ModelDef::new(Arc::new(dynamics), streams, JacobianPolicy::Central { scale: l.fd_scale }, c.t0)?;
    let truth = match &c.truth {
        None => None,
        Some(map) => Some(
            param_names
                .iter()
                .map(|n| map.get(n).copied().ok_or_else(|| Error::Invalid(format!("truth lacks `{n}`"))))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(Problem { model, params: c.parameters.clone(), schedule, truth, data: None })
}

/// Directory holding the bundled two-city documents.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("two_city")
}
