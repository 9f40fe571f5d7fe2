use std::path::{Path, PathBuf};

use serde_json::json;

use super::{BackendArg, ChainArgs, Cli, Command, DiagArgs, Global, LhsArgs, SimplexArgs, SimulArgs, SmcArgs};
use crate::ekf::run_ekf;
use crate::integrate::IntegratorConfig;
use crate::io::{self, ThetaFile};
use crate::mcmc::{run_chain, ChainConfig, CovSource, EkfBackend, Likelihood, McmcTrace, PfBackend, ProposalCov};
use crate::model::config::{bundled_dir, load_problem};
use crate::model::{
    build_two_city_si, guess, simulate, to_natural, to_transformed, ObservationSeries, Problem, SimulateOptions,
    Theta, TwoCityConfig,
};
use crate::optimize::{ksimplex, lhs_sample, lhs_screen, simplex, NmOptions, SimplexOptions};
use crate::parallel::default_workers;
use crate::smc::{run_pf, PfConfig};
use crate::{Error, Result};

struct Session<'a> {
    g: &'a Global,
    problem: Problem,
    workers: usize,
    integrator: IntegratorConfig,
}

impl<'a> Session<'a> {
    fn open(g: &'a Global) -> Result<Self> {
        let problem = match (&g.process, &g.context, &g.link) {
            (Some(p), Some(c), Some(l)) => load_problem(p, c, l)?,
            _ => {
                let mut p = build_two_city_si(&TwoCityConfig::default());
                p.data = Some(bundled_dir().join("data.csv"));
                p
            }
        };
        let workers = g.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return Err(Error::Invalid("--workers must be at least 1".into()));
        }
        std::fs::create_dir_all(&g.out)?;
        Ok(Session { g, problem, workers, integrator: IntegratorConfig::with_tolerances(g.rtol, g.atol) })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.g.out.join(name)
    }

    fn series(&self) -> Result<ObservationSeries> {
        let path = self.g.data.as_ref().or(self.problem.data.as_ref()).ok_or_else(|| {
            Error::Invalid("no data file: pass --data or declare `data` in the context document".into())
        })?;
        io::read_series(path, &self.problem.model)
    }

    /// Natural-scale start from a theta JSON or the best row of an
    /// `lhs_ranked.csv`, else the declared guesses.
    fn start(&self, file: Option<&Path>) -> Result<Vec<f64>> {
        let specs = &self.problem.params;
        match file {
            Some(p) if p.extension().is_some_and(|e| e == "csv") => io::read_lhs_ranked(p, specs)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::Invalid(format!("{} has no rows", p.display()))),
            Some(p) => io::read_theta(p, specs),
            None => Ok(to_natural(specs, &guess(specs)?)),
        }
    }
}

fn show(theta: &[f64]) -> String {
    let parts: Vec<String> = theta.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}

pub(super) fn run(cli: &Cli) -> Result<String> {
    let s = Session::open(&cli.global)?;
    let summary = match &cli.command {
        Command::Simul(a) => simul(&s, a)?,
        Command::Lhs(a) => lhs(&s, a)?,
        Command::Simplex(a) => point_estimate(&s, a, "simplex")?,
        Command::Ksimplex(a) => point_estimate(&s, a, "ksimplex")?,
        Command::Kmcmc(a) => chain(&s, a, false)?,
        Command::Pmcmc(a) => chain(&s, a, true)?,
        Command::Smc(a) => smc(&s, a)?,
        Command::Diag(a) => diag(&s, a)?,
    };
    Ok(summary.to_string())
}

fn simul(s: &Session, a: &SimulArgs) -> Result<serde_json::Value> {
    let theta = match &a.theta0 {
        Some(p) => io::read_theta(p, &s.problem.params)?,
        None => match &s.problem.truth {
            Some(t) => t.clone(),
            None => s.start(None)?,
        },
    };
    let opts = SimulateOptions { dt: a.dt, seed: s.g.seed, observation_noise: !a.no_noise };
    let (series, latent) = simulate(&s.problem.model, &theta, &s.problem.schedule, &opts)?;
    io::write_series(&s.out("data.csv"), &s.problem.model, &series)?;
    io::write_latent(&s.out("latent.csv"), &s.problem.model, &latent)?;
    let missing = series.frames().iter().filter(|f| f.value.is_none()).count();
    Ok(json!({"command": "simul", "reports": series.n(), "missing": missing, "theta": theta, "seed": s.g.seed}))
}

fn lhs(s: &Session, a: &LhsArgs) -> Result<serde_json::Value> {
    let series = s.series()?;
    let specs = &s.problem.params;
    let design = lhs_sample(specs, a.points, s.g.seed)?;
    let ranked = lhs_screen(&s.problem.model, specs, &series, &design, &s.integrator, s.workers);
    io::write_lhs_ranked(&s.out("lhs_ranked.csv"), specs, &ranked)?;
    let best = &ranked[0];
    if best.loglik == f64::NEG_INFINITY {
        return Err(Error::Divergence(format!(
            "the filter diverged at every design point, e.g. theta = {}",
            show(&to_natural(specs, &best.theta))
        )));
    }
    let finite = ranked.iter().filter(|r| r.loglik.is_finite()).count();
    Ok(json!({
        "command": "lhs",
        "points": ranked.len(),
        "finite": finite,
        "best": to_natural(specs, &best.theta),
        "loglik": best.loglik,
    }))
}

fn point_estimate(s: &Session, a: &SimplexArgs, name: &str) -> Result<serde_json::Value> {
    let series = s.series()?;
    let specs = &s.problem.params;
    let start = s.start(a.theta0.as_deref())?;
    let init = to_transformed(specs, &start)?;
    let opts = SimplexOptions {
        nm: NmOptions { tol_f: a.tol_f, tol_x: a.tol_x, max_evals: a.max_evals },
        integrator: s.integrator,
        with_prior: !a.no_prior,
    };
    let fit = if name == "simplex" {
        simplex(&s.problem.model, specs, &series, &init, &opts)
    } else {
        ksimplex(&s.problem.model, specs, &series, &init, &opts)
    }
    .map_err(|e| match e {
        Error::Divergence(msg) => Error::Divergence(format!("{msg} (start theta = {})", show(&start))),
        e => e,
    })?;
    let file = ThetaFile {
        names: specs.iter().map(|p| p.name.clone()).collect(),
        natural: fit.natural.clone(),
        transformed: fit.theta.0.clone(),
        objective: fit.objective,
        loglik: fit.loglik.is_finite().then_some(fit.loglik),
    };
    io::write_json(&s.out("theta_map.json"), &file)?;
    Ok(json!({
        "command": name,
        "theta": fit.natural,
        "objective": fit.objective,
        "loglik": fit.loglik,
        "evals": fit.evals,
        "stop": fit.stop,
    }))
}

fn chain(s: &Session, a: &ChainArgs, particles: bool) -> Result<serde_json::Value> {
    let series = s.series()?;
    let specs = &s.problem.params;
    let start = s.start(a.theta0.as_deref())?;
    let theta0: Theta = to_transformed(specs, &start)?;
    let sigma0 = match &a.cov0 {
        Some(p) => ProposalCov::new(io::read_cov(p)?, CovSource::File)?,
        None => ProposalCov::from_specs(specs)?,
    };
    let cfg = ChainConfig {
        iterations: a.iterations,
        cooling: a.cooling,
        switch_after: a.switch_after,
        seed: s.g.seed,
        ..ChainConfig::default()
    };
    let model = &s.problem.model;
    let mut ekf;
    let mut pf;
    let backend: &mut dyn Likelihood = if particles {
        let pf_cfg = PfConfig { particles: a.particles, dt: a.dt, seed: s.g.seed, workers: s.workers };
        pf = PfBackend { model, series: &series, pf: pf_cfg };
        &mut pf
    } else {
        ekf = EkfBackend { model, series: &series, integrator: s.integrator };
        &mut ekf
    };
    let trace = run_chain(specs, backend, &theta0, &sigma0, &cfg)?;
    if trace.rows.iter().all(|r| r.loglik == f64::NEG_INFINITY) {
        return Err(Error::Divergence(format!("likelihood is -inf along the whole chain from theta = {}", show(&start))));
    }
    write_chain(s, &trace)?;
    let last = trace.rows.last().expect("at least one iteration");
    Ok(json!({
        "command": if particles { "pmcmc" } else { "kmcmc" },
        "iterations": trace.len(),
        "acceptance": trace.acceptance_rate(),
        "switched_at": trace.switched_at,
        "epsilon": last.epsilon,
        "last": to_natural(specs, &Theta(last.theta.clone())),
        "loglik": last.loglik,
    }))
}

fn write_chain(s: &Session, trace: &McmcTrace) -> Result<()> {
    io::write_trace(&s.out("trace.csv"), trace)?;
    for snap in &trace.snapshots {
        io::write_cov(&s.out(&format!("cov_{}.json", snap.iteration)), &snap.sigma)?;
    }
    if let Some(emp) = &trace.empirical {
        io::write_cov(&s.out("cov_final.json"), emp)?;
    }
    Ok(())
}

fn smc(s: &Session, a: &SmcArgs) -> Result<serde_json::Value> {
    let series = s.series()?;
    let theta = s.start(a.theta0.as_deref())?;
    let model = &s.problem.model;
    match a.backend {
        BackendArg::Ekf => {
            let out = run_ekf(model, &theta, &series, &s.integrator);
            io::write_ekf_trace(&s.out("ekf_trace.csv"), model, &out.records)?;
            if out.diverged {
                let why = out.failure.unwrap_or_else(|| "filter diverged".into());
                return Err(Error::Divergence(format!("{why} at theta = {}", show(&theta))));
            }
            Ok(json!({"command": "smc", "backend": "ekf", "loglik": out.loglik, "frames": out.records.len()}))
        }
        BackendArg::Pf => {
            let cfg = PfConfig { particles: a.particles, dt: a.dt, seed: s.g.seed, workers: s.workers };
            let out = run_pf(model, &theta, &series, &cfg)?;
            io::write_pf_diag(&s.out("pf_diag.csv"), &out.frames)?;
            if out.degenerate {
                return Err(Error::Divergence(format!("every particle weight vanished at theta = {}", show(&theta))));
            }
            let min_ess = out.frames.iter().map(|f| f.weight_ess).fold(f64::INFINITY, f64::min);
            Ok(json!({
                "command": "smc",
                "backend": "pf",
                "loglik": out.loglik,
                "particles": a.particles,
                "min_weight_ess": min_ess,
            }))
        }
    }
}

fn diag(s: &Session, a: &DiagArgs) -> Result<serde_json::Value> {
    let table = io::read_trace(&a.trace)?;
    if table.rows.len() < crate::mcmc::diagnostics::MIN_SAMPLES {
        return Err(Error::NotEnoughSamples { have: table.rows.len(), need: crate::mcmc::diagnostics::MIN_SAMPLES });
    }
    let summary = super::plot::emit_plot_data(&s.g.out, &table, a.bins)?;
    super::plot::write_diag_tables(&s.g.out, &table, a.bins)?;
    Ok(json!({"command": "diag", "rows": table.rows.len(), "summary": summary}))
}
