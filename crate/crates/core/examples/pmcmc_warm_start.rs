//! The full chain of approximations: ksimplex → kmcmc → pmcmc, with the
//! particle MCMC started at the MAP and proposing from the kmcmc covariance.

use plugplay::integrate::IntegratorConfig;
use plugplay::io::read_series;
use plugplay::mcmc::{run_chain, ChainConfig, CovSource, EkfBackend, PfBackend, ProposalCov};
use plugplay::model::config::bundled_dir;
use plugplay::model::{build_two_city_si, guess, TwoCityConfig};
use plugplay::optimize::{ksimplex, SimplexOptions};
use plugplay::parallel::default_workers;
use plugplay::smc::PfConfig;

fn main() -> plugplay::Result<()> {
    let problem = build_two_city_si(&TwoCityConfig::default());
    let (model, specs) = (&problem.model, &problem.params);
    let series = read_series(&bundled_dir().join("data.csv"), model)?;

    let map = ksimplex(model, specs, &series, &guess(specs)?, &SimplexOptions::default())?;
    println!("MAP {:.4?}", map.natural);

    let mut ekf = EkfBackend { model, series: &series, integrator: IntegratorConfig::default() };
    let k_cfg = ChainConfig { iterations: 3000, seed: 1, ..Default::default() };
    let k_trace = run_chain(specs, &mut ekf, &map.theta, &ProposalCov::from_specs(specs)?, &k_cfg)?;
    let emp = k_trace.empirical.clone().expect("kmcmc produced samples");
    println!("kmcmc acceptance {:.3}", k_trace.acceptance_rate());

    let pf = PfConfig { particles: 500, seed: 2, workers: default_workers(), ..Default::default() };
    let mut backend = PfBackend { model, series: &series, pf };
    let p_cfg = ChainConfig { iterations: 500, seed: 2, ..Default::default() };
    let p_trace = run_chain(specs, &mut backend, &map.theta, &ProposalCov::new(emp, CovSource::File)?, &p_cfg)?;
    println!("pmcmc acceptance {:.3} over {} iterations", p_trace.acceptance_rate(), p_trace.len());
    for (j, s) in specs.iter().enumerate() {
        let col = p_trace.natural_column(j);
        println!("  {:<5} mean {:.3}", s.name, col.iter().sum::<f64>() / col.len() as f64);
    }
    Ok(())
}
