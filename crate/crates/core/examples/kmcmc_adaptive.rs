//! Adaptive Metropolis with the EKF likelihood: the SCALE phase tunes `ε`,
//! then the proposal switches to the empirical covariance.

use plugplay::integrate::IntegratorConfig;
use plugplay::io::read_series;
use plugplay::mcmc::diagnostics::summarize;
use plugplay::mcmc::{acceptance_between, run_chain, ChainConfig, EkfBackend, ProposalCov};
use plugplay::model::config::bundled_dir;
use plugplay::model::{build_two_city_si, guess, TwoCityConfig};

fn main() -> plugplay::Result<()> {
    let iterations = std::env::args().nth(1).map_or(5000, |s| s.parse().expect("iterations"));
    let problem = build_two_city_si(&TwoCityConfig::default());
    let series = read_series(&bundled_dir().join("data.csv"), &problem.model)?;
    let specs = &problem.params;

    let mut backend = EkfBackend { model: &problem.model, series: &series, integrator: IntegratorConfig::default() };
    let cfg = ChainConfig { iterations, seed: 3, ..Default::default() };
    let trace = run_chain(specs, &mut backend, &guess(specs)?, &ProposalCov::from_specs(specs)?, &cfg)?;

    let switch = trace.switched_at.unwrap_or(trace.len());
    println!("switched to the empirical covariance at iteration {switch}");
    println!("acceptance before {:.3}, after {:.3}", acceptance_between(&trace.rows, 0, switch), acceptance_between(&trace.rows, switch, trace.len()));
    println!("ε at the switch: {:.3}", trace.rows[switch.min(trace.len() - 1)].epsilon);

    let burn = trace.len() / 5;
    for (j, s) in specs.iter().enumerate() {
        let col = &trace.natural_column(j)[burn..];
        let p = summarize(&s.name, col);
        println!("{:<5} mean {:.3}  95% [{:.3}, {:.3}]  ESS {:.0}", p.name, p.mean, p.q025, p.q975, p.ess);
    }
    Ok(())
}
