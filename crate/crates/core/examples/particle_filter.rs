//! Bootstrap particle filter against the EKF, and the spread of the particle
//! estimate across seeds.

use std::time::Instant;

use plugplay::ekf::ekf_loglik;
use plugplay::integrate::IntegratorConfig;
use plugplay::io::read_series;
use plugplay::model::config::bundled_dir;
use plugplay::model::{build_two_city_si, TwoCityConfig};
use plugplay::parallel::default_workers;
use plugplay::smc::{run_pf, PfConfig};

fn main() -> plugplay::Result<()> {
    let problem = build_two_city_si(&TwoCityConfig::default());
    let series = read_series(&bundled_dir().join("data.csv"), &problem.model)?;
    let theta = problem.truth.clone().unwrap();

    let ekf = ekf_loglik(&problem.model, &theta, &series, &IntegratorConfig::default());
    println!("EKF loglik: {ekf:.3}");

    let workers = default_workers();
    for particles in [100, 1000, 5000] {
        let start = Instant::now();
        let est: Vec<f64> = (0..8)
            .map(|seed| {
                let cfg = PfConfig { particles, seed, workers, ..Default::default() };
                run_pf(&problem.model, &theta, &series, &cfg).map(|o| o.loglik)
            })
            .collect::<plugplay::Result<_>>()?;
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
        println!(
            "J = {particles:>5}: mean {mean:.3}, sd {sd:.3}  ({:.1} ms per filter on {workers} workers)",
            start.elapsed().as_secs_f64() * 1e3 / est.len() as f64
        );
    }
    Ok(())
}
