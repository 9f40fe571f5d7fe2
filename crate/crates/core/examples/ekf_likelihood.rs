//! EKF log-likelihood of the bundled data along a profile of `r0_1`.

use plugplay::ekf::{ekf_loglik, run_ekf};
use plugplay::integrate::IntegratorConfig;
use plugplay::io::read_series;
use plugplay::model::config::bundled_dir;
use plugplay::model::{build_two_city_si, TwoCityConfig};

fn main() -> plugplay::Result<()> {
    let problem = build_two_city_si(&TwoCityConfig::default());
    let series = read_series(&bundled_dir().join("data.csv"), &problem.model)?;
    let cfg = IntegratorConfig::default();
    let truth = problem.truth.clone().unwrap();

    let out = run_ekf(&problem.model, &truth, &series, &cfg);
    println!("loglik at truth: {:.3} over {} reports", out.loglik, out.records.len());
    for r in out.records.iter().take(4) {
        let name = &problem.model.streams[r.stream].name;
        println!("  t={:>4} {name:<18} pred {:>9.2} ± {:>7.2}", r.time, r.pred_mean, r.pred_var.sqrt());
    }

    println!("\nprofile over r0_1:");
    for r0 in [1.6, 1.8, 1.9, 2.0, 2.1, 2.2, 2.5] {
        let theta = [r0, truth[1], truth[2]];
        println!("  r0_1 = {r0:.1}  loglik = {:>10.3}", ekf_loglik(&problem.model, &theta, &series, &cfg));
    }
    Ok(())
}
