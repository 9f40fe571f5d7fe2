//! Screen a Latin hypercube with the EKF, then climb from the best point with
//! Nelder–Mead on the EKF and ODE likelihoods.

use plugplay::integrate::IntegratorConfig;
use plugplay::io::read_series;
use plugplay::model::config::bundled_dir;
use plugplay::model::{build_two_city_si, TwoCityConfig};
use plugplay::optimize::{ksimplex, lhs_sample, lhs_screen, simplex, SimplexOptions};

fn main() -> plugplay::Result<()> {
    let problem = build_two_city_si(&TwoCityConfig::default());
    let (model, specs) = (&problem.model, &problem.params);
    let series = read_series(&bundled_dir().join("data.csv"), model)?;

    let design = lhs_sample(specs, 100, 7)?;
    let ranked = lhs_screen(model, specs, &series, &design, &IntegratorConfig::default(), 1);
    println!("top of the design:");
    for r in ranked.iter().take(3) {
        let nat: Vec<String> = specs.iter().zip(&r.theta.0).map(|(s, y)| format!("{:.3}", s.inverse(*y))).collect();
        println!("  #{:<3} [{}]  loglik {:.2}", r.index, nat.join(", "), r.loglik);
    }

    let opts = SimplexOptions::default();
    let ekf_fit = ksimplex(model, specs, &series, &ranked[0].theta, &opts)?;
    let ode_fit = simplex(model, specs, &series, &ranked[0].theta, &opts)?;
    println!("ksimplex: {:.4?} loglik {:.3} ({} evals, {:?})", ekf_fit.natural, ekf_fit.loglik, ekf_fit.evals, ekf_fit.stop);
    println!("simplex:  {:.4?} ({} evals)", ode_fit.natural, ode_fit.evals);
    println!("truth:    {:?}", problem.truth.unwrap());
    Ok(())
}
