//! Simulate the bundled two-city model and write `data.csv` / `latent.csv`.
//!
//! ```text
//! cargo run --example simulate_two_city -- [out_dir] [seed]
//! ```

use std::path::PathBuf;

use plugplay::io::{write_latent, write_series};
use plugplay::model::{build_two_city_si, simulate, SimulateOptions, TwoCityConfig};

fn main() -> plugplay::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed = args.next().map_or(42, |s| s.parse().expect("seed must be an integer"));

    let problem = build_two_city_si(&TwoCityConfig::default());
    let truth = problem.truth.clone().unwrap();
    let opts = SimulateOptions { seed, ..Default::default() };
    let (series, latent) = simulate(&problem.model, &truth, &problem.schedule, &opts)?;

    std::fs::create_dir_all(&out)?;
    write_series(&out.join("data.csv"), &problem.model, &series)?;
    write_latent(&out.join("latent.csv"), &problem.model, &latent)?;

    let peak = latent.states.iter().map(|x| x[1] + x[3]).fold(0.0, f64::max);
    println!("{} reports, {} latent points, peak prevalence {peak:.0}", series.n(), latent.times.len());
    println!("written to {}", out.display());
    Ok(())
}
