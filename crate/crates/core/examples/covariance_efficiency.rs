//! Relative efficiency of fixed random-walk proposals on a correlated
//! Gaussian: the full optimal covariance, the best diagonal one, and a tiny
//! arbitrary diagonal.

use nalgebra::{DMatrix, DVector};
use plugplay::mcmc::{optimal_factor, relative_efficiency, run_chain, ChainConfig, CovSource, FnBackend, ProposalCov};
use plugplay::model::{ParamSpec, Theta, Transform};

fn main() -> plugplay::Result<()> {
    let target = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.3, 0.8, 1.0, 0.5, 0.3, 0.5, 1.0]);
    let precision = target.clone().try_inverse().unwrap();
    let specs: Vec<ParamSpec> = ["a", "b", "c"]
        .iter()
        .map(|n| ParamSpec::new(n, Transform::Identity, 0.0, 1.0, -1e6, 1e6))
        .collect::<plugplay::Result<_>>()?;

    let run = |sigma: DMatrix<f64>, seed| -> plugplay::Result<Vec<Vec<f64>>> {
        let mut backend = FnBackend(|x: &[f64]| {
            let v = DVector::from_column_slice(x);
            -0.5 * (v.transpose() * &precision * &v)[0]
        });
        let cfg = ChainConfig { iterations: 50_000, seed, adaptive: false, ..Default::default() };
        let t = run_chain(&specs, &mut backend, &Theta(vec![0.0; 3]), &ProposalCov::new(sigma, CovSource::File)?, &cfg)?;
        Ok((0..3).map(|j| t.column(j)[5000..].to_vec()).collect())
    };

    let f = optimal_factor(3);
    let full = run(&target * f, 1)?;
    let diag = run(DMatrix::from_diagonal(&target.diagonal()) * f, 2)?;
    let tiny = run(DMatrix::identity(3, 3) * 0.02f64.powi(2), 3)?;
    println!("best diagonal vs full:   {:.3}", relative_efficiency(&diag, &full)?);
    println!("diag(0.02²) vs full:     {:.4}", relative_efficiency(&tiny, &full)?);
    Ok(())
}
