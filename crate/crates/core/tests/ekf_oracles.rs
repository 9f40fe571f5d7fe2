mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use plugplay::ekf::{pack, packed_len, predict, run_ekf, stabilize, unpack, update, GaussianBelief};
use plugplay::integrate::IntegratorConfig;
use plugplay::model::{
    build_two_city_si, deterministic_collapse, gaussian_log_density, JacobianPolicy, ModelDef, ObservationSeries,
    TwoCityConfig,
};
use proptest::prelude::*;

fn tight() -> IntegratorConfig {
    IntegratorConfig::with_tolerances(1e-11, 1e-12)
}

#[test]
fn packed_lengths() {
    assert_eq!(packed_len(1), 2);
    assert_eq!(packed_len(5), 20);
    assert_eq!(packed_len(10), 65);
}

#[test]
fn ekf_matches_exact_kalman() {
    let (sde, model) = oscillator();
    let series = oscillator_series(&model, 5);
    assert_eq!(series.frames().len(), 50);
    let out = run_ekf(&model, &[], &series, &tight());
    let exact = kalman_loglik(&sde, &model, &series);
    assert!(!out.diverged);
    assert!((out.loglik - exact).abs() < 1e-8, "ekf {} vs kalman {exact}", out.loglik);
}

#[test]
fn empty_series_has_zero_loglik() {
    let (_, model) = oscillator();
    let series = ObservationSeries::new(Vec::new(), &model).unwrap();
    assert_eq!(run_ekf(&model, &[], &series, &tight()).loglik, 0.0);
}

#[test]
fn prediction_matches_matrix_exponential() {
    let (sde, model) = oscillator();
    let b0 = GaussianBelief { mean: sde.m0.clone(), cov: sde.p0.clone(), time: 0.0 };
    let b = predict(&b0, &model, &[], 1.7, &tight()).unwrap();
    let (f, c, qd) = discretize(&sde, 1.7);
    let m = &f * &sde.m0 + c;
    let p = &f * &sde.p0 * f.transpose() + qd;
    assert!((b.mean - m).amax() < 1e-7);
    assert!((b.cov - p).amax() < 1e-7);
    assert_eq!(b.time, 1.7);
}

#[test]
fn scalar_riccati_closed_form() {
    let q: f64 = 0.6;
    let sde = LinearSde::new(
        DMatrix::from_element(1, 1, -1.0),
        DVector::zeros(1),
        DMatrix::from_element(1, 1, q.sqrt()),
        DVector::from_element(1, 2.0),
        DMatrix::from_element(1, 1, 1.5),
    );
    let model = ModelDef::new(Arc::new(sde), vec![prevalence("y", vec![0], 1.0)], JacobianPolicy::Analytic, 0.0).unwrap();
    let b0 = GaussianBelief { mean: DVector::from_element(1, 2.0), cov: DMatrix::from_element(1, 1, 1.5), time: 0.0 };
    for t in [0.1, 0.5, 1.0, 3.0] {
        let b = predict(&b0, &model, &[], t, &tight()).unwrap();
        let m = 2.0 * (-t).exp();
        let p = (1.5 - q / 2.0) * (-2.0 * t).exp() + q / 2.0;
        assert!((b.mean[0] - m).abs() < 1e-7);
        assert!((b.cov[(0, 0)] - p).abs() < 1e-7);
    }
}

#[test]
fn static_system_keeps_belief() {
    let sde = LinearSde::new(
        DMatrix::zeros(2, 2),
        DVector::zeros(2),
        DMatrix::zeros(2, 1),
        DVector::from_column_slice(&[1.0, 2.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
    );
    let model = ModelDef::new(Arc::new(sde.clone()), vec![prevalence("y", vec![0], 1.0)], JacobianPolicy::Analytic, 0.0).unwrap();
    let b0 = GaussianBelief { mean: sde.m0.clone(), cov: sde.p0.clone(), time: 0.0 };
    let b = predict(&b0, &model, &[], 5.0, &tight()).unwrap();
    assert_eq!(b.mean, b0.mean);
    assert_eq!(b.cov, b0.cov);
}

#[test]
fn conjugate_update() {
    let (m0, p0, r, y): (f64, f64, f64, f64) = (1.3, 0.8, 0.25, 2.1);
    let b = GaussianBelief { mean: DVector::from_element(1, m0), cov: DMatrix::from_element(1, 1, p0), time: 0.0 };
    let (post, inc) = update(&b, &prevalence("y", vec![0], r.sqrt()), y).unwrap();
    let var = 1.0 / (1.0 / p0 + 1.0 / r);
    let mean = var * (m0 / p0 + y / r);
    assert!((post.mean[0] - mean).abs() < 1e-12);
    assert!((post.cov[(0, 0)] - var).abs() < 1e-12);
    assert!((inc - gaussian_log_density(y - m0, p0 + r)).abs() < 1e-12);
}

#[test]
fn zero_innovation_update() {
    let b = GaussianBelief { mean: DVector::from_element(1, 4.0), cov: DMatrix::from_element(1, 1, 2.0), time: 0.0 };
    let (post, inc) = update(&b, &prevalence("y", vec![0], 1.0), 4.0).unwrap();
    assert_eq!(post.mean[0], 4.0);
    let s = 3.0f64;
    assert!((inc + 0.5 * (2.0 * std::f64::consts::PI * s).ln()).abs() < 1e-12);
}

#[test]
fn unobservable_direction_leaves_belief() {
    // the report sees x1 only, and x0 is uncorrelated with it and has zero variance on the seen axis
    let b = GaussianBelief {
        mean: DVector::from_column_slice(&[1.0, 0.0]),
        cov: DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, 0.0]),
        time: 0.0,
    };
    let (post, inc) = update(&b, &prevalence("y", vec![1], 0.5), 0.3).unwrap();
    assert!((post.mean.clone() - b.mean.clone()).amax() < 1e-15);
    assert!((post.cov.clone() - b.cov.clone()).amax() < 1e-15);
    assert!((inc - gaussian_log_density(0.3, 0.25)).abs() < 1e-12);
}

#[test]
fn collapsed_ekf_equals_ode_plus_gaussian_noise() {
    let cfg = TwoCityConfig { weeks: 10, missing: false, ..Default::default() };
    let problem = build_two_city_si(&cfg);
    let collapsed = deterministic_collapse(&problem.model);
    let theta = [2.0, 1.6, 7.0];

    // ten reports of one stream from a simulated series
    let full = plugplay::model::simulate(&problem.model, &theta, &problem.schedule, &Default::default()).unwrap().0;
    let frames: Vec<_> = full.frames().iter().copied().filter(|f| f.stream == 0).collect();
    let series = ObservationSeries::new(frames, &collapsed).unwrap();
    assert_eq!(series.n(), 10);
    let ll = run_ekf(&collapsed, &theta, &series, &IntegratorConfig::with_tolerances(1e-13, 1e-10)).loglik;

    // oracle: the SIS skeleton integrated with plain RK4 on a fine grid,
    // weekly incidence read off the accumulated infections
    let (n1, n2) = (100_000.0, 50_000.0);
    let v = theta[2];
    let rhs = |x: &[f64; 6]| -> [f64; 6] {
        let i1 = theta[0] / v * x[0] * x[1] / n1;
        let i2 = theta[1] / v * x[2] * x[3] / n2;
        [x[1] / v - i1, i1 - x[1] / v, x[3] / v - i2, i2 - x[3] / v, i1, i2]
    };
    let mut x = [n1 - 50.0, 50.0, n2 - 20.0, 20.0, 0.0, 0.0];
    let h = 7.0 / 7000.0;
    let mut oracle = 0.0;
    for f in series.frames() {
        for _ in 0..7000 {
            let k1 = rhs(&x);
            let k2 = rhs(&std::array::from_fn(|i| x[i] + 0.5 * h * k1[i]));
            let k3 = rhs(&std::array::from_fn(|i| x[i] + 0.5 * h * k2[i]));
            let k4 = rhs(&std::array::from_fn(|i| x[i] + h * k3[i]));
            x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        let expected = x[4] + x[5];
        let var = problem.model.streams[0].noise.variance(expected);
        oracle += gaussian_log_density(f.value.unwrap() - expected, var);
        x[4] = 0.0;
        x[5] = 0.0;
    }
    assert!((ll - oracle).abs() < 1e-8, "ekf {ll} vs ode {oracle}");
}

#[test]
fn stabilize_fixed_point_and_clipping() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.7]);
    assert!((stabilize(&a) - &a).amax() < 1e-12);
    let v = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]) * 0.5;
    let bad = &v + DMatrix::from_row_slice(2, 2, &[-0.5e-9, 0.5e-9, 0.5e-9, -0.5e-9]);
    assert!(bad.clone().symmetric_eigenvalues().min() < 0.0);
    assert!(stabilize(&bad).symmetric_eigenvalues().min() >= 0.0);
}

proptest! {
    #[test]
    fn pack_round_trip(k in 1usize..8, seed in proptest::collection::vec(-5.0f64..5.0, 100)) {
        let l = DMatrix::from_fn(k, k, |i, j| seed[(i * k + j) % seed.len()]);
        let cov = &l * l.transpose();
        let mean = DVector::from_fn(k, |i, _| seed[(i + 50) % seed.len()]);
        let b = GaussianBelief { mean, cov, time: 1.5 };
        let packed = pack(&b);
        prop_assert_eq!(packed.len(), packed_len(k));
        prop_assert_eq!(unpack(&packed, k, 1.5).unwrap(), b);
    }

    #[test]
    fn stabilize_perturbed_is_symmetric_psd(vals in proptest::collection::vec(-1.0f64..1.0, 16), noise in proptest::collection::vec(-1e-3f64..1e-3, 16)) {
        let l = DMatrix::from_row_slice(4, 4, &vals);
        let a = &l * l.transpose() + DMatrix::from_row_slice(4, 4, &noise);
        let s = stabilize(&a);
        prop_assert!((&s - s.transpose()).amax() < 1e-10);
        prop_assert!(s.symmetric_eigenvalues().min() >= -1e-12);
    }
}
