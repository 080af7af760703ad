#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcrb::models::{LinearGaussianModel, LinearGaussianSpec};
use pcrb::noise::{CorrelationProfile, GaussianPrior};

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `x_{k+1} = x_k + w`, `z = x + v` with unit variances and unit prior.
pub fn scalar_random_walk(q: f64, r: f64, p0: f64) -> LinearGaussianModel {
    LinearGaussianModel::new(
        "scalar random walk",
        CorrelationProfile::independent(),
        LinearGaussianSpec {
            transition_state: vec![scalar(1.0)],
            transition_meas: vec![],
            process_cov: scalar(q),
            measurement_state: vec![scalar(1.0)],
            measurement_meas: vec![],
            meas_cov: scalar(r),
        },
        GaussianPrior::new(1, DVector::zeros(1), scalar(p0)).unwrap(),
    )
    .unwrap()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

pub fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

use pcrb::blocks::ExpectationEstimator;
use pcrb::linalg::max_rel_elementwise;
use pcrb::noise::SystemModel;
use pcrb::recursion::{run_with, schedule_for, PcrbTrace, RecursionPath, RunOptions};
use rand::Rng;

/// Random symmetric positive definite matrix with eigenvalues bounded away from 0.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &a * a.transpose() + DMatrix::identity(n, n) * (0.5 + n as f64 * 0.1)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Largest elementwise relative deviation between two traces.
pub fn trace_deviation(a: &PcrbTrace, b: &PcrbTrace) -> f64 {
    assert_eq!(a.len(), b.len());
    a.entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| {
            assert_eq!(x.k, y.k);
            max_rel_elementwise(&x.info, &y.info)
        })
        .fold(0.0, f64::max)
}

pub fn run_path(model: &dyn SystemModel, path: RecursionPath, horizon: usize) -> PcrbTrace {
    let schedule = schedule_for(model, &ExpectationEstimator::analytic(), horizon).unwrap();
    run_with(
        model,
        &schedule,
        horizon,
        RunOptions {
            path,
            ..Default::default()
        },
    )
    .unwrap()
}

/// Textbook white-noise information recursion for `x_{k+1} = A x_k + w`,
/// `z = H x + v`, from `J_0 = P0^{-1}`.
pub fn classical_recursion(model: &LinearGaussianModel, horizon: usize) -> Vec<DMatrix<f64>> {
    let spec = model.spec();
    let a = &spec.transition_state[0];
    let h = &spec.measurement_state[0];
    let qi = spec.process_cov.clone().try_inverse().unwrap();
    let ri = spec.meas_cov.clone().try_inverse().unwrap();
    let d11 = a.transpose() * &qi * a;
    let d12 = -(a.transpose() * &qi);
    let d22 = &qi + h.transpose() * &ri * h;
    let mut j = model.prior().covariance().clone().try_inverse().unwrap();
    (0..horizon)
        .map(|_| {
            j = &d22 - d12.transpose() * (&d11 + &j).try_inverse().unwrap() * &d12;
            j.clone()
        })
        .collect()
}
