//! Linear-Gaussian model given directly by its factorized conditionals:
//!
//! ```text
//! x_{k+1} | ... ~ N( sum_i A_i x_{k-i} + sum_j M_j z_{k-j}, Q )      i < l2', j < l4
//! z_{k+1} | ... ~ N( sum_i H_i x_{k+1-i} + sum_j N_j z_{k-j}, R )    i < l3', j < l1
//! ```
//!
//! Hessians are constant, so `B` and `C` are exact in closed form.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::error::{PcrbError, Result};
use crate::linalg::{spd_inverse, symmetrize, BlockMatrix};
use crate::noise::{
    chol_lower, gaussian, gaussian_log_kernel, CorrelationProfile, GaussianPrior, SystemModel,
    Trajectory,
};

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    name: String,
    profile: CorrelationProfile,
    state_dim: usize,
    meas_dim: usize,
    /// `A_0..A_{l2'-1}`, multiplying `x_k, x_{k-1}, ...`.
    transition_state: Vec<DMatrix<f64>>,
    /// `M_0..M_{l4-1}`, multiplying `z_k, z_{k-1}, ...`.
    transition_meas: Vec<DMatrix<f64>>,
    process_cov: DMatrix<f64>,
    /// `H_0..H_{l3'-1}`, multiplying `x_{k+1}, x_k, ...`.
    measurement_state: Vec<DMatrix<f64>>,
    /// `N_0..N_{l1-1}`, multiplying `z_k, z_{k-1}, ...`.
    measurement_meas: Vec<DMatrix<f64>>,
    meas_cov: DMatrix<f64>,
    prior: GaussianPrior,
    process_prec: DMatrix<f64>,
    meas_prec: DMatrix<f64>,
    process_chol: DMatrix<f64>,
    meas_chol: DMatrix<f64>,
    b: BlockMatrix,
    c: BlockMatrix,
}

/// Coefficients of a [`LinearGaussianModel`].
#[derive(Debug, Clone)]
pub struct LinearGaussianSpec {
    pub transition_state: Vec<DMatrix<f64>>,
    pub transition_meas: Vec<DMatrix<f64>>,
    pub process_cov: DMatrix<f64>,
    pub measurement_state: Vec<DMatrix<f64>>,
    pub measurement_meas: Vec<DMatrix<f64>>,
    pub meas_cov: DMatrix<f64>,
}

fn check_all(mats: &[DMatrix<f64>], shape: (usize, usize), count: usize, what: &str) -> Result<()> {
    if mats.len() != count {
        return Err(PcrbError::Model(format!(
            "{what}: expected {count} coefficient matrices, got {}",
            mats.len()
        )));
    }
    for (i, m) in mats.iter().enumerate() {
        if m.shape() != shape {
            return Err(PcrbError::Shape(format!(
                "{what}[{i}] is {:?}, expected {shape:?}",
                m.shape()
            )));
        }
    }
    Ok(())
}

impl LinearGaussianModel {
    pub fn new(
        name: impl Into<String>,
        profile: CorrelationProfile,
        spec: LinearGaussianSpec,
        prior: GaussianPrior,
    ) -> Result<Self> {
        profile.validate()?;
        let r = spec.process_cov.nrows();
        let n = spec.meas_cov.nrows();
        if r == 0 || n == 0 {
            return Err(PcrbError::Model("empty covariance".into()));
        }
        check_all(&spec.transition_state, (r, r), profile.l2_eff(), "transition_state")?;
        check_all(&spec.transition_meas, (r, n), profile.l4, "transition_meas")?;
        check_all(&spec.measurement_state, (n, r), profile.l3_eff(), "measurement_state")?;
        check_all(&spec.measurement_meas, (n, n), profile.l1, "measurement_meas")?;
        if spec.process_cov.shape() != (r, r) || spec.meas_cov.shape() != (n, n) {
            return Err(PcrbError::Shape("covariances must be square".into()));
        }
        if prior.block_dim() != r || prior.window() != profile.prior_window() {
            return Err(PcrbError::Shape(format!(
                "prior must cover {} states of dimension {r}",
                profile.prior_window()
            )));
        }
        let process_prec = spd_inverse(&spec.process_cov, "process covariance")?;
        let meas_prec = spd_inverse(&spec.meas_cov, "measurement covariance")?;
        let process_chol = chol_lower(&spec.process_cov, "process covariance")?;
        let meas_chol = chol_lower(&spec.meas_cov, "measurement covariance")?;

        // B = G^T Q^{-1} G with G = [-A_{l2'-1} .. -A_0, I]
        let l2 = profile.l2_eff();
        let mut g = DMatrix::zeros(r, (l2 + 1) * r);
        for (i, a) in spec.transition_state.iter().enumerate() {
            g.view_mut((0, (l2 - 1 - i) * r), (r, r)).copy_from(&(-a));
        }
        g.view_mut((0, l2 * r), (r, r)).copy_from(&DMatrix::identity(r, r));
        let b = BlockMatrix::from_dense(symmetrize(&(g.transpose() * &process_prec * &g)), r)?;

        // C = L^T R^{-1} L with L = [H_{l3'-1} .. H_0]
        let l3 = profile.l3_eff();
        let mut l = DMatrix::zeros(n, l3 * r);
        for (i, h) in spec.measurement_state.iter().enumerate() {
            l.view_mut((0, (l3 - 1 - i) * r), (n, r)).copy_from(h);
        }
        let c = BlockMatrix::from_dense(symmetrize(&(l.transpose() * &meas_prec * &l)), r)?;

        Ok(Self {
            name: name.into(),
            profile,
            state_dim: r,
            meas_dim: n,
            transition_state: spec.transition_state,
            transition_meas: spec.transition_meas,
            process_cov: spec.process_cov,
            measurement_state: spec.measurement_state,
            measurement_meas: spec.measurement_meas,
            meas_cov: spec.meas_cov,
            prior,
            process_prec,
            meas_prec,
            process_chol,
            meas_chol,
            b,
            c,
        })
    }

    /// Random well-conditioned model with the given lags, for property tests.
    pub fn random(
        profile: CorrelationProfile,
        state_dim: usize,
        meas_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let r = state_dim;
        let n = meas_dim;
        let mut mat = |rows: usize, cols: usize, scale: f64| {
            DMatrix::from_fn(rows, cols, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
        };
        let spec = LinearGaussianSpec {
            transition_state: (0..profile.l2_eff()).map(|_| mat(r, r, 0.8)).collect(),
            transition_meas: (0..profile.l4).map(|_| mat(r, n, 0.3)).collect(),
            process_cov: {
                let a = mat(r, r, 1.0);
                &a * a.transpose() + DMatrix::identity(r, r) * 0.5
            },
            measurement_state: (0..profile.l3_eff()).map(|_| mat(n, r, 1.0)).collect(),
            measurement_meas: (0..profile.l1).map(|_| mat(n, n, 0.3)).collect(),
            meas_cov: {
                let a = mat(n, n, 1.0);
                &a * a.transpose() + DMatrix::identity(n, n) * 0.5
            },
        };
        let w = profile.prior_window() * r;
        let a = mat(w, w, 1.0);
        let prior_cov = &a * a.transpose() + DMatrix::identity(w, w);
        let prior = GaussianPrior::new(r, DVector::zeros(w), prior_cov)?;
        Self::new(format!("random {profile}"), profile, spec, prior)
    }

    pub fn spec(&self) -> LinearGaussianSpec {
        LinearGaussianSpec {
            transition_state: self.transition_state.clone(),
            transition_meas: self.transition_meas.clone(),
            process_cov: self.process_cov.clone(),
            measurement_state: self.measurement_state.clone(),
            measurement_meas: self.measurement_meas.clone(),
            meas_cov: self.meas_cov.clone(),
        }
    }

    pub fn b(&self) -> &BlockMatrix {
        &self.b
    }

    pub fn c(&self) -> &BlockMatrix {
        &self.c
    }

    fn transition_mean(&self, states_before: &[DVector<f64>], meas: &[DVector<f64>]) -> DVector<f64> {
        // states_before: x_{k-l2'+1}..x_k, meas: z_{k-l4+1}..z_k
        let mut mean = DVector::zeros(self.state_dim);
        for (i, a) in self.transition_state.iter().enumerate() {
            mean += a * &states_before[states_before.len() - 1 - i];
        }
        for (j, m) in self.transition_meas.iter().enumerate() {
            mean += m * &meas[meas.len() - 1 - j];
        }
        mean
    }

    fn measurement_mean(&self, states: &[DVector<f64>], past: &[DVector<f64>]) -> DVector<f64> {
        // states: x_{k-l3'+2}..x_{k+1}, past: z_{k-l1+1}..z_k
        let mut mean = DVector::zeros(self.meas_dim);
        for (i, h) in self.measurement_state.iter().enumerate() {
            mean += h * &states[states.len() - 1 - i];
        }
        for (j, nm) in self.measurement_meas.iter().enumerate() {
            mean += nm * &past[past.len() - 1 - j];
        }
        mean
    }

    /// Window of the `count` values ending at index `end` (inclusive), with
    /// zeros standing in for negative indices.
    fn window(seq: &[DVector<f64>], end: isize, count: usize, dim: usize) -> Vec<DVector<f64>> {
        (0..count)
            .map(|i| {
                let idx = end - (count as isize - 1) + i as isize;
                if idx >= 0 {
                    seq[idx as usize].clone()
                } else {
                    DVector::zeros(dim)
                }
            })
            .collect()
    }

    fn sample_measurement(
        &self,
        t: usize,
        states: &[DVector<f64>],
        meas: &[DVector<f64>],
        rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        let xs = Self::window(states, t as isize, self.profile.l3_eff(), self.state_dim);
        let zs = Self::window(meas, t as isize - 1, self.profile.l1, self.meas_dim);
        self.measurement_mean(&xs, &zs) + gaussian(&self.meas_chol, rng)
    }
}

impl SystemModel for LinearGaussianModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn meas_dim(&self) -> usize {
        self.meas_dim
    }

    fn profile(&self) -> CorrelationProfile {
        self.profile
    }

    fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    fn transition_log_density(&self, _k: usize, states: &[DVector<f64>], meas: &[DVector<f64>]) -> f64 {
        let (next, before) = states.split_last().expect("at least one state");
        let residual = next - self.transition_mean(before, meas);
        gaussian_log_kernel(&residual, &self.process_prec)
    }

    fn measurement_log_density(
        &self,
        _k: usize,
        z_next: &DVector<f64>,
        states: &[DVector<f64>],
        past_meas: &[DVector<f64>],
    ) -> f64 {
        let residual = z_next - self.measurement_mean(states, past_meas);
        gaussian_log_kernel(&residual, &self.meas_prec)
    }

    fn sample_trajectory(&self, len: usize, rng: &mut dyn RngCore) -> Trajectory {
        let mut states = self.prior.sample(rng);
        states.truncate(len);
        let mut meas: Vec<DVector<f64>> = Vec::with_capacity(len);
        for t in 0..states.len() {
            let z = self.sample_measurement(t, &states, &meas, rng);
            meas.push(z);
        }
        while states.len() < len {
            let t = states.len() - 1;
            let xs = Self::window(&states, t as isize, self.profile.l2_eff(), self.state_dim);
            let zs = Self::window(&meas, t as isize, self.profile.l4, self.meas_dim);
            let x = self.transition_mean(&xs, &zs) + gaussian(&self.process_chol, rng);
            states.push(x);
            let z = self.sample_measurement(t + 1, &states, &meas, rng);
            meas.push(z);
        }
        Trajectory {
            states,
            measurements: meas,
        }
    }

    fn transition_hessian(&self, _k: usize, _s: &[DVector<f64>], _m: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        Some(self.b.as_dense().clone())
    }

    fn measurement_hessian(&self, _k: usize, _s: &[DVector<f64>], _m: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        Some(self.c.as_dense().clone())
    }

    fn analytic_transition_block(&self, _k: usize) -> Option<BlockMatrix> {
        Some(self.b.clone())
    }

    fn analytic_measurement_block(&self, _k: usize) -> Option<BlockMatrix> {
        Some(self.c.clone())
    }

    fn time_invariant(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn random_walk_blocks() {
        let prior = GaussianPrior::new(1, DVector::zeros(1), scalar(1.0)).unwrap();
        let m = LinearGaussianModel::new(
            "rw",
            CorrelationProfile::independent(),
            LinearGaussianSpec {
                transition_state: vec![scalar(1.0)],
                transition_meas: vec![],
                process_cov: scalar(1.0),
                measurement_state: vec![scalar(1.0)],
                measurement_meas: vec![],
                meas_cov: scalar(1.0),
            },
            prior,
        )
        .unwrap();
        assert_eq!(m.b().as_dense(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(m.c().as_dense(), &scalar(1.0));
    }

    #[test]
    fn wrong_coefficient_count_rejected() {
        let p = CorrelationProfile::new(0, 2, 0, 0).unwrap();
        let prior = GaussianPrior::independent(&DVector::zeros(1), &scalar(1.0), 3).unwrap();
        let err = LinearGaussianModel::new(
            "bad",
            p,
            LinearGaussianSpec {
                transition_state: vec![scalar(1.0)],
                transition_meas: vec![],
                process_cov: scalar(1.0),
                measurement_state: vec![scalar(1.0)],
                measurement_meas: vec![],
                meas_cov: scalar(1.0),
            },
            prior,
        );
        assert!(err.is_err());
    }
}
