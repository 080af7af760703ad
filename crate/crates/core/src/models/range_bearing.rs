//! Planar constant-velocity target with MA(2) process noise observed in range
//! and azimuth:
//!
//! ```text
//! x_{k+1} = F x_k + w_k,     w_k = u_k + u_{k-1} + u_{k-2},   u ~ N(0, Q)
//! z_k     = h(x_k) + v_k,    h(x) = (sqrt(x1^2 + x3^2), atan2(x3, x1)),   v ~ N(0, R)
//! ```
//!
//! State order is `(x, vx, y, vy)`. Writing `w_k` through the two previous
//! transitions gives `x_{k+1} = (I + F) x_k - F x_{k-1} + u_k + (known)`,
//! so the transition block is exact and only the measurement block needs
//! sampling. With `m` sensors the measurement stacks `m` independent copies.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{PcrbError, Result};
use crate::linalg::{spd_inverse, symmetrize, BlockMatrix};
use crate::noise::{
    chol_lower, gaussian, gaussian_log_kernel, CorrelationProfile, GaussianPrior, SystemModel,
    Trajectory,
};

/// Radius below which the azimuth is treated as undefined.
pub const SINGULAR_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RangeBearingParams {
    pub period: f64,
    /// Spectral density of the white acceleration.
    pub q: f64,
    /// Range and azimuth noise variances.
    pub range_var: f64,
    pub azimuth_var: f64,
    pub sensors: usize,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
}

impl RangeBearingParams {
    pub fn example2() -> Self {
        Self {
            period: 3.0,
            q: 10.0,
            range_var: 50.0 * 50.0,
            azimuth_var: 0.01 * 0.01,
            sensors: 1,
            prior_mean: DVector::from_vec(vec![20_000.0, 10.0, 20_000.0, 10.0]),
            prior_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 10.0, 100.0, 10.0])),
        }
    }

    pub fn transition(&self) -> DMatrix<f64> {
        let t = self.period;
        let mut f = DMatrix::identity(4, 4);
        f[(0, 1)] = t;
        f[(2, 3)] = t;
        f
    }

    /// Covariance of the white driving term `u_k`.
    pub fn process_cov(&self) -> DMatrix<f64> {
        let t = self.period;
        let q = self.q;
        let blk = DMatrix::from_row_slice(2, 2, &[t.powi(3) / 3.0, t * t / 2.0, t * t / 2.0, t]) * q;
        let mut out = DMatrix::zeros(4, 4);
        out.view_mut((0, 0), (2, 2)).copy_from(&blk);
        out.view_mut((2, 2), (2, 2)).copy_from(&blk);
        out
    }

    pub fn meas_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.range_var, self.azimuth_var]))
    }
}

#[derive(Debug, Clone)]
pub struct RangeBearingModel {
    params: RangeBearingParams,
    name: String,
    f: DMatrix<f64>,
    q_prec: DMatrix<f64>,
    q_chol: DMatrix<f64>,
    r_prec: DMatrix<f64>,
    r_chol: DMatrix<f64>,
    prior: GaussianPrior,
    b: BlockMatrix,
}

/// `h(x)` for one sensor.
pub fn measure(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![x[0].hypot(x[2]), x[2].atan2(x[0])])
}

/// Jacobian of [`measure`], 2x4.
pub fn jacobian(x: &DVector<f64>) -> DMatrix<f64> {
    let rho2 = x[0] * x[0] + x[2] * x[2];
    let rho = rho2.sqrt();
    DMatrix::from_row_slice(
        2,
        4,
        &[x[0] / rho, 0.0, x[2] / rho, 0.0, -x[2] / rho2, 0.0, x[0] / rho2, 0.0],
    )
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + two_pi
    } else {
        w
    }
}

impl RangeBearingModel {
    pub fn new(params: RangeBearingParams) -> Result<Self> {
        if params.sensors == 0 {
            return Err(PcrbError::InvalidArgument("at least one sensor is required".into()));
        }
        if !(params.period > 0.0 && params.q > 0.0 && params.range_var > 0.0 && params.azimuth_var > 0.0) {
            return Err(PcrbError::InvalidArgument(
                "period, q and noise variances must be positive".into(),
            ));
        }
        if params.prior_mean.len() != 4 || params.prior_cov.shape() != (4, 4) {
            return Err(PcrbError::Shape("prior must be 4-dimensional".into()));
        }
        chol_lower(&params.prior_cov, "prior covariance")?;
        let f = params.transition();
        let q = params.process_cov();
        let q_prec = spd_inverse(&q, "process covariance")?;
        let r_prec = spd_inverse(&params.meas_cov(), "measurement covariance")?;

        let eye = DMatrix::<f64>::identity(4, 4);
        let mut g = DMatrix::zeros(4, 12);
        g.view_mut((0, 0), (4, 4)).copy_from(&f);
        g.view_mut((0, 4), (4, 4)).copy_from(&(-(&eye + &f)));
        g.view_mut((0, 8), (4, 4)).copy_from(&eye);
        let b = BlockMatrix::from_dense(symmetrize(&(g.transpose() * &q_prec * &g)), 4)?;

        let profile = Self::profile_const();
        let prior = GaussianPrior::moving_average_window(
            &f,
            &[1.0, 1.0, 1.0],
            &q,
            &params.prior_mean,
            &params.prior_cov,
            profile.prior_window(),
        )?;
        Ok(Self {
            name: format!("range-azimuth (m={})", params.sensors),
            q_chol: chol_lower(&q, "process covariance")?,
            r_chol: chol_lower(&params.meas_cov(), "measurement covariance")?,
            f,
            q_prec,
            r_prec,
            prior,
            b,
            params,
        })
    }

    pub fn example2() -> Self {
        Self::new(RangeBearingParams::example2()).expect("built-in parameters are valid")
    }

    pub fn example2_sensors(m: usize) -> Result<Self> {
        Self::new(RangeBearingParams {
            sensors: m,
            ..RangeBearingParams::example2()
        })
    }

    pub fn params(&self) -> &RangeBearingParams {
        &self.params
    }

    const fn profile_const() -> CorrelationProfile {
        CorrelationProfile {
            l1: 0,
            l2: 2,
            l3: 0,
            l4: 0,
        }
    }

    /// `m H^T R^{-1} H` at a single state.
    pub fn information_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let h = jacobian(x);
        h.transpose() * &self.r_prec * h * self.params.sensors as f64
    }
}

impl SystemModel for RangeBearingModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn meas_dim(&self) -> usize {
        2 * self.params.sensors
    }

    fn profile(&self) -> CorrelationProfile {
        Self::profile_const()
    }

    fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    fn transition_log_density(&self, _k: usize, states: &[DVector<f64>], _meas: &[DVector<f64>]) -> f64 {
        let residual = &states[2] - &states[1] - &self.f * (&states[1] - &states[0]);
        gaussian_log_kernel(&residual, &self.q_prec)
    }

    fn measurement_log_density(
        &self,
        _k: usize,
        z_next: &DVector<f64>,
        states: &[DVector<f64>],
        _past: &[DVector<f64>],
    ) -> f64 {
        let hx = measure(&states[0]);
        (0..self.params.sensors)
            .map(|s| {
                let z = z_next.rows(2 * s, 2);
                let res = DVector::from_vec(vec![z[0] - hx[0], wrap_angle(z[1] - hx[1])]);
                gaussian_log_kernel(&res, &self.r_prec)
            })
            .sum()
    }

    fn sample_trajectory(&self, len: usize, rng: &mut dyn RngCore) -> Trajectory {
        // States first, so the state path does not depend on the sensor count.
        let x0_chol = chol_lower(&self.params.prior_cov, "prior covariance").expect("validated");
        let mut x = &self.params.prior_mean + gaussian(&x0_chol, rng);
        let mut u = [gaussian(&self.q_chol, rng), gaussian(&self.q_chol, rng)];
        let mut states = Vec::with_capacity(len);
        for _ in 0..len {
            let u_new = gaussian(&self.q_chol, rng);
            let w = &u_new + &u[0] + &u[1];
            let next = &self.f * &x + w;
            states.push(std::mem::replace(&mut x, next));
            u = [u_new, u[0].clone()];
        }
        let measurements = states
            .iter()
            .map(|x| {
                let hx = measure(x);
                let mut z = DVector::zeros(2 * self.params.sensors);
                for s in 0..self.params.sensors {
                    z.rows_mut(2 * s, 2).copy_from(&(&hx + gaussian(&self.r_chol, rng)));
                }
                z
            })
            .collect();
        Trajectory {
            states,
            measurements,
        }
    }

    fn transition_hessian(&self, _k: usize, _s: &[DVector<f64>], _m: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        Some(self.b.as_dense().clone())
    }

    fn measurement_hessian(&self, _k: usize, states: &[DVector<f64>], _m: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        Some(self.information_at(&states[0]))
    }

    fn analytic_transition_block(&self, _k: usize) -> Option<BlockMatrix> {
        Some(self.b.clone())
    }

    fn is_singular_state(&self, x: &DVector<f64>) -> bool {
        x[0].hypot(x[2]) < SINGULAR_RADIUS
    }
}
