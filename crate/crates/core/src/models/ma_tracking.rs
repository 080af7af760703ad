//! Linear tracking model with MA(1) process and measurement noise and an
//! optional one-step cross term:
//!
//! ```text
//! x_{k+1} = F x_k + w_k,                 w_k = u_k + a u_{k-1},       u ~ N(0, Q)
//! z_k^s   = H x_k + v_k^s,               v_k^s = e_k^s + a e_{k-1}^s + c w_{k-1},   e ~ N(0, R)
//! ```
//!
//! for sensors `s = 1..m` with independent `e^s`. The conditionals used for
//! the bound rewrite the lagged noise through `z_k` and keep the remaining
//! lagged terms as known offsets, which do not touch the state Hessians.
//! The transition density reads the first sensor.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{PcrbError, Result};
use crate::linalg::BlockMatrix;
use crate::models::linear::{LinearGaussianModel, LinearGaussianSpec};
use crate::noise::{
    chol_lower, gaussian, CorrelationProfile, GaussianPrior, SystemModel, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MaTrackingParams {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Covariance of the white driving term of the process noise.
    pub q: DMatrix<f64>,
    /// Covariance of the white driving term of each sensor's noise.
    pub r: DMatrix<f64>,
    /// MA(1) coefficient shared by process and measurement noise.
    pub ma_coeff: f64,
    /// Whether `w_{k-1}` enters the measurement noise. Needs `H` square.
    pub cross: bool,
    pub sensors: usize,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
}

/// Realized noises alongside a trajectory: `w_k` for `k = 0..len-1` and
/// `v_k^s` for `k = 0..len-1`, one vector per sensor.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub process: Vec<DVector<f64>>,
    pub measurement: Vec<Vec<DVector<f64>>>,
}

#[derive(Debug, Clone)]
pub struct MaTrackingModel {
    params: MaTrackingParams,
    inner: LinearGaussianModel,
    q_chol: DMatrix<f64>,
    r_chol: DMatrix<f64>,
}

impl MaTrackingParams {
    /// Constant-velocity target in one dimension sampled every 2 s, with
    /// position and velocity both measured.
    pub fn example1() -> Self {
        let t = 2.0;
        let q = 10.0;
        Self {
            f: DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]),
            h: DMatrix::identity(2, 2),
            q: DMatrix::from_row_slice(
                2,
                2,
                &[t.powi(3) / 3.0 * q, t * t / 2.0 * q, t * t / 2.0 * q, t * q],
            ),
            r: DMatrix::from_diagonal(&DVector::from_vec(vec![400.0, 25.0])),
            ma_coeff: 0.2,
            cross: true,
            sensors: 1,
            prior_mean: DVector::from_vec(vec![0.0, 10.0]),
            prior_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 10.0])),
        }
    }

    pub fn profile(&self) -> CorrelationProfile {
        let ma = usize::from(self.ma_coeff != 0.0);
        let cross = usize::from(self.cross);
        CorrelationProfile {
            l1: ma,
            l2: ma,
            l3: 2 * cross,
            l4: ma * cross,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn sensor_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Stationary covariance of `w_k`.
    pub fn process_marginal(&self) -> DMatrix<f64> {
        &self.q * (1.0 + self.ma_coeff * self.ma_coeff)
    }

    /// Covariance of the stacked measurement noise `v_k` over all sensors.
    /// The shared cross term correlates the sensors.
    pub fn measurement_marginal(&self) -> DMatrix<f64> {
        let n = self.sensor_dim();
        let m = self.sensors;
        let s = 1.0 + self.ma_coeff * self.ma_coeff;
        let mut out = DMatrix::zeros(m * n, m * n);
        for i in 0..m {
            out.view_mut((i * n, i * n), (n, n)).copy_from(&(&self.r * s));
            if self.cross {
                for j in 0..m {
                    let mut v = out.view_mut((i * n, j * n), (n, n));
                    v += self.process_marginal();
                }
            }
        }
        out
    }

    /// `E[v_{k+1} w_k^T]` for the stacked sensors.
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        let n = self.sensor_dim();
        let r = self.state_dim();
        let mut out = DMatrix::zeros(self.sensors * n, r);
        if self.cross {
            for i in 0..self.sensors {
                out.view_mut((i * n, 0), (n, r)).copy_from(&self.process_marginal());
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let r = self.f.nrows();
        let n = self.h.nrows();
        if r == 0 || self.f.ncols() != r || self.h.ncols() != r {
            return Err(PcrbError::Shape(format!(
                "F is {:?} and H is {:?}",
                self.f.shape(),
                self.h.shape()
            )));
        }
        if self.q.shape() != (r, r) || self.r.shape() != (n, n) {
            return Err(PcrbError::Shape("noise covariances do not match F and H".into()));
        }
        if self.cross && n != r {
            return Err(PcrbError::Model(
                "the cross term adds process noise to the measurement, so H must be square".into(),
            ));
        }
        if self.sensors == 0 {
            return Err(PcrbError::InvalidArgument("at least one sensor is required".into()));
        }
        if !self.ma_coeff.is_finite() {
            return Err(PcrbError::InvalidArgument("MA coefficient must be finite".into()));
        }
        if self.prior_mean.len() != r || self.prior_cov.shape() != (r, r) {
            return Err(PcrbError::Shape("prior does not match the state dimension".into()));
        }
        Ok(())
    }
}

fn stack_rows(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), b.shape()).copy_from(b);
        at += b.nrows();
    }
    out
}

fn block_diag(block: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let (p, q) = block.shape();
    let mut out = DMatrix::zeros(p * count, q * count);
    for i in 0..count {
        out.view_mut((i * p, i * q), (p, q)).copy_from(block);
    }
    out
}

impl MaTrackingModel {
    pub fn new(params: MaTrackingParams) -> Result<Self> {
        params.validate()?;
        let profile = params.profile();
        let r = params.state_dim();
        let n = params.sensor_dim();
        let m = params.sensors;
        let a = params.ma_coeff;
        let eye_r = DMatrix::<f64>::identity(r, r);
        let eye_mn = DMatrix::<f64>::identity(m * n, m * n);

        let (transition_state, transition_meas, measurement_state, measurement_meas) =
            if params.cross {
                // x_{k+1} = (F - aH) x_k + a z_k^1 + ...
                // z_{k+1}^s = (H + I) x_{k+1} - (F + aH) x_k + a z_k^s + ...
                let mut a_state = vec![&params.f - &params.h * a];
                let mut t_meas = vec![];
                if profile.l4 == 1 {
                    let mut mz = DMatrix::zeros(r, m * n);
                    mz.view_mut((0, 0), (r, n)).copy_from(&(&eye_r * a));
                    t_meas.push(mz);
                } else {
                    a_state = vec![params.f.clone()];
                }
                let h_next = stack_rows(&vec![&params.h + &eye_r; m]);
                let h_prev = stack_rows(&vec![-(&params.f + &params.h * a); m]);
                let m_meas = if profile.l1 == 1 { vec![&eye_mn * a] } else { vec![] };
                (a_state, t_meas, vec![h_next, h_prev], m_meas)
            } else {
                let h_next = stack_rows(&vec![params.h.clone(); m]);
                let m_meas = if profile.l1 == 1 {
                    vec![DMatrix::zeros(m * n, m * n)]
                } else {
                    vec![]
                };
                (vec![params.f.clone()], vec![], vec![h_next], m_meas)
            };

        let ma: Vec<f64> = if a != 0.0 { vec![1.0, a] } else { vec![1.0] };
        let prior = GaussianPrior::moving_average_window(
            &params.f,
            &ma,
            &params.q,
            &params.prior_mean,
            &params.prior_cov,
            profile.prior_window(),
        )?;
        let inner = LinearGaussianModel::new(
            format!("ma tracking (m={m})"),
            profile,
            LinearGaussianSpec {
                transition_state,
                transition_meas,
                process_cov: params.q.clone(),
                measurement_state,
                measurement_meas,
                meas_cov: block_diag(&params.r, m),
            },
            prior,
        )?;
        Ok(Self {
            q_chol: chol_lower(&params.q, "process covariance")?,
            r_chol: chol_lower(&params.r, "measurement covariance")?,
            params,
            inner,
        })
    }

    pub fn example1() -> Self {
        Self::new(MaTrackingParams::example1()).expect("built-in parameters are valid")
    }

    /// Example 1 dynamics observed by `m` independent sensors.
    pub fn example1_sensors(m: usize) -> Result<Self> {
        Self::new(MaTrackingParams {
            sensors: m,
            ..MaTrackingParams::example1()
        })
    }

    pub fn params(&self) -> &MaTrackingParams {
        &self.params
    }

    pub fn linear(&self) -> &LinearGaussianModel {
        &self.inner
    }

    /// Draws a trajectory from the moving-average law directly, together with
    /// the realized noises.
    pub fn sample_with_noise(&self, len: usize, rng: &mut dyn RngCore) -> (Trajectory, NoisePath) {
        let p = &self.params;
        let r = p.state_dim();
        let n = p.sensor_dim();
        let a = p.ma_coeff;
        let x0_chol = chol_lower(&p.prior_cov, "prior covariance").expect("validated");

        let mut u_prev = gaussian(&self.q_chol, rng);
        let mut x = &p.prior_mean + gaussian(&x0_chol, rng);
        let mut e_prev: Vec<DVector<f64>> =
            (0..p.sensors).map(|_| gaussian(&self.r_chol, rng)).collect();
        let mut w_prev = DVector::zeros(r);
        // w_{-1} from the same law, so v_0 carries the stationary cross term.
        let u_prev2 = gaussian(&self.q_chol, rng);
        w_prev += &u_prev + &u_prev2 * a;

        let mut states = Vec::with_capacity(len);
        let mut measurements = Vec::with_capacity(len);
        let mut process = Vec::with_capacity(len);
        let mut noise_meas = Vec::with_capacity(len);
        for _ in 0..len {
            let mut z = DVector::zeros(p.sensors * n);
            let mut vs = Vec::with_capacity(p.sensors);
            for (s, e_old) in e_prev.iter_mut().enumerate() {
                let e = gaussian(&self.r_chol, rng);
                let mut v = &e + &*e_old * a;
                if p.cross {
                    v += &w_prev;
                }
                z.rows_mut(s * n, n).copy_from(&(&p.h * &x + &v));
                vs.push(v);
                *e_old = e;
            }
            let u = gaussian(&self.q_chol, rng);
            let w = &u + &u_prev * a;
            states.push(x.clone());
            measurements.push(z);
            noise_meas.push(vs);
            process.push(w.clone());
            x = &p.f * &x + &w;
            u_prev = u;
            w_prev = w;
        }
        (
            Trajectory {
                states,
                measurements,
            },
            NoisePath {
                process,
                measurement: noise_meas,
            },
        )
    }
}

impl SystemModel for MaTrackingModel {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn meas_dim(&self) -> usize {
        self.inner.meas_dim()
    }

    fn profile(&self) -> CorrelationProfile {
        self.inner.profile()
    }

    fn prior(&self) -> &GaussianPrior {
        self.inner.prior()
    }

    fn transition_log_density(&self, k: usize, states: &[DVector<f64>], meas: &[DVector<f64>]) -> f64 {
        self.inner.transition_log_density(k, states, meas)
    }

    fn measurement_log_density(
        &self,
        k: usize,
        z_next: &DVector<f64>,
        states: &[DVector<f64>],
        past_meas: &[DVector<f64>],
    ) -> f64 {
        self.inner.measurement_log_density(k, z_next, states, past_meas)
    }

    fn sample_trajectory(&self, len: usize, rng: &mut dyn RngCore) -> Trajectory {
        self.sample_with_noise(len, rng).0
    }

    fn transition_hessian(&self, k: usize, s: &[DVector<f64>], m: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        self.inner.transition_hessian(k, s, m)
    }

    fn measurement_hessian(&self, k: usize, s: &[DVector<f64>], m: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        self.inner.measurement_hessian(k, s, m)
    }

    fn analytic_transition_block(&self, k: usize) -> Option<BlockMatrix> {
        self.inner.analytic_transition_block(k)
    }

    fn analytic_measurement_block(&self, k: usize) -> Option<BlockMatrix> {
        self.inner.analytic_measurement_block(k)
    }

    fn time_invariant(&self) -> bool {
        true
    }
}
