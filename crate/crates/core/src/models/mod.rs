//! Concrete models.

pub mod linear;
pub mod ma_tracking;
pub mod range_bearing;

pub use linear::{LinearGaussianModel, LinearGaussianSpec};
pub use ma_tracking::{MaTrackingModel, MaTrackingParams, NoisePath};
pub use range_bearing::{RangeBearingModel, RangeBearingParams};

use crate::error::{PcrbError, Result};
use crate::noise::SystemModel;

/// Any of the concrete models, as produced from a configuration.
#[derive(Debug, Clone)]
pub enum AnyModel {
    MaTracking(MaTrackingModel),
    RangeBearing(RangeBearingModel),
    Linear(LinearGaussianModel),
}

impl AnyModel {
    pub fn as_model(&self) -> &dyn SystemModel {
        match self {
            AnyModel::MaTracking(m) => m,
            AnyModel::RangeBearing(m) => m,
            AnyModel::Linear(m) => m,
        }
    }

    /// Parameters of the MA tracking family, which the baselines need.
    pub fn ma_params(&self) -> Option<&MaTrackingParams> {
        match self {
            AnyModel::MaTracking(m) => Some(m.params()),
            _ => None,
        }
    }

    /// The same model observed by `m` independent sensors.
    pub fn with_sensors(&self, m: usize) -> Result<AnyModel> {
        match self {
            AnyModel::MaTracking(x) => Ok(AnyModel::MaTracking(MaTrackingModel::new(MaTrackingParams {
                sensors: m,
                ..x.params().clone()
            })?)),
            AnyModel::RangeBearing(x) => Ok(AnyModel::RangeBearing(RangeBearingModel::new(RangeBearingParams {
                sensors: m,
                ..x.params().clone()
            })?)),
            AnyModel::Linear(_) => Err(PcrbError::Model(
                "a custom model has no sensor family; use a built-in or linear_gaussian_ma model".into(),
            )),
        }
    }
}

impl SystemModel for AnyModel {
    fn name(&self) -> &str {
        self.as_model().name()
    }

    fn state_dim(&self) -> usize {
        self.as_model().state_dim()
    }

    fn meas_dim(&self) -> usize {
        self.as_model().meas_dim()
    }

    fn profile(&self) -> crate::noise::CorrelationProfile {
        self.as_model().profile()
    }

    fn prior(&self) -> &crate::noise::GaussianPrior {
        self.as_model().prior()
    }

    fn transition_log_density(&self, k: usize, s: &[nalgebra::DVector<f64>], m: &[nalgebra::DVector<f64>]) -> f64 {
        self.as_model().transition_log_density(k, s, m)
    }

    fn measurement_log_density(
        &self,
        k: usize,
        z_next: &nalgebra::DVector<f64>,
        s: &[nalgebra::DVector<f64>],
        m: &[nalgebra::DVector<f64>],
    ) -> f64 {
        self.as_model().measurement_log_density(k, z_next, s, m)
    }

    fn sample_trajectory(&self, len: usize, rng: &mut dyn rand::RngCore) -> crate::noise::Trajectory {
        self.as_model().sample_trajectory(len, rng)
    }

    fn transition_hessian(
        &self,
        k: usize,
        s: &[nalgebra::DVector<f64>],
        m: &[nalgebra::DVector<f64>],
    ) -> Option<nalgebra::DMatrix<f64>> {
        self.as_model().transition_hessian(k, s, m)
    }

    fn measurement_hessian(
        &self,
        k: usize,
        s: &[nalgebra::DVector<f64>],
        m: &[nalgebra::DVector<f64>],
    ) -> Option<nalgebra::DMatrix<f64>> {
        self.as_model().measurement_hessian(k, s, m)
    }

    fn analytic_transition_block(&self, k: usize) -> Option<crate::linalg::BlockMatrix> {
        self.as_model().analytic_transition_block(k)
    }

    fn analytic_measurement_block(&self, k: usize) -> Option<crate::linalg::BlockMatrix> {
        self.as_model().analytic_measurement_block(k)
    }

    fn time_invariant(&self) -> bool {
        self.as_model().time_invariant()
    }

    fn is_singular_state(&self, x: &nalgebra::DVector<f64>) -> bool {
        self.as_model().is_singular_state(x)
    }
}
