//! Noise-correlation structure and the dynamic-system contract.
//!
//! A model is described only through its approximately factorized conditional
//! densities: the transition `p(x_{k+1} | x_k..x_{k-l2'+1}, z_k..z_{k-l4+1})` and
//! the measurement `p(z_{k+1} | x_{k+1}..x_{k-l3'+2}, z_k..z_{k-l1+1})`. Older
//! history is dropped from the conditioning, and the recursion and the oracle
//! both consume exactly this factorization.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PcrbError, Result};
use crate::linalg::{spd_inverse, symmetrize, BlockMatrix};

/// Largest accepted value for any single lag.
pub const MAX_LAG: usize = 8;

/// Finite-step correlation lags of the process and measurement noises.
///
/// * `l1`: measurement noise auto-correlation
/// * `l2`: process noise auto-correlation
/// * `l3`: backward cross-correlation of measurement with process noise
/// * `l4`: forward cross-correlation
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationProfile {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
    pub l4: usize,
}

/// Which of the three block layouts the unified recursion uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    /// `l3' > l2' + 1`
    GreaterCase,
    /// `l3' < l2' + 1`
    LessCase,
    /// `l3' = l2' + 1`
    EqualCase,
}

impl CorrelationProfile {
    pub fn new(l1: usize, l2: usize, l3: usize, l4: usize) -> Result<Self> {
        let p = Self { l1, l2, l3, l4 };
        p.validate()?;
        Ok(p)
    }

    pub const fn independent() -> Self {
        Self {
            l1: 0,
            l2: 0,
            l3: 0,
            l4: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("l1", self.l1), ("l2", self.l2), ("l3", self.l3), ("l4", self.l4)] {
            if value > MAX_LAG {
                return Err(PcrbError::LagTooLarge {
                    name,
                    value,
                    max: MAX_LAG,
                });
            }
        }
        Ok(())
    }

    /// `l2' = max(l2, 1)`; `l2 = 0` and `l2 = 1` behave identically.
    pub fn l2_eff(&self) -> usize {
        self.l2.max(1)
    }

    /// `l3' = max(l3, 1)`.
    pub fn l3_eff(&self) -> usize {
        self.l3.max(1)
    }

    pub fn l_max(&self) -> usize {
        self.l1.max(self.l2).max(self.l3).max(self.l4)
    }

    /// Number of past state blocks the recursion carries in `E_k`.
    pub fn window(&self) -> usize {
        match select_case(self) {
            CaseTag::LessCase => self.l2_eff(),
            CaseTag::GreaterCase | CaseTag::EqualCase => self.l3_eff() - 1,
        }
    }

    /// Size of the prior state window `x_0..x_{l_max}`.
    pub fn prior_window(&self) -> usize {
        self.l_max() + 1
    }
}

impl std::fmt::Display for CorrelationProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(l1={}, l2={}, l3={}, l4={})", self.l1, self.l2, self.l3, self.l4)
    }
}

/// Effective lags `(l2', l3')`.
pub fn effective_lags(profile: &CorrelationProfile) -> (usize, usize) {
    (profile.l2_eff(), profile.l3_eff())
}

pub fn select_case(profile: &CorrelationProfile) -> CaseTag {
    let (l2, l3) = effective_lags(profile);
    match l3.cmp(&(l2 + 1)) {
        std::cmp::Ordering::Greater => CaseTag::GreaterCase,
        std::cmp::Ordering::Less => CaseTag::LessCase,
        std::cmp::Ordering::Equal => CaseTag::EqualCase,
    }
}

/// Conditioning arguments of one factor: state lags and measurement lags,
/// both counted backwards from the conditioning time `k` (lag 0 is `x_k`/`z_k`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorArgs {
    pub state_lags: Vec<usize>,
    pub meas_lags: Vec<usize>,
}

/// Conditioning structure of the two factorized densities.
///
/// Transition state lags are relative to `x_k`; measurement state lags are
/// relative to `x_{k+1}` (lag 0 is `x_{k+1}`). Measurement lags of both
/// factors are relative to `z_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorizationSignature {
    pub transition: FactorArgs,
    pub measurement: FactorArgs,
}

pub fn factorization_signature(profile: &CorrelationProfile) -> FactorizationSignature {
    let (l2, l3) = effective_lags(profile);
    FactorizationSignature {
        transition: FactorArgs {
            state_lags: (0..l2).collect(),
            meas_lags: (0..profile.l4).collect(),
        },
        measurement: FactorArgs {
            state_lags: (0..l3).collect(),
            meas_lags: (0..profile.l1).collect(),
        },
    }
}

/// Gaussian prior over the leading state window `x_0..x_{w-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    block_dim: usize,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(block_dim: usize, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if block_dim == 0 || n % block_dim != 0 || covariance.shape() != (n, n) {
            return Err(PcrbError::Shape(format!(
                "prior mean of length {n} and covariance {:?} do not form a window of {block_dim}-blocks",
                covariance.shape()
            )));
        }
        spd_inverse(&covariance, "prior covariance")?;
        Ok(Self {
            block_dim,
            mean,
            covariance: symmetrize(&covariance),
        })
    }

    /// Independent blocks with a common mean and covariance.
    pub fn independent(mean: &DVector<f64>, cov: &DMatrix<f64>, window: usize) -> Result<Self> {
        let r = mean.len();
        let mut m = DVector::zeros(r * window);
        let mut c = DMatrix::zeros(r * window, r * window);
        for i in 0..window {
            m.rows_mut(i * r, r).copy_from(mean);
            c.view_mut((i * r, i * r), (r, r)).copy_from(cov);
        }
        Self::new(r, m, c)
    }

    /// Window of states generated by `x_{i+1} = F x_i + sum_j a_j w_{i-j}` with
    /// `x_0 ~ N(mean, p0)` and white `w ~ N(0, q)`; pre-window noise terms are
    /// drawn from the same law.
    pub fn moving_average_window(
        f: &DMatrix<f64>,
        ma_coeffs: &[f64],
        q: &DMatrix<f64>,
        mean: &DVector<f64>,
        p0: &DMatrix<f64>,
        window: usize,
    ) -> Result<Self> {
        let r = mean.len();
        let order = ma_coeffs.len().saturating_sub(1);
        // Base variables: x_0, then w_{-order}, ..., w_{window-2}.
        let n_noise = order + window.saturating_sub(1);
        let n_base = r * (1 + n_noise);
        let noise_col = |t: isize| -> usize { r * (1 + (t + order as isize) as usize) };

        let mut maps: Vec<DMatrix<f64>> = Vec::with_capacity(window);
        let mut x = DMatrix::zeros(r, n_base);
        x.view_mut((0, 0), (r, r)).copy_from(&DMatrix::identity(r, r));
        maps.push(x.clone());
        for i in 0..window.saturating_sub(1) {
            let mut next = f * &x;
            for (j, a) in ma_coeffs.iter().enumerate() {
                let col = noise_col(i as isize - j as isize);
                let mut v = next.view_mut((0, col), (r, r));
                v += DMatrix::identity(r, r) * *a;
            }
            maps.push(next.clone());
            x = next;
        }

        let mut base_cov = DMatrix::zeros(n_base, n_base);
        base_cov.view_mut((0, 0), (r, r)).copy_from(p0);
        for t in 0..n_noise {
            let o = r * (1 + t);
            base_cov.view_mut((o, o), (r, r)).copy_from(q);
        }
        let mut stacked = DMatrix::zeros(r * window, n_base);
        let mut m = DVector::zeros(r * window);
        let mut mean_i = mean.clone();
        for (i, map) in maps.iter().enumerate() {
            stacked.view_mut((i * r, 0), (r, n_base)).copy_from(map);
            m.rows_mut(i * r, r).copy_from(&mean_i);
            mean_i = f * mean_i;
        }
        let cov = &stacked * base_cov * stacked.transpose();
        Self::new(r, m, cov)
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn window(&self) -> usize {
        self.mean.len() / self.block_dim
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Joint information matrix of the window.
    pub fn information(&self) -> Result<BlockMatrix> {
        BlockMatrix::from_dense(
            spd_inverse(&self.covariance, "prior covariance")?,
            self.block_dim,
        )
    }

    /// Marginal covariance of block `i` (0-based).
    pub fn block_covariance(&self, i: usize) -> DMatrix<f64> {
        let r = self.block_dim;
        self.covariance.view((i * r, i * r), (r, r)).into_owned()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<DVector<f64>> {
        let l = Cholesky::new(self.covariance.clone())
            .expect("prior covariance was validated as positive definite")
            .l();
        let draw = &self.mean + l * standard_normal(self.mean.len(), rng);
        (0..self.window())
            .map(|i| draw.rows(i * self.block_dim, self.block_dim).into_owned())
            .collect()
    }
}

/// Simulated states `x_0..x_{n-1}` and measurements `z_0..z_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Contract every model supplies to the block estimators, the recursion and the oracle.
///
/// Argument slices are ordered oldest first. For the transition factor at time
/// `k`, `states` holds `x_{k-l2'+1}, ..., x_k, x_{k+1}` and `meas` holds
/// `z_{k-l4+1}, ..., z_k`. For the measurement factor, `states` holds
/// `x_{k-l3'+2}, ..., x_{k+1}` and `past_meas` holds `z_{k-l1+1}, ..., z_k`.
///
/// Implementations must be safe to evaluate concurrently.
pub trait SystemModel: Send + Sync {
    fn name(&self) -> &str;

    fn state_dim(&self) -> usize;

    fn meas_dim(&self) -> usize;

    fn profile(&self) -> CorrelationProfile;

    fn prior(&self) -> &GaussianPrior;

    /// `ln p(x_{k+1} | ...)` up to an additive constant.
    fn transition_log_density(
        &self,
        k: usize,
        states: &[DVector<f64>],
        meas: &[DVector<f64>],
    ) -> f64;

    /// `ln p(z_{k+1} | ...)` up to an additive constant.
    fn measurement_log_density(
        &self,
        k: usize,
        z_next: &DVector<f64>,
        states: &[DVector<f64>],
        past_meas: &[DVector<f64>],
    ) -> f64;

    /// Draws `x_0..x_{len-1}` and `z_0..z_{len-1}`.
    fn sample_trajectory(&self, len: usize, rng: &mut dyn RngCore) -> Trajectory;

    /// Negative Hessian of the transition log density with respect to the
    /// stacked state arguments, if available in closed form.
    fn transition_hessian(
        &self,
        _k: usize,
        _states: &[DVector<f64>],
        _meas: &[DVector<f64>],
    ) -> Option<DMatrix<f64>> {
        None
    }

    /// Negative Hessian of the measurement log density (or its conditional
    /// expectation over `z_{k+1}`) with respect to the stacked states.
    fn measurement_hessian(
        &self,
        _k: usize,
        _states: &[DVector<f64>],
        _past_meas: &[DVector<f64>],
    ) -> Option<DMatrix<f64>> {
        None
    }

    /// Closed-form `B_k`, an `(l2'+1) x (l2'+1)` block grid.
    fn analytic_transition_block(&self, _k: usize) -> Option<BlockMatrix> {
        None
    }

    /// Closed-form `C_k`, an `l3' x l3'` block grid.
    fn analytic_measurement_block(&self, _k: usize) -> Option<BlockMatrix> {
        None
    }

    /// True when `B_k` and `C_k` do not depend on `k`.
    fn time_invariant(&self) -> bool {
        false
    }

    /// States at which the measurement function is not differentiable.
    fn is_singular_state(&self, _x: &DVector<f64>) -> bool {
        false
    }
}

/// Checks dimensions and lag limits shared by every model.
pub fn validate_model(model: &dyn SystemModel) -> Result<()> {
    let profile = model.profile();
    profile.validate()?;
    if model.state_dim() == 0 || model.meas_dim() == 0 {
        return Err(PcrbError::Model("state and measurement dimensions must be positive".into()));
    }
    let prior = model.prior();
    if prior.block_dim() != model.state_dim() {
        return Err(PcrbError::Shape(format!(
            "prior block dimension {} differs from state dimension {}",
            prior.block_dim(),
            model.state_dim()
        )));
    }
    if prior.window() != profile.prior_window() {
        return Err(PcrbError::Shape(format!(
            "prior covers {} states but the profile {profile} needs {}",
            prior.window(),
            profile.prior_window()
        )));
    }
    Ok(())
}

pub(crate) fn standard_normal(n: usize, rng: &mut dyn RngCore) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Draws from `N(0, L L^T)` given the lower Cholesky factor `L`.
pub(crate) fn gaussian(chol_lower: &DMatrix<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
    chol_lower * standard_normal(chol_lower.nrows(), rng)
}

pub(crate) fn chol_lower(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(symmetrize(cov))
        .map(|c| c.l())
        .ok_or_else(|| PcrbError::Model(format!("{what} is not positive definite")))
}

/// `-0.5 r^T P r` for a residual and a precision matrix.
pub(crate) fn gaussian_log_kernel(residual: &DVector<f64>, precision: &DMatrix<f64>) -> f64 {
    -0.5 * residual.dot(&(precision * residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(l1: usize, l2: usize, l3: usize, l4: usize) -> CorrelationProfile {
        CorrelationProfile::new(l1, l2, l3, l4).unwrap()
    }

    #[test]
    fn effective_lag_examples() {
        assert_eq!(effective_lags(&p(1, 1, 2, 1)), (1, 2));
        assert_eq!(effective_lags(&p(0, 0, 0, 0)), (1, 1));
        assert_eq!(effective_lags(&p(0, 2, 0, 0)), (2, 1));
    }

    #[test]
    fn case_examples() {
        assert_eq!(select_case(&p(1, 1, 2, 1)), CaseTag::EqualCase);
        assert_eq!(select_case(&p(0, 2, 0, 0)), CaseTag::LessCase);
        assert_eq!(select_case(&p(0, 0, 4, 0)), CaseTag::GreaterCase);
    }

    #[test]
    fn l2_zero_and_one_are_equivalent() {
        let a = p(0, 0, 3, 0);
        let b = p(0, 1, 3, 0);
        assert_eq!(effective_lags(&a), effective_lags(&b));
        assert_eq!(select_case(&a), select_case(&b));
        assert_eq!(a.window(), b.window());
    }

    #[test]
    fn lags_above_eight_rejected() {
        assert!(matches!(
            CorrelationProfile::new(0, 9, 0, 0),
            Err(PcrbError::LagTooLarge { name: "l2", .. })
        ));
        assert!(CorrelationProfile::new(8, 8, 8, 8).is_ok());
    }

    #[test]
    fn signature_examples() {
        let s = factorization_signature(&p(0, 0, 0, 0));
        assert_eq!(s.transition.state_lags, vec![0]);
        assert!(s.transition.meas_lags.is_empty());
        assert_eq!(s.measurement.state_lags, vec![0]);
        assert!(s.measurement.meas_lags.is_empty());

        // x_k, z_k for the transition; x_{k+1}, x_k, z_k for the measurement
        let s = factorization_signature(&p(1, 1, 2, 1));
        assert_eq!(s.transition.state_lags, vec![0]);
        assert_eq!(s.transition.meas_lags, vec![0]);
        assert_eq!(s.measurement.state_lags, vec![0, 1]);
        assert_eq!(s.measurement.meas_lags, vec![0]);

        let s = factorization_signature(&p(0, 2, 0, 0));
        assert_eq!(s.transition.state_lags, vec![0, 1]);
        assert_eq!(s.measurement.state_lags, vec![0]);
    }

    #[test]
    fn moving_average_window_matches_direct_covariance() {
        // scalar x_{i+1} = x_i + w_i + 0.5 w_{i-1}, x_0 ~ N(0, 2), w ~ N(0, 1)
        let f = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let prior = GaussianPrior::moving_average_window(
            &f,
            &[1.0, 0.5],
            &q,
            &DVector::from_element(1, 3.0),
            &DMatrix::from_element(1, 1, 2.0),
            3,
        )
        .unwrap();
        // x1 = x0 + w0 + .5 w_{-1}; x2 = x0 + 1.5 w0 + .5 w_{-1} + w1
        let c = prior.covariance();
        assert!((c[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((c[(1, 1)] - (2.0 + 1.0 + 0.25)).abs() < 1e-12);
        assert!((c[(2, 2)] - (2.0 + 2.25 + 0.25 + 1.0)).abs() < 1e-12);
        assert!((c[(1, 2)] - (2.0 + 1.5 + 0.25)).abs() < 1e-12);
        assert!((prior.mean()[2] - 3.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn case_assignment_is_a_partition(l1 in 0usize..=8, l2 in 0usize..=8, l3 in 0usize..=8, l4 in 0usize..=8) {
                let prof = p(l1, l2, l3, l4);
                let (a, b) = effective_lags(&prof);
                prop_assert!(a >= 1 && b >= 1);
                let hits = [b > a + 1, b < a + 1, b == a + 1].iter().filter(|x| **x).count();
                prop_assert_eq!(hits, 1);
                let expected = if b > a + 1 { CaseTag::GreaterCase } else if b < a + 1 { CaseTag::LessCase } else { CaseTag::EqualCase };
                prop_assert_eq!(select_case(&prof), expected);
            }

            #[test]
            fn signature_counts(l1 in 0usize..=8, l2 in 0usize..=8, l3 in 0usize..=8, l4 in 0usize..=8) {
                let prof = p(l1, l2, l3, l4);
                let s = factorization_signature(&prof);
                prop_assert_eq!(s.transition.state_lags.len() + s.transition.meas_lags.len(), prof.l2_eff() + l4);
                prop_assert_eq!(s.measurement.state_lags.len() + s.measurement.meas_lags.len(), prof.l3_eff() + l1);
            }
        }
    }
}
