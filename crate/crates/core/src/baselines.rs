//! Approximate bounds that handle the correlated noise in simpler ways, for
//! comparison with the exact recursion on the MA tracking family.
//!
//! - ignore: treat both noises as white with their marginal covariances;
//! - augmented: fit AR(1) models to the noises and carry them in the state;
//! - prewhiten: remove the process/measurement cross-correlation by a
//!   measurement transformation and ignore the auto-correlation.
//!
//! All three start from `x_0 ~ N(mean, P0)` and fold in `z_1, z_2, ...`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::blocks::{DBlocks, McDiagnostics};
use crate::error::{PcrbError, Result};
use crate::linalg::{spd_inverse, symmetrize, BlockMatrix};
use crate::models::linear::{LinearGaussianModel, LinearGaussianSpec};
use crate::models::ma_tracking::MaTrackingParams;
use crate::noise::{select_case, CorrelationProfile, GaussianPrior};
use crate::recursion::{step_corollary4, PcrbTrace, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Baseline {
    Ignore,
    Augmented,
    Prewhiten,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Ignore, Baseline::Augmented, Baseline::Prewhiten];

    /// Column label used in comparison output.
    pub fn column(&self) -> &'static str {
        match self {
            Baseline::Ignore => "pcrb_i",
            Baseline::Augmented => "pcrb_a",
            Baseline::Prewhiten => "pcrb_p",
        }
    }

    pub fn run(&self, params: &MaTrackingParams, horizon: usize) -> Result<PcrbTrace> {
        match self {
            Baseline::Ignore => pcrb_ignore_correlation(params, horizon),
            Baseline::Augmented => pcrb_augmented(params, horizon),
            Baseline::Prewhiten => pcrb_prewhiten(params, horizon),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Baseline::Ignore => "i",
            Baseline::Augmented => "a",
            Baseline::Prewhiten => "p",
        };
        f.write_str(s)
    }
}

impl FromStr for Baseline {
    type Err = PcrbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "i" => Ok(Baseline::Ignore),
            "a" => Ok(Baseline::Augmented),
            "p" => Ok(Baseline::Prewhiten),
            other => Err(PcrbError::InvalidArgument(format!(
                "unknown baseline '{other}', expected i, a or p"
            ))),
        }
    }
}

/// Parses a comma-separated list such as `i,a,p`. Duplicates are dropped.
pub fn parse_baselines(list: &str) -> Result<Vec<Baseline>> {
    let mut out = Vec::new();
    for item in list.split(',').filter(|s| !s.trim().is_empty()) {
        let b: Baseline = item.parse()?;
        if !out.contains(&b) {
            out.push(b);
        }
    }
    Ok(out)
}

fn trace_from(profile: CorrelationProfile, infos: Vec<DMatrix<f64>>, started: Instant) -> Result<PcrbTrace> {
    let entries = infos
        .into_iter()
        .enumerate()
        .map(|(i, j)| TraceEntry::from_info(i + 1, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcrbTrace {
        profile,
        case: select_case(&profile),
        entries,
        wall_time: started.elapsed(),
        mc: McDiagnostics::default(),
    })
}

fn stacked_h(params: &MaTrackingParams) -> DMatrix<f64> {
    let n = params.sensor_dim();
    let r = params.state_dim();
    let mut out = DMatrix::zeros(params.sensors * n, r);
    for s in 0..params.sensors {
        out.view_mut((s * n, 0), (n, r)).copy_from(&params.h);
    }
    out
}

/// `J_{k+1} = D22 - D21 (D11 + J_k)^{-1} D12` from `J_0 = P0^{-1}`, with one
/// `D` per step built from a linear model whose factors span `(x_k, x_{k+1})`.
fn pairwise_trace(model: &LinearGaussianModel, p0: &DMatrix<f64>, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let r = p0.nrows();
    let b = model.b();
    let c = model.c();
    // Pad a single-state C onto the (x_k, x_{k+1}) grid.
    let c2 = if c.rows() == 1 {
        let mut g = BlockMatrix::zeros(2, 2, r);
        g.set_block(2, 2, &c.block(1, 1));
        g
    } else {
        c.clone()
    };
    let d = DBlocks {
        d11: BlockMatrix::from_dense(b.block(1, 1) + c2.block(1, 1), r)?,
        d12: BlockMatrix::from_dense(b.block(1, 2) + c2.block(1, 2), r)?,
        d21: BlockMatrix::from_dense(b.block(2, 1) + c2.block(2, 1), r)?,
        d22: b.block(2, 2) + c2.block(2, 2),
    };
    let mut j = spd_inverse(p0, "prior covariance")?;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        j = step_corollary4(&j, &d)?;
        out.push(j.clone());
    }
    Ok(out)
}

fn white_noise_model(
    params: &MaTrackingParams,
    profile: CorrelationProfile,
    process_cov: DMatrix<f64>,
    measurement_state: Vec<DMatrix<f64>>,
    meas_cov: DMatrix<f64>,
) -> Result<LinearGaussianModel> {
    LinearGaussianModel::new(
        "white-noise surrogate",
        profile,
        LinearGaussianSpec {
            transition_state: vec![params.f.clone()],
            transition_meas: vec![],
            process_cov,
            measurement_state,
            measurement_meas: vec![],
            meas_cov,
        },
        // Only the blocks are used; the prior just has to cover the window.
        GaussianPrior::independent(&params.prior_mean, &params.prior_cov, profile.prior_window())?,
    )
}

/// Bound for white noises with the given process and stacked measurement covariances.
pub fn pcrb_ignore_correlation_with(
    params: &MaTrackingParams,
    process_cov: DMatrix<f64>,
    meas_cov: DMatrix<f64>,
    horizon: usize,
) -> Result<PcrbTrace> {
    let started = Instant::now();
    let profile = CorrelationProfile::independent();
    let model = white_noise_model(params, profile, process_cov, vec![stacked_h(params)], meas_cov)?;
    trace_from(profile, pairwise_trace(&model, &params.prior_cov, horizon)?, started)
}

/// Treats `w_k` and `v_k` as white with their stationary marginal covariances.
pub fn pcrb_ignore_correlation(params: &MaTrackingParams, horizon: usize) -> Result<PcrbTrace> {
    pcrb_ignore_correlation_with(
        params,
        params.process_marginal(),
        params.measurement_marginal(),
        horizon,
    )
}

/// Keeps the one-step cross-covariance `S = E[v_{k+1} w_k^T]` by writing
/// `z_{k+1} = (H + S Q^{-1}) x_{k+1} - S Q^{-1} F x_k + v'` with `v'`
/// uncorrelated with `w_k`, and drops the auto-correlation.
pub fn pcrb_prewhiten(params: &MaTrackingParams, horizon: usize) -> Result<PcrbTrace> {
    let started = Instant::now();
    let qw = params.process_marginal();
    let qw_inv = spd_inverse(&qw, "process marginal")?;
    let s = params.cross_covariance();
    let gain = &s * &qw_inv;
    let meas_cov = symmetrize(&(params.measurement_marginal() - &gain * s.transpose()));
    let h = stacked_h(params);
    let (profile, measurement_state) = if params.cross {
        (
            CorrelationProfile::new(0, 0, 2, 0)?,
            vec![&h + &gain, -(&gain * &params.f)],
        )
    } else {
        (CorrelationProfile::independent(), vec![h])
    };
    let model = white_noise_model(params, profile, qw, measurement_state, meas_cov)?;
    trace_from(profile, pairwise_trace(&model, &params.prior_cov, horizon)?, started)
}

/// Covariances of the AR(1) residuals `w_k - a w_{k-1}` and
/// `v_k - a v_{k-1}` (stacked over sensors), keeping only the zero-lag terms.
pub fn ar_residual_covariances(params: &MaTrackingParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let a4 = params.ma_coeff.powi(4);
    let beta = &params.q * (1.0 + a4);
    let n = params.sensor_dim();
    let m = params.sensors;
    let mut gamma = DMatrix::zeros(m * n, m * n);
    for i in 0..m {
        gamma.view_mut((i * n, i * n), (n, n)).copy_from(&(&params.r * (1.0 + a4)));
        if params.cross {
            for j in 0..m {
                let mut v = gamma.view_mut((i * n, j * n), (n, n));
                v += &params.q * (1.0 + a4);
            }
        }
    }
    (beta, gamma)
}

/// Approximates `w_k = a w_{k-1} + beta_k` and `v_k = a v_{k-1} + gamma_k`
/// with white, mutually independent `beta`, `gamma`, augments the state to
/// `(x_k, w_k, v_k)` and runs the covariance recursion of the linear model.
/// The reported information is the inverse of the `x` block of the
/// augmented bound.
pub fn pcrb_augmented(params: &MaTrackingParams, horizon: usize) -> Result<PcrbTrace> {
    let started = Instant::now();
    let a = params.ma_coeff;
    if a.abs() >= 1.0 {
        return Err(PcrbError::Unsupported {
            baseline: "augmented",
            reason: format!("AR coefficient {a} is not stable"),
        });
    }
    let r = params.state_dim();
    let mn = params.sensors * params.sensor_dim();
    let dim = 2 * r + mn;
    let (beta, gamma) = ar_residual_covariances(params);

    let mut trans = DMatrix::zeros(dim, dim);
    trans.view_mut((0, 0), (r, r)).copy_from(&params.f);
    trans.view_mut((0, r), (r, r)).copy_from(&DMatrix::identity(r, r));
    trans.view_mut((r, r), (r, r)).copy_from(&(DMatrix::identity(r, r) * a));
    trans.view_mut((2 * r, 2 * r), (mn, mn)).copy_from(&(DMatrix::identity(mn, mn) * a));

    let mut noise = DMatrix::zeros(dim, dim);
    noise.view_mut((r, r), (r, r)).copy_from(&beta);
    noise.view_mut((2 * r, 2 * r), (mn, mn)).copy_from(&gamma);

    let mut obs = DMatrix::zeros(mn, dim);
    obs.view_mut((0, 0), (mn, r)).copy_from(&stacked_h(params));
    obs.view_mut((0, 2 * r), (mn, mn)).copy_from(&DMatrix::identity(mn, mn));

    // Stationary AR(1) covariances for the initial noise states.
    let stat = 1.0 / (1.0 - a * a);
    let mut p = DMatrix::zeros(dim, dim);
    p.view_mut((0, 0), (r, r)).copy_from(&params.prior_cov);
    p.view_mut((r, r), (r, r)).copy_from(&(&beta * stat));
    p.view_mut((2 * r, 2 * r), (mn, mn)).copy_from(&(&gamma * stat));

    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut infos = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let pred = symmetrize(&(&trans * &p * trans.transpose() + &noise));
        let innov = symmetrize(&(&obs * &pred * obs.transpose()));
        let gain = &pred * obs.transpose() * spd_inverse(&innov, "innovation covariance")?;
        let keep = &eye - &gain * &obs;
        p = symmetrize(&(&keep * &pred * keep.transpose()));
        let px = p.view((0, 0), (r, r)).into_owned();
        infos.push(spd_inverse(&px, "augmented state marginal")?);
    }
    trace_from(CorrelationProfile::independent(), infos, started)
}

/// Draws `(w_k, v_{k+1} - S Q^{-1} w_k)` pairs from the exact noise law for
/// checking that the transformed measurement noise is uncorrelated with the
/// process noise.
pub fn prewhitened_noise_pairs(
    params: &MaTrackingParams,
    model: &crate::models::MaTrackingModel,
    count: usize,
    seed: u64,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let gain = params.cross_covariance() * spd_inverse(&params.process_marginal(), "process marginal")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    // Long paths amortize the start-up draws; pairs within a path share no
    // driving terms beyond one lag, which the caller accounts for by
    // subsampling every third step.
    let per_path = 60;
    while out.len() < count {
        let (_, noise) = model.sample_with_noise(per_path + 2, &mut rng);
        for k in (0..per_path).step_by(3) {
            if out.len() == count {
                break;
            }
            let w = noise.process[k].clone();
            let v: Vec<f64> = noise.measurement[k + 1].iter().flat_map(|v| v.iter().copied()).collect();
            let v = DVector::from_vec(v) - &gain * &w;
            out.push((w, v));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_list() {
        assert_eq!(parse_baselines("i,a,p").unwrap(), Baseline::ALL.to_vec());
        assert_eq!(parse_baselines("p, i,p").unwrap(), vec![Baseline::Prewhiten, Baseline::Ignore]);
        assert!(parse_baselines("x").is_err());
        assert!(parse_baselines("").unwrap().is_empty());
    }

    #[test]
    fn ar_residual_covariances_example1() {
        let p = MaTrackingParams::example1();
        let (beta, gamma) = ar_residual_covariances(&p);
        let s = 1.0 + 0.2f64.powi(4);
        assert!((beta - &p.q * s).abs().max() < 1e-12);
        assert!((gamma - (&p.q + &p.r) * s).abs().max() < 1e-12);
    }

    #[test]
    fn golden_ratio_ignore() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let p = MaTrackingParams {
            f: one.clone(),
            h: one.clone(),
            q: one.clone(),
            r: one.clone(),
            ma_coeff: 0.0,
            cross: false,
            sensors: 1,
            prior_mean: DVector::zeros(1),
            prior_cov: one,
        };
        let t = pcrb_ignore_correlation(&p, 40).unwrap();
        assert!((t.entries[0].info[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((t.entries[1].info[(0, 0)] - 1.6).abs() < 1e-15);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((t.last().info[(0, 0)] - golden).abs() < 1e-10);
    }
}
