//! Expected negative log-density Hessian blocks `B_k`, `C_k` and the `D_k`
//! layouts of the three recursion cases.
//!
//! `B_k^{i,j}` is the expected negative Hessian of the transition factor with
//! respect to `x_{k-l2'+i}` and `x_{k-l2'+j}`, for `i, j = 1..=l2'+1`.
//! `C_k^{i,j}` is the same for the measurement factor over `x_{k+1+i-l3'}` and
//! `x_{k+1+j-l3'}`, for `i, j = 1..=l3'`.
//!
//! Sampled expectations are taken over the model's joint trajectory law. Each
//! sample index owns its own ChaCha stream and partial sums are reduced in a
//! fixed chunk order, so results do not depend on the rayon pool size.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PcrbError, Result};
use crate::linalg::{symmetrize, BlockMatrix};
use crate::noise::{select_case, CaseTag, CorrelationProfile, SystemModel};

/// Samples per reduction chunk. Fixed so the summation tree never changes.
const CHUNK: usize = 256;
/// Resampling attempts per sample before giving up on a singular region.
const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Closed-form blocks from the model; errors if the model has none.
    Analytic,
    /// Closed-form blocks where the model has them, sampled otherwise.
    /// Pointwise Hessians come from the model when available.
    MonteCarlo,
    /// Every block sampled, with central-difference Hessians at each sample.
    FiniteDifferenceMc,
}

/// How `B_k`/`C_k` expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationEstimator {
    pub mode: EstimatorMode,
    #[serde(rename = "samples")]
    pub sample_count: usize,
    pub seed: u64,
}

impl ExpectationEstimator {
    pub const fn analytic() -> Self {
        Self {
            mode: EstimatorMode::Analytic,
            sample_count: 1,
            seed: 0,
        }
    }

    pub const fn monte_carlo(sample_count: usize, seed: u64) -> Self {
        Self {
            mode: EstimatorMode::MonteCarlo,
            sample_count,
            seed,
        }
    }

    pub const fn finite_difference(sample_count: usize, seed: u64) -> Self {
        Self {
            mode: EstimatorMode::FiniteDifferenceMc,
            sample_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(PcrbError::InvalidArgument("sample_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_sampling(&self) -> bool {
        self.mode != EstimatorMode::Analytic
    }
}

/// A block estimate with per-entry standard errors when it was sampled.
#[derive(Debug, Clone)]
pub struct BlockEstimate {
    pub mean: BlockMatrix,
    pub std_err: Option<DMatrix<f64>>,
}

/// Sampling bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct McDiagnostics {
    pub samples: usize,
    /// Trajectories rejected because a state hit a measurement singularity.
    pub rejected: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Factor {
    Transition,
    Measurement,
}

impl Factor {
    fn label(self) -> &'static str {
        match self {
            Factor::Transition => "transition",
            Factor::Measurement => "measurement",
        }
    }

    fn grid(self, profile: &CorrelationProfile) -> usize {
        match self {
            Factor::Transition => profile.l2_eff() + 1,
            Factor::Measurement => profile.l3_eff(),
        }
    }
}

fn check_time(model: &dyn SystemModel, k: usize) -> Result<()> {
    let l_max = model.profile().l_max();
    if k < l_max {
        return Err(PcrbError::InvalidArgument(format!(
            "blocks at k={k} need k >= l_max={l_max}"
        )));
    }
    Ok(())
}

fn closed_form(model: &dyn SystemModel, factor: Factor, k: usize) -> Option<BlockMatrix> {
    match factor {
        Factor::Transition => model.analytic_transition_block(k),
        Factor::Measurement => model.analytic_measurement_block(k),
    }
}

fn check_block(model: &dyn SystemModel, factor: Factor, block: &BlockMatrix) -> Result<()> {
    let g = factor.grid(&model.profile());
    if block.rows() != g || block.cols() != g || block.block_dim() != model.state_dim() {
        return Err(PcrbError::Shape(format!(
            "{} block is {}x{} of {}-blocks, expected {g}x{g} of {}-blocks",
            factor.label(),
            block.rows(),
            block.cols(),
            block.block_dim(),
            model.state_dim()
        )));
    }
    if !block.is_finite() {
        return Err(PcrbError::NonFinite(format!("{} block", factor.label())));
    }
    Ok(())
}

/// `B_k` for the transition factor.
pub fn compute_b(
    model: &dyn SystemModel,
    k: usize,
    est: &ExpectationEstimator,
) -> Result<BlockMatrix> {
    Ok(estimate_b(model, k, est)?.mean)
}

/// `C_k` for the measurement factor.
pub fn compute_c(
    model: &dyn SystemModel,
    k: usize,
    est: &ExpectationEstimator,
) -> Result<BlockMatrix> {
    Ok(estimate_c(model, k, est)?.mean)
}

pub fn estimate_b(
    model: &dyn SystemModel,
    k: usize,
    est: &ExpectationEstimator,
) -> Result<BlockEstimate> {
    estimate_factor(model, Factor::Transition, k, est)
}

pub fn estimate_c(
    model: &dyn SystemModel,
    k: usize,
    est: &ExpectationEstimator,
) -> Result<BlockEstimate> {
    estimate_factor(model, Factor::Measurement, k, est)
}

fn estimate_factor(
    model: &dyn SystemModel,
    factor: Factor,
    k: usize,
    est: &ExpectationEstimator,
) -> Result<BlockEstimate> {
    check_time(model, k)?;
    est.validate()?;
    if est.mode != EstimatorMode::FiniteDifferenceMc {
        if let Some(block) = closed_form(model, factor, k) {
            check_block(model, factor, &block)?;
            return Ok(BlockEstimate {
                mean: block,
                std_err: None,
            });
        }
        if est.mode == EstimatorMode::Analytic {
            return Err(PcrbError::MissingAnalyticBlocks(factor.label()));
        }
    }
    let want = match factor {
        Factor::Transition => (true, false),
        Factor::Measurement => (false, true),
    };
    let (mut out, _) = sample_blocks(model, &[k], est, want)?;
    let (b, c) = out.remove(0);
    let sampled = match factor {
        Factor::Transition => b,
        Factor::Measurement => c,
    };
    Ok(sampled.expect("requested factor was sampled"))
}

/// Blocks for a contiguous run of times, computed once per run.
#[derive(Debug, Clone)]
pub struct BlockSchedule {
    start_k: usize,
    b: Vec<BlockEstimate>,
    c: Vec<BlockEstimate>,
    pub diagnostics: McDiagnostics,
}

impl BlockSchedule {
    /// Blocks for `k = start_k .. start_k + count`. Time-invariant models get
    /// a single cached entry.
    pub fn build(
        model: &dyn SystemModel,
        est: &ExpectationEstimator,
        start_k: usize,
        count: usize,
    ) -> Result<Self> {
        check_time(model, start_k)?;
        est.validate()?;
        let ks: Vec<usize> = if model.time_invariant() {
            vec![start_k]
        } else {
            (start_k..start_k + count.max(1)).collect()
        };

        let mut b: Vec<Option<BlockEstimate>> = vec![None; ks.len()];
        let mut c: Vec<Option<BlockEstimate>> = vec![None; ks.len()];
        let mut need_b = false;
        let mut need_c = false;
        for (slot, &k) in ks.iter().enumerate() {
            if est.mode != EstimatorMode::FiniteDifferenceMc {
                if let Some(block) = closed_form(model, Factor::Transition, k) {
                    check_block(model, Factor::Transition, &block)?;
                    b[slot] = Some(BlockEstimate { mean: block, std_err: None });
                }
                if let Some(block) = closed_form(model, Factor::Measurement, k) {
                    check_block(model, Factor::Measurement, &block)?;
                    c[slot] = Some(BlockEstimate { mean: block, std_err: None });
                }
            }
            need_b |= b[slot].is_none();
            need_c |= c[slot].is_none();
        }
        if est.mode == EstimatorMode::Analytic {
            if need_b {
                return Err(PcrbError::MissingAnalyticBlocks("transition"));
            }
            if need_c {
                return Err(PcrbError::MissingAnalyticBlocks("measurement"));
            }
        }

        let mut diagnostics = McDiagnostics::default();
        if need_b || need_c {
            let (sampled, diag) = sample_blocks(model, &ks, est, (need_b, need_c))?;
            diagnostics = diag;
            for (slot, (sb, sc)) in sampled.into_iter().enumerate() {
                if b[slot].is_none() {
                    b[slot] = sb;
                }
                if c[slot].is_none() {
                    c[slot] = sc;
                }
            }
        }
        Ok(Self {
            start_k,
            b: b.into_iter().map(|x| x.expect("filled")).collect(),
            c: c.into_iter().map(|x| x.expect("filled")).collect(),
            diagnostics,
        })
    }

    fn slot(&self, k: usize) -> usize {
        assert!(k >= self.start_k, "k={k} precedes schedule start {}", self.start_k);
        (k - self.start_k).min(self.b.len() - 1)
    }

    pub fn at(&self, k: usize) -> (&BlockMatrix, &BlockMatrix) {
        let s = self.slot(k);
        (&self.b[s].mean, &self.c[s].mean)
    }

    pub fn estimates_at(&self, k: usize) -> (&BlockEstimate, &BlockEstimate) {
        let s = self.slot(k);
        (&self.b[s], &self.c[s])
    }

    pub fn start(&self) -> usize {
        self.start_k
    }
}

struct Moments {
    sum: DMatrix<f64>,
    sumsq: DMatrix<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            sum: DMatrix::zeros(n, n),
            sumsq: DMatrix::zeros(n, n),
        }
    }

    fn push(&mut self, h: &DMatrix<f64>) {
        self.sum += h;
        self.sumsq += h.component_mul(h);
    }

    fn merge(&mut self, other: &Moments) {
        self.sum += &other.sum;
        self.sumsq += &other.sumsq;
    }

    fn finish(self, n: usize, block_dim: usize) -> Result<BlockEstimate> {
        let nf = n as f64;
        let mean = &self.sum / nf;
        let std_err = if n > 1 {
            let var = (&self.sumsq - mean.component_mul(&mean) * nf) / (nf - 1.0);
            var.map(|v| (v.max(0.0) / nf).sqrt())
        } else {
            DMatrix::zeros(mean.nrows(), mean.ncols())
        };
        Ok(BlockEstimate {
            mean: BlockMatrix::from_dense(symmetrize(&mean), block_dim)?,
            std_err: Some(std_err),
        })
    }
}

struct ChunkAcc {
    b: Vec<Moments>,
    c: Vec<Moments>,
    rejected: usize,
}

type SampledPair = (Option<BlockEstimate>, Option<BlockEstimate>);

/// Monte-Carlo estimates of the requested factors at each `k` in `ks`, all
/// from one set of trajectories.
fn sample_blocks(
    model: &dyn SystemModel,
    ks: &[usize],
    est: &ExpectationEstimator,
    (want_b, want_c): (bool, bool),
) -> Result<(Vec<SampledPair>, McDiagnostics)> {
    let profile = model.profile();
    let r = model.state_dim();
    let nb = (profile.l2_eff() + 1) * r;
    let nc = profile.l3_eff() * r;
    let k_max = *ks.iter().max().expect("at least one time index");
    let traj_len = k_max + 2;
    let n = est.sample_count;
    let n_chunks = n.div_ceil(CHUNK);
    let use_model_hessian = est.mode == EstimatorMode::MonteCarlo;

    let chunks: Vec<Result<ChunkAcc>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = ChunkAcc {
                b: ks.iter().map(|_| Moments::zeros(nb)).collect(),
                c: ks.iter().map(|_| Moments::zeros(nc)).collect(),
                rejected: 0,
            };
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n);
            for idx in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(est.seed);
                rng.set_stream(idx as u64);
                let mut attempts = 0;
                let traj = loop {
                    let t = model.sample_trajectory(traj_len, &mut rng);
                    if !t.states.iter().any(|x| model.is_singular_state(x)) {
                        break t;
                    }
                    attempts += 1;
                    acc.rejected += 1;
                    if attempts >= MAX_REJECTIONS {
                        return Err(PcrbError::NonFinite(format!(
                            "sample {idx}: {MAX_REJECTIONS} consecutive trajectories hit a measurement singularity"
                        )));
                    }
                };
                for (slot, &k) in ks.iter().enumerate() {
                    if want_b {
                        let h = transition_sample(model, &traj, k, use_model_hessian)?;
                        acc.b[slot].push(&h);
                    }
                    if want_c {
                        let h = measurement_sample(model, &traj, k, use_model_hessian)?;
                        acc.c[slot].push(&h);
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total_b: Vec<Moments> = ks.iter().map(|_| Moments::zeros(nb)).collect();
    let mut total_c: Vec<Moments> = ks.iter().map(|_| Moments::zeros(nc)).collect();
    let mut rejected = 0;
    for chunk in chunks {
        let chunk = chunk?;
        for (t, s) in total_b.iter_mut().zip(&chunk.b) {
            t.merge(s);
        }
        for (t, s) in total_c.iter_mut().zip(&chunk.c) {
            t.merge(s);
        }
        rejected += chunk.rejected;
    }

    let mut out = Vec::with_capacity(ks.len());
    for (mb, mc) in total_b.into_iter().zip(total_c) {
        let b = if want_b { Some(mb.finish(n, r)?) } else { None };
        let c = if want_c { Some(mc.finish(n, r)?) } else { None };
        out.push((b, c));
    }
    Ok((out, McDiagnostics { samples: n, rejected }))
}

fn transition_args(
    model: &dyn SystemModel,
    traj: &crate::noise::Trajectory,
    k: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let p = model.profile();
    let states = traj.states[k + 1 - p.l2_eff()..=k + 1].to_vec();
    let meas = traj.measurements[k + 1 - p.l4..=k].to_vec();
    (states, meas)
}

fn measurement_args(
    model: &dyn SystemModel,
    traj: &crate::noise::Trajectory,
    k: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let p = model.profile();
    let states = traj.states[k + 2 - p.l3_eff()..=k + 1].to_vec();
    let past = traj.measurements[k + 1 - p.l1..=k].to_vec();
    (states, past)
}

fn finite_check(h: DMatrix<f64>, what: &str, k: usize) -> Result<DMatrix<f64>> {
    if h.iter().all(|v| v.is_finite()) {
        Ok(h)
    } else {
        Err(PcrbError::NonFinite(format!("{what} Hessian at k={k}")))
    }
}

fn transition_sample(
    model: &dyn SystemModel,
    traj: &crate::noise::Trajectory,
    k: usize,
    use_model_hessian: bool,
) -> Result<DMatrix<f64>> {
    let (states, meas) = transition_args(model, traj, k);
    if use_model_hessian {
        if let Some(h) = model.transition_hessian(k, &states, &meas) {
            return finite_check(h, "transition", k);
        }
    }
    let h = negative_hessian_fd(&states, |xs| model.transition_log_density(k, xs, &meas));
    finite_check(h, "transition", k)
}

fn measurement_sample(
    model: &dyn SystemModel,
    traj: &crate::noise::Trajectory,
    k: usize,
    use_model_hessian: bool,
) -> Result<DMatrix<f64>> {
    let (states, past) = measurement_args(model, traj, k);
    if use_model_hessian {
        if let Some(h) = model.measurement_hessian(k, &states, &past) {
            return finite_check(h, "measurement", k);
        }
    }
    let z_next = &traj.measurements[k + 1];
    let h = negative_hessian_fd(&states, |xs| {
        model.measurement_log_density(k, z_next, xs, &past)
    });
    finite_check(h, "measurement", k)
}

/// Central-difference negative Hessian of `f` over the stacked blocks, with
/// per-coordinate step `1e-4 * (1 + |x_i|)`.
pub fn negative_hessian_fd<F>(blocks: &[DVector<f64>], f: F) -> DMatrix<f64>
where
    F: Fn(&[DVector<f64>]) -> f64,
{
    let dims: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    let n: usize = dims.iter().sum();
    let locate = |flat: usize| -> (usize, usize) {
        let mut rest = flat;
        for (bi, d) in dims.iter().enumerate() {
            if rest < *d {
                return (bi, rest);
            }
            rest -= d;
        }
        unreachable!("index inside stacked dimension")
    };
    let steps: Vec<f64> = (0..n)
        .map(|i| {
            let (b, e) = locate(i);
            1e-4 * (1.0 + blocks[b][e].abs())
        })
        .collect();
    let mut work: Vec<DVector<f64>> = blocks.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| -> f64 {
        for &(i, d) in shifts {
            let (b, e) = locate(i);
            work[b][e] += d;
        }
        let v = f(&work);
        for &(i, d) in shifts {
            let (b, e) = locate(i);
            work[b][e] -= d;
        }
        v
    };
    let f0 = eval(&[]);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        let fp = eval(&[(i, hi)]);
        let fm = eval(&[(i, -hi)]);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let fpp = eval(&[(i, hi), (j, hj)]);
            let fpm = eval(&[(i, hi), (j, -hj)]);
            let fmp = eval(&[(i, -hi), (j, hj)]);
            let fmm = eval(&[(i, -hi), (j, -hj)]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    -h
}

/// The four pieces of the one-step information update.
#[derive(Debug, Clone, PartialEq)]
pub struct DBlocks {
    pub d11: BlockMatrix,
    pub d12: BlockMatrix,
    pub d21: BlockMatrix,
    pub d22: DMatrix<f64>,
}

impl DBlocks {
    pub fn window(&self) -> usize {
        self.d11.rows()
    }
}

fn check_bc(b: &BlockMatrix, c: &BlockMatrix, profile: &CorrelationProfile) -> Result<usize> {
    let (l2, l3) = (profile.l2_eff(), profile.l3_eff());
    if b.rows() != l2 + 1 || b.cols() != l2 + 1 {
        return Err(PcrbError::Shape(format!(
            "B is {}x{} blocks, profile {profile} needs {}x{}",
            b.rows(),
            b.cols(),
            l2 + 1,
            l2 + 1
        )));
    }
    if c.rows() != l3 || c.cols() != l3 {
        return Err(PcrbError::Shape(format!(
            "C is {}x{} blocks, profile {profile} needs {l3}x{l3}",
            c.rows(),
            c.cols()
        )));
    }
    if b.block_dim() != c.block_dim() {
        return Err(PcrbError::Shape("B and C block dimensions differ".into()));
    }
    Ok(b.block_dim())
}

/// Builds `D_k^{11}`, `D_k^{12}`, `D_k^{21}`, `D_k^{22}` for the given case.
///
/// In every case the window block `p` (1-based, oldest first) of the
/// `(w+1)`-state local frame is aligned with `B^{p-sB}` and `C^{p-sC}`, where
/// the shifts put the newest state `x_{k+1}` on the last index of each grid.
pub fn assemble_d(
    case: CaseTag,
    b: &BlockMatrix,
    c: &BlockMatrix,
    profile: &CorrelationProfile,
) -> Result<DBlocks> {
    let r = check_bc(b, c, profile)?;
    if select_case(profile) != case {
        return Err(PcrbError::Shape(format!(
            "case {case:?} does not match profile {profile}"
        )));
    }
    let (l2, l3) = (profile.l2_eff() as isize, profile.l3_eff() as isize);
    let (w, d22, d21_entry, d11_entry): (
        usize,
        DMatrix<f64>,
        Box<dyn Fn(isize) -> DMatrix<f64>>,
        Box<dyn Fn(isize, isize) -> DMatrix<f64>>,
    ) = match case {
        CaseTag::GreaterCase => {
            let s = l3 - l2 - 1;
            (
                (l3 - 1) as usize,
                c.block(l3, l3) + b.block(l2 + 1, l2 + 1),
                Box::new(move |j| c.block(l3, j) + b.block(l2 + 1, j - s)),
                Box::new(move |i, j| c.block(i, j) + b.block(i - s, j - s)),
            )
        }
        CaseTag::LessCase => {
            let s = l2 + 1 - l3;
            (
                l2 as usize,
                c.block(l3, l3) + b.block(l2 + 1, l2 + 1),
                Box::new(move |j| b.block(l2 + 1, j) + c.block(l3, j - s)),
                Box::new(move |i, j| b.block(i, j) + c.block(i - s, j - s)),
            )
        }
        CaseTag::EqualCase => (
            (l3 - 1) as usize,
            c.block(l3, l3) + b.block(l3, l3),
            Box::new(move |j| b.block(l3, j) + c.block(l3, j)),
            Box::new(move |i, j| b.block(i, j) + c.block(i, j)),
        ),
    };

    let mut d11 = BlockMatrix::zeros(w, w, r);
    let mut d21 = BlockMatrix::zeros(1, w, r);
    for i in 1..=w {
        d21.set_block(1, i, &d21_entry(i as isize));
        for j in 1..=w {
            d11.set_block(i, j, &d11_entry(i as isize, j as isize));
        }
    }
    let d12 = d21.transpose();
    Ok(DBlocks { d11, d12, d21, d22 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grid(values: &[f64], n: usize) -> BlockMatrix {
        BlockMatrix::from_dense(DMatrix::from_row_slice(n, n, values), 1).unwrap()
    }

    #[test]
    fn uncorrelated_scalar_layout() {
        let p = CorrelationProfile::independent();
        let b = scalar_grid(&[1.0, -1.0, -1.0, 1.0], 2);
        let c = scalar_grid(&[1.0], 1);
        let d = assemble_d(CaseTag::LessCase, &b, &c, &p).unwrap();
        assert_eq!(d.d11.as_dense()[(0, 0)], 1.0);
        assert_eq!(d.d21.as_dense()[(0, 0)], -1.0);
        assert_eq!(d.d22[(0, 0)], 2.0);
    }

    #[test]
    fn corollary3_layout_l2() {
        // LessCase with l2'=2, l3'=1: D22 = B33 + C11, D21 = (B31 B32), D11 = B[1..2,1..2]
        let p = CorrelationProfile::new(0, 2, 0, 0).unwrap();
        let vals: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let b = scalar_grid(&vals, 3);
        let c = scalar_grid(&[100.0], 1);
        let d = assemble_d(CaseTag::LessCase, &b, &c, &p).unwrap();
        assert_eq!(d.d22[(0, 0)], 9.0 + 100.0);
        assert_eq!(d.d21.as_dense().as_slice(), &[7.0, 8.0]);
        assert_eq!(d.d11.as_dense(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 5.0]));
    }

    #[test]
    fn equal_case_layout() {
        let p = CorrelationProfile::new(1, 1, 2, 1).unwrap();
        let b = scalar_grid(&[1.0, 2.0, 2.0, 3.0], 2);
        let c = scalar_grid(&[10.0, 20.0, 20.0, 30.0], 2);
        let d = assemble_d(CaseTag::EqualCase, &b, &c, &p).unwrap();
        assert_eq!(d.d11.as_dense()[(0, 0)], 11.0);
        assert_eq!(d.d12.as_dense()[(0, 0)], 22.0);
        assert_eq!(d.d22[(0, 0)], 33.0);
    }

    #[test]
    fn greater_case_layout() {
        // l2'=1, l3'=3: window 2, B sits on the last two frame positions
        let p = CorrelationProfile::new(0, 0, 3, 0).unwrap();
        let b = scalar_grid(&[1.0, 2.0, 2.0, 3.0], 2);
        let cv: Vec<f64> = (1..=9).map(|v| 10.0 * v as f64).collect();
        let c = scalar_grid(&cv, 3);
        let d = assemble_d(CaseTag::GreaterCase, &b, &c, &p).unwrap();
        assert_eq!(d.d11.as_dense(), &DMatrix::from_row_slice(2, 2, &[10.0, 20.0, 40.0, 51.0]));
        assert_eq!(d.d21.as_dense().as_slice(), &[70.0, 82.0]);
        assert_eq!(d.d22[(0, 0)], 93.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = CorrelationProfile::new(0, 2, 0, 0).unwrap();
        let b = scalar_grid(&[1.0, 0.0, 0.0, 1.0], 2);
        let c = scalar_grid(&[1.0], 1);
        assert!(matches!(
            assemble_d(CaseTag::LessCase, &b, &c, &p),
            Err(PcrbError::Shape(_))
        ));
        let p = CorrelationProfile::independent();
        assert!(assemble_d(CaseTag::EqualCase, &b, &c, &p).is_err());
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        // f = -0.5 * (3 a^2 + 2 a b + 5 b^2)  ->  -H = [[3,1],[1,5]]
        let blocks = vec![DVector::from_element(1, 0.7), DVector::from_element(1, -2.0)];
        let h = negative_hessian_fd(&blocks, |x| {
            let (a, b) = (x[0][0], x[1][0]);
            -0.5 * (3.0 * a * a + 2.0 * a * b + 5.0 * b * b)
        });
        let expected = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 5.0]);
        assert!((h - expected).amax() < 1e-6);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(ExpectationEstimator::monte_carlo(0, 1).validate().is_err());
    }
}
