//! Unified information-submatrix recursion and its special-case forms.
//!
//! Each step maps `(E_k, B_k, C_k)` to `J_{k+1} = D22 - D21 (D11 + E_k)^{-1} D12`
//! and the next carried matrix `E_{k+1}`. `E_k` summarizes the information on
//! the last `w` states that has not yet been folded into the `D` blocks; `w`
//! depends on the case (`l3'-1` for the greater/equal cases, `l2'` otherwise).

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::blocks::{assemble_d, BlockSchedule, DBlocks, ExpectationEstimator, McDiagnostics};
use crate::error::{PcrbError, Result};
use crate::linalg::{
    check_psd, schur_onto_trailing, spd_inverse, symmetrize, BlockMatrix, PSD_TOL,
};
use crate::noise::{select_case, validate_model, CaseTag, CorrelationProfile, SystemModel};

/// Carried state of the recursion at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionState {
    pub k: usize,
    pub case: CaseTag,
    pub e: BlockMatrix,
    pub profile: CorrelationProfile,
}

impl RecursionState {
    pub fn new(k: usize, e: BlockMatrix, profile: CorrelationProfile) -> Result<Self> {
        let case = select_case(&profile);
        let w = profile.window();
        if e.rows() != w || e.cols() != w {
            return Err(PcrbError::Shape(format!(
                "E is {}x{} blocks, case {case:?} needs {w}x{w}",
                e.rows(),
                e.cols()
            )));
        }
        Ok(Self { k, case, e, profile })
    }
}

/// One time step of a bound trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub k: usize,
    /// Information submatrix `J_k`.
    #[serde(serialize_with = "ser_matrix")]
    pub info: DMatrix<f64>,
    /// `J_k^{-1}`, the bound on the estimation error covariance of `x_k`.
    #[serde(serialize_with = "ser_matrix")]
    pub bound: DMatrix<f64>,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl TraceEntry {
    pub fn from_info(k: usize, info: DMatrix<f64>) -> Result<Self> {
        let info = symmetrize(&info);
        let bound = spd_inverse(&info, &format!("J_{k}"))?;
        Ok(Self { k, info, bound })
    }

    /// `sqrt(bound[i, i])`, the per-component standard-deviation bound.
    pub fn sqrt_bound(&self, i: usize) -> f64 {
        self.bound[(i, i)].sqrt()
    }

    pub fn variance_bound(&self, i: usize) -> f64 {
        self.bound[(i, i)]
    }

    pub fn summary(&self, i: usize, scale: BoundScale) -> f64 {
        match scale {
            BoundScale::StdDev => self.sqrt_bound(i),
            BoundScale::Variance => self.variance_bound(i),
        }
    }
}

/// How a trace entry is reduced to a scalar for plotting and selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum BoundScale {
    /// Square root of the diagonal bound entry (same units as the state).
    #[default]
    StdDev,
    Variance,
}

/// Per-step information submatrices and bounds for `k = 1..=K`.
#[derive(Debug, Clone, Serialize)]
pub struct PcrbTrace {
    pub profile: CorrelationProfile,
    pub case: CaseTag,
    pub entries: Vec<TraceEntry>,
    #[serde(skip)]
    pub wall_time: Duration,
    pub mc: McDiagnostics,
}

impl PcrbTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> &TraceEntry {
        self.entries.last().expect("trace is never empty")
    }

    pub fn entry(&self, k: usize) -> Option<&TraceEntry> {
        self.entries.iter().find(|e| e.k == k)
    }

    pub fn sqrt_bounds(&self, component: usize) -> Vec<f64> {
        self.entries.iter().map(|e| e.sqrt_bound(component)).collect()
    }

    /// `||J_K - J_{K-1}||_F / ||J_K||_F` over the last two entries.
    pub fn final_relative_change(&self) -> f64 {
        let n = self.entries.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let (a, b) = (&self.entries[n - 1].info, &self.entries[n - 2].info);
        (a - b).norm() / a.norm()
    }
}

/// Test hook that corrupts the `D` assembly so verification failures can be exercised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FaultInjection {
    #[default]
    None,
    /// Scales `D12`/`D21` by 1.01 before each step.
    CorruptDAssembly,
}

/// Which update formulas drive the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum RecursionPath {
    #[default]
    Unified,
    /// Backward cross-correlation only (`l1 = l2 = l4 = 0`).
    Corollary2,
    /// Process auto-correlation only (`l1 = l3 = l4 = 0`).
    Corollary3,
    /// Measurement auto-correlation only (`l2 = l3 = l4 = 0`).
    Corollary4,
}

impl RecursionPath {
    pub fn supports(&self, p: &CorrelationProfile) -> bool {
        match self {
            RecursionPath::Unified => true,
            RecursionPath::Corollary2 => p.l1 == 0 && p.l2 == 0 && p.l4 == 0,
            RecursionPath::Corollary3 => p.l1 == 0 && p.l3 == 0 && p.l4 == 0,
            RecursionPath::Corollary4 => p.l2 == 0 && p.l3 == 0 && p.l4 == 0,
        }
    }
}

/// `J_k` for `k = 1..=min(K, l_max)` and `E_{l_max}`, both from the prior window.
pub fn init_state(model: &dyn SystemModel) -> Result<RecursionState> {
    validate_model(model)?;
    let profile = model.profile();
    let r = model.state_dim();
    let info = model.prior().information()?;
    let w = profile.window();
    let e = schur_onto_trailing(info.as_dense(), w * r, "prior window leading block")?;
    RecursionState::new(profile.l_max(), BlockMatrix::from_dense(e, r)?, profile)
}

fn prior_entries(model: &dyn SystemModel, horizon: usize) -> Result<Vec<TraceEntry>> {
    let l_max = model.profile().l_max();
    (1..=horizon.min(l_max))
        .map(|k| {
            let cov = model.prior().block_covariance(k);
            TraceEntry::from_info(k, spd_inverse(&cov, "prior marginal")?)
        })
        .collect()
}

fn invert_pivot(p: &DMatrix<f64>, k: usize, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(p, &format!("{what} at k={k}"))
}

fn finish_j(j: DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let j = symmetrize(&j);
    check_psd(&j, PSD_TOL, &format!("J_{}", k + 1))?;
    Ok(j)
}

fn finish_e(e: BlockMatrix, k: usize) -> Result<BlockMatrix> {
    let r = e.block_dim();
    let dense = symmetrize(e.as_dense());
    check_psd(&dense, PSD_TOL, &format!("E_{}", k + 1))?;
    BlockMatrix::from_dense(dense, r)
}

fn j_from_d(d: &DBlocks, e: &BlockMatrix, k: usize) -> Result<DMatrix<f64>> {
    let pivot = d.d11.as_dense() + e.as_dense();
    let inv = invert_pivot(&pivot, k, "D11 + E")?;
    finish_j(&d.d22 - d.d21.as_dense() * inv * d.d12.as_dense(), k)
}

/// One unified step: `J_{k+1}` and `E_{k+1}` from `E_k`, `B_k`, `C_k`.
pub fn step(
    state: &RecursionState,
    b: &BlockMatrix,
    c: &BlockMatrix,
) -> Result<(DMatrix<f64>, RecursionState)> {
    step_with(state, b, c, FaultInjection::None)
}

pub fn step_with(
    state: &RecursionState,
    b: &BlockMatrix,
    c: &BlockMatrix,
    fault: FaultInjection,
) -> Result<(DMatrix<f64>, RecursionState)> {
    let mut d = assemble_d(state.case, b, c, &state.profile)?;
    if fault == FaultInjection::CorruptDAssembly {
        d.d12 = d.d12.scaled(1.01);
        d.d21 = d.d21.scaled(1.01);
    }
    let k = state.k;
    let j_next = j_from_d(&d, &state.e, k)?;
    let e_next = update_e(state, b, c)?;
    Ok((
        j_next,
        RecursionState {
            k: k + 1,
            case: state.case,
            e: e_next,
            profile: state.profile,
        },
    ))
}

/// Case-matched `E_{k+1}` update.
fn update_e(state: &RecursionState, b: &BlockMatrix, c: &BlockMatrix) -> Result<BlockMatrix> {
    let p = &state.profile;
    let (l2, l3) = (p.l2_eff() as isize, p.l3_eff() as isize);
    let e = &state.e;
    let w = e.rows();
    let r = e.block_dim();

    // Shifted index maps of B and C relative to the E grid, per case. The
    // pivot block and the two coupling blocks carry only the factors whose
    // index 1 is in range.
    let b_shift = match state.case {
        CaseTag::GreaterCase => l2 - l3 + 1,
        CaseTag::LessCase | CaseTag::EqualCase => 0,
    };
    let c_shift = match state.case {
        CaseTag::LessCase => l3 - l2 - 1,
        CaseTag::GreaterCase | CaseTag::EqualCase => 0,
    };
    let local = |i: isize, j: isize| -> DMatrix<f64> {
        e.block(i, j) + b.block(i + b_shift, j + b_shift) + c.block(i + c_shift, j + c_shift)
    };

    let pivot = local(1, 1);
    let inv = invert_pivot(&pivot, state.k, "E update pivot")?;
    let mut next = BlockMatrix::zeros(w, w, r);
    for i in 1..=w as isize {
        let left = local(i + 1, 1) * &inv;
        for j in 1..=w as isize {
            let v = local(i + 1, j + 1) - &left * local(1, j + 1);
            next.set_block(i as usize, j as usize, &v);
        }
    }
    finish_e(next, state.k)
}

/// Backward `l`-step cross-correlation only, with its own `D`/`E` formulas.
pub fn step_corollary2(
    state: &RecursionState,
    b: &BlockMatrix,
    c: &BlockMatrix,
) -> Result<(DMatrix<f64>, RecursionState)> {
    let p = state.profile;
    if !RecursionPath::Corollary2.supports(&p) {
        return Err(PcrbError::InvalidArgument(format!(
            "profile {p} is not a backward cross-correlation profile"
        )));
    }
    let l = p.l3 as isize;
    let k = state.k;
    let r = b.block_dim();
    let e = &state.e;
    let (j_next, e_next) = if l <= 1 {
        let e1 = e.block(1, 1);
        let d11 = b.block(1, 1);
        let d21 = b.block(2, 1);
        let d22 = b.block(2, 2) + c.block(1, 1);
        let inv = invert_pivot(&(&d11 + &e1), k, "D11 + E")?;
        let j = finish_j(&d22 - &d21 * &inv * d21.transpose(), k)?;
        // the pivot of the E update equals D11 + E here
        let en = b.block(2, 2) + c.block(1, 1) - b.block(2, 1) * &inv * b.block(1, 2);
        (j, BlockMatrix::from_dense(en, r)?)
    } else if l == 2 {
        let e1 = e.block(1, 1);
        let d11 = b.block(1, 1) + c.block(1, 1);
        let d21 = b.block(2, 1) + c.block(2, 1);
        let d22 = c.block(2, 2) + b.block(2, 2);
        let inv = invert_pivot(&(&d11 + &e1), k, "D11 + E")?;
        let j = finish_j(&d22 - &d21 * &inv * d21.transpose(), k)?;
        let en = c.block(2, 2) + b.block(2, 2)
            - (b.block(2, 1) + c.block(2, 1)) * &inv * (c.block(1, 2) + b.block(1, 2));
        (j, BlockMatrix::from_dense(en, r)?)
    } else {
        let w = (l - 1) as usize;
        let mut d11 = BlockMatrix::zeros(w, w, r);
        let mut d21 = BlockMatrix::zeros(1, w, r);
        for i in 1..=w {
            for j in 1..=w {
                let mut v = c.block(i as isize, j as isize);
                if i == w && j == w {
                    v += b.block(1, 1);
                }
                d11.set_block(i, j, &v);
            }
            let mut v = c.block(l, i as isize);
            if i == w {
                v += b.block(2, 1);
            }
            d21.set_block(1, i, &v);
        }
        let d22 = c.block(l, l) + b.block(2, 2);
        let inv = invert_pivot(&(d11.as_dense() + e.as_dense()), k, "D11 + E")?;
        let j = finish_j(
            &d22 - d21.as_dense() * &inv * d21.as_dense().transpose(),
            k,
        )?;

        let pinv = invert_pivot(&(e.block(1, 1) + c.block(1, 1)), k, "E update pivot")?;
        let mut en = BlockMatrix::zeros(w, w, r);
        for i in 1..=w as isize {
            for jj in 1..=w as isize {
                let v = e.block(i + 1, jj + 1)
                    + b.block(i + 3 - l, jj + 3 - l)
                    + c.block(i + 1, jj + 1)
                    - (e.block(i + 1, 1) + c.block(i + 1, 1))
                        * &pinv
                        * (e.block(1, jj + 1) + c.block(1, jj + 1));
                en.set_block(i as usize, jj as usize, &v);
            }
        }
        (j, en)
    };
    Ok((
        j_next,
        RecursionState {
            k: k + 1,
            case: state.case,
            e: finish_e(e_next, k)?,
            profile: p,
        },
    ))
}

/// Process-noise auto-correlation only.
pub fn step_corollary3(
    state: &RecursionState,
    b: &BlockMatrix,
    c: &BlockMatrix,
) -> Result<(DMatrix<f64>, RecursionState)> {
    let p = state.profile;
    if !RecursionPath::Corollary3.supports(&p) {
        return Err(PcrbError::InvalidArgument(format!(
            "profile {p} is not a process auto-correlation profile"
        )));
    }
    let l2 = p.l2_eff();
    let k = state.k;
    let r = b.block_dim();
    let e = &state.e;

    let mut d11 = BlockMatrix::zeros(l2, l2, r);
    let mut d21 = BlockMatrix::zeros(1, l2, r);
    for i in 1..=l2 {
        for j in 1..=l2 {
            d11.set_block(i, j, &b.block(i as isize, j as isize));
        }
        d21.set_block(1, i, &b.block(l2 as isize + 1, i as isize));
    }
    let d22 = b.block(l2 as isize + 1, l2 as isize + 1) + c.block(1, 1);
    let inv = invert_pivot(&(d11.as_dense() + e.as_dense()), k, "D11 + E")?;
    let j_next = finish_j(&d22 - d21.as_dense() * inv * d21.as_dense().transpose(), k)?;

    let l2i = l2 as isize;
    let pinv = invert_pivot(&(e.block(1, 1) + b.block(1, 1)), k, "E update pivot")?;
    let mut en = BlockMatrix::zeros(l2, l2, r);
    for i in 1..=l2i {
        for j in 1..=l2i {
            let v = e.block(i + 1, j + 1)
                + c.block(i + 1 - l2i, j + 1 - l2i)
                + b.block(i + 1, j + 1)
                - (e.block(i + 1, 1) + b.block(i + 1, 1))
                    * &pinv
                    * (e.block(1, j + 1) + b.block(1, j + 1));
            en.set_block(i as usize, j as usize, &v);
        }
    }
    Ok((
        j_next,
        RecursionState {
            k: k + 1,
            case: state.case,
            e: finish_e(en, k)?,
            profile: p,
        },
    ))
}

/// `D` blocks of the measurement auto-correlation form: the transition
/// factor over `(x_k, x_{k+1})` plus the measurement information on `x_{k+1}`.
pub fn corollary4_blocks(b: &BlockMatrix, c: &BlockMatrix) -> Result<DBlocks> {
    if b.rows() != 2 || c.rows() != 1 {
        return Err(PcrbError::Shape(
            "measurement auto-correlation form needs 2x2 B and 1x1 C".into(),
        ));
    }
    let r = b.block_dim();
    Ok(DBlocks {
        d11: BlockMatrix::from_dense(b.block(1, 1), r)?,
        d12: BlockMatrix::from_dense(b.block(1, 2), r)?,
        d21: BlockMatrix::from_dense(b.block(2, 1), r)?,
        d22: b.block(2, 2) + c.block(1, 1),
    })
}

/// `J_{k+1} = D22 - D21 (D11 + J_k)^{-1} D12`.
pub fn step_corollary4(j: &DMatrix<f64>, d: &DBlocks) -> Result<DMatrix<f64>> {
    if d.window() != 1 {
        return Err(PcrbError::Shape("D11 must be a single block".into()));
    }
    let pivot = d.d11.as_dense() + j;
    let inv = spd_inverse(&pivot, "D11 + J")?;
    let out = symmetrize(&(&d.d22 - d.d21.as_dense() * inv * d.d12.as_dense()));
    check_psd(&out, PSD_TOL, "J")?;
    Ok(out)
}

/// Options for [`run_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub path: RecursionPath,
    pub fault: FaultInjection,
}

/// Bound trace for `k = 1..=horizon`.
pub fn run(
    model: &dyn SystemModel,
    est: &ExpectationEstimator,
    horizon: usize,
) -> Result<PcrbTrace> {
    let schedule = schedule_for(model, est, horizon)?;
    run_with(model, &schedule, horizon, RunOptions::default())
}

/// Blocks covering every step a run of `horizon` needs.
pub fn schedule_for(
    model: &dyn SystemModel,
    est: &ExpectationEstimator,
    horizon: usize,
) -> Result<BlockSchedule> {
    let l_max = model.profile().l_max();
    let steps = horizon.saturating_sub(l_max).max(1);
    BlockSchedule::build(model, est, l_max, steps)
}

pub fn run_with(
    model: &dyn SystemModel,
    schedule: &BlockSchedule,
    horizon: usize,
    options: RunOptions,
) -> Result<PcrbTrace> {
    if horizon == 0 {
        return Err(PcrbError::InvalidArgument("horizon must be at least 1".into()));
    }
    let started = Instant::now();
    let profile = model.profile();
    if !options.path.supports(&profile) {
        return Err(PcrbError::InvalidArgument(format!(
            "{:?} does not apply to profile {profile}",
            options.path
        )));
    }
    let mut entries = prior_entries(model, horizon)?;
    let mut state = init_state(model)?;
    while state.k < horizon {
        let (b, c) = schedule.at(state.k);
        let (j, next) = match options.path {
            RecursionPath::Unified => step_with(&state, b, c, options.fault)?,
            RecursionPath::Corollary2 => step_corollary2(&state, b, c)?,
            RecursionPath::Corollary3 => step_corollary3(&state, b, c)?,
            RecursionPath::Corollary4 => {
                let d = corollary4_blocks(b, c)?;
                let j = step_corollary4(&state.e.block(1, 1), &d)?;
                let e = BlockMatrix::from_dense(j.clone(), j.nrows())?;
                (
                    j,
                    RecursionState {
                        k: state.k + 1,
                        case: state.case,
                        e,
                        profile,
                    },
                )
            }
        };
        entries.push(TraceEntry::from_info(next.k, j)?);
        state = next;
    }
    Ok(PcrbTrace {
        profile,
        case: select_case(&profile),
        entries,
        wall_time: started.elapsed(),
        mc: schedule.diagnostics,
    })
}
