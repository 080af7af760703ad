//! Brute-force reference for the recursion.
//!
//! Builds the full joint information matrix `J(X_k)` of the states
//! `x_0..x_k` by summing the prior information and every factor's expected
//! Hessian into its state positions, then takes the Schur complement onto the
//! final state. No carried matrices, no case analysis.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::blocks::{BlockSchedule, ExpectationEstimator};
use crate::error::{PcrbError, Result};
use crate::linalg::{
    lu_inverse, max_rel_elementwise, schur_onto_trailing, spd_inverse, BlockMatrix,
};
use crate::noise::{validate_model, SystemModel};
use crate::recursion::{run_with, schedule_for, FaultInjection, RecursionPath, RunOptions};

/// Largest horizon the oracle accepts.
pub const MAX_ORACLE_HORIZON: usize = 24;

/// `J(X_k)` over `x_0..x_k`.
#[derive(Debug, Clone)]
pub struct JointInformation {
    pub horizon: usize,
    pub matrix: BlockMatrix,
}

impl JointInformation {
    /// Block `A^{i,j}` of the joint matrix, 1-based over `x_0..x_k`.
    pub fn block(&self, i: isize, j: isize) -> DMatrix<f64> {
        self.matrix.block(i, j)
    }
}

/// Expected Hessian contribution of one factor, placed at absolute state indices.
#[derive(Debug, Clone)]
pub struct FactorContribution {
    pub label: String,
    /// Absolute index of the first state the factor touches.
    pub first_state: usize,
    pub block: BlockMatrix,
}

/// Every factor of the joint density up to time `k`: the prior window, then
/// for each `t = l_max..k-1` the transition and measurement factors.
pub fn factor_contributions(
    model: &dyn SystemModel,
    schedule: &BlockSchedule,
    k: usize,
) -> Result<Vec<FactorContribution>> {
    validate_model(model)?;
    let p = model.profile();
    let l_max = p.l_max();
    if k < l_max {
        return Err(PcrbError::InvalidArgument(format!(
            "joint information needs k >= l_max={l_max}, got {k}"
        )));
    }
    if k > MAX_ORACLE_HORIZON {
        return Err(PcrbError::InvalidArgument(format!(
            "oracle horizon {k} exceeds {MAX_ORACLE_HORIZON}"
        )));
    }
    let mut out = vec![FactorContribution {
        label: "prior".into(),
        first_state: 0,
        block: model.prior().information()?,
    }];
    for t in l_max..k {
        let (b, c) = schedule.at(t);
        out.push(FactorContribution {
            label: format!("transition t={t}"),
            first_state: t + 1 - p.l2_eff(),
            block: b.clone(),
        });
        out.push(FactorContribution {
            label: format!("measurement t={t}"),
            first_state: t + 2 - p.l3_eff(),
            block: c.clone(),
        });
    }
    Ok(out)
}

/// Sums the factor contributions into `J(X_k)`.
pub fn build_joint_from(
    model: &dyn SystemModel,
    schedule: &BlockSchedule,
    k: usize,
) -> Result<JointInformation> {
    let r = model.state_dim();
    let mut matrix = BlockMatrix::zeros(k + 1, k + 1, r);
    for f in factor_contributions(model, schedule, k)? {
        let n = f.block.rows();
        for i in 1..=n {
            for j in 1..=n {
                matrix.add_to_block(
                    f.first_state + i,
                    f.first_state + j,
                    &f.block.block(i as isize, j as isize),
                );
            }
        }
    }
    Ok(JointInformation { horizon: k, matrix })
}

pub fn build_joint(
    model: &dyn SystemModel,
    est: &ExpectationEstimator,
    k: usize,
) -> Result<JointInformation> {
    let schedule = schedule_for(model, est, k)?;
    build_joint_from(model, &schedule, k)
}

/// Information submatrix of the final state: `A22 - A21 A11^{-1} A12`.
pub fn schur_submatrix(joint: &JointInformation) -> Result<DMatrix<f64>> {
    let r = joint.matrix.block_dim();
    schur_onto_trailing(joint.matrix.as_dense(), r, "oracle A11")
}

/// `J_k` by the oracle for `k = 1..=horizon`. Times inside the prior window
/// use the prior marginal.
pub fn oracle_information(
    model: &dyn SystemModel,
    schedule: &BlockSchedule,
    horizon: usize,
) -> Result<Vec<(usize, DMatrix<f64>)>> {
    let l_max = model.profile().l_max();
    (1..=horizon)
        .map(|k| {
            let j = if k < l_max {
                spd_inverse(&model.prior().block_covariance(k), "prior marginal")?
            } else {
                schur_submatrix(&build_joint_from(model, schedule, k)?)?
            };
            Ok((k, j))
        })
        .collect()
}

/// Per-step deviation between the recursion and the oracle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Deviation {
    pub k: usize,
    /// Max elementwise `|J_rec - J_oracle|`, scaled by the larger max-abs entry.
    pub max_rel: f64,
}

/// Runs both routes on the same blocks and reports the deviation per `k`.
pub fn verify(
    model: &dyn SystemModel,
    est: &ExpectationEstimator,
    horizon: usize,
    fault: FaultInjection,
) -> Result<Vec<Deviation>> {
    let schedule = schedule_for(model, est, horizon)?;
    let trace = run_with(
        model,
        &schedule,
        horizon,
        RunOptions {
            path: RecursionPath::Unified,
            fault,
        },
    )?;
    let oracle = oracle_information(model, &schedule, horizon)?;
    Ok(trace
        .entries
        .iter()
        .zip(oracle)
        .map(|(e, (k, j))| Deviation {
            k,
            max_rel: max_rel_elementwise(&e.info, &j),
        })
        .collect())
}

fn split(a: &DMatrix<f64>, at: usize) -> [DMatrix<f64>; 4] {
    let n = a.nrows();
    let m = n - at;
    [
        a.view((0, 0), (at, at)).into_owned(),
        a.view((0, at), (at, m)).into_owned(),
        a.view((at, 0), (m, at)).into_owned(),
        a.view((at, at), (m, m)).into_owned(),
    ]
}

/// Rebuilds `A^{-1}` from the factored form
/// `[I, -A11^{-1}A12; 0, I] diag(A11^{-1}, S^{-1}) [I, 0; -A21 A11^{-1}, I]`
/// with `S = A22 - A21 A11^{-1} A12`.
pub fn lemma1_inverse(a: &DMatrix<f64>, at: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || at == 0 || at >= n {
        return Err(PcrbError::Shape(format!("cannot split a {n}x{} matrix at {at}", a.ncols())));
    }
    let [a11, a12, a21, a22] = split(a, at);
    let a11_inv = lu_inverse(&a11, "A11")?;
    let schur = &a22 - &a21 * &a11_inv * &a12;
    let schur_inv = lu_inverse(&schur, "Schur complement")?;
    let m = n - at;
    let mut left = DMatrix::identity(n, n);
    left.view_mut((0, at), (at, m)).copy_from(&(-&a11_inv * &a12));
    let mut mid = DMatrix::zeros(n, n);
    mid.view_mut((0, 0), (at, at)).copy_from(&a11_inv);
    mid.view_mut((at, at), (m, m)).copy_from(&schur_inv);
    let mut right = DMatrix::identity(n, n);
    right.view_mut((at, 0), (m, at)).copy_from(&(-&a21 * &a11_inv));
    Ok(left * mid * right)
}

/// Both sides of the contraction identity
/// `B A^{-1} C = B1 A11^{-1} C1 + (B2 - B1 A11^{-1} A12) S^{-1} (C2 - A21 A11^{-1} C1)`,
/// returned as `(direct, factored)`.
pub fn lemma2_contract(
    b_row: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c_col: &DMatrix<f64>,
    at: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || b_row.ncols() != n || c_col.nrows() != n || at == 0 || at >= n {
        return Err(PcrbError::Shape("incompatible shapes for the contraction identity".into()));
    }
    let direct = b_row * lu_inverse(a, "A")? * c_col;
    let [a11, a12, a21, a22] = split(a, at);
    let m = n - at;
    let b1 = b_row.columns(0, at).into_owned();
    let b2 = b_row.columns(at, m).into_owned();
    let c1 = c_col.rows(0, at).into_owned();
    let c2 = c_col.rows(at, m).into_owned();
    let a11_inv = lu_inverse(&a11, "A11")?;
    let schur = &a22 - &a21 * &a11_inv * &a12;
    let schur_inv = lu_inverse(&schur, "Schur complement")?;
    let factored = &b1 * &a11_inv * &c1
        + (&b2 - &b1 * &a11_inv * &a12) * schur_inv * (&c2 - &a21 * &a11_inv * &c1);
    Ok((direct, factored))
}
