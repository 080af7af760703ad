//! Dense block-matrix helpers shared by the recursion and the oracle.
//!
//! Blocks are addressed 1-based. Any index outside the stored grid (zero,
//! negative or past the last row/column) reads as the zero block, which is the
//! convention the recursion formulas are written against.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{PcrbError, Result};

/// Reciprocal condition number below which an inversion is reported as singular.
pub const RCOND_FLOOR: f64 = 1e-13;

/// Relative eigenvalue tolerance for positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

/// Grid of dense `block_dim x block_dim` blocks stored as one flat matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    rows: usize,
    cols: usize,
    block_dim: usize,
    data: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn zeros(rows: usize, cols: usize, block_dim: usize) -> Self {
        Self {
            rows,
            cols,
            block_dim,
            data: DMatrix::zeros(rows * block_dim, cols * block_dim),
        }
    }

    /// Wraps a dense matrix whose sides are multiples of `block_dim`.
    pub fn from_dense(data: DMatrix<f64>, block_dim: usize) -> Result<Self> {
        if block_dim == 0 || data.nrows() % block_dim != 0 || data.ncols() % block_dim != 0 {
            return Err(PcrbError::Shape(format!(
                "{}x{} matrix is not a grid of {block_dim}x{block_dim} blocks",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self {
            rows: data.nrows() / block_dim,
            cols: data.ncols() / block_dim,
            block_dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn as_dense(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.data
    }

    fn in_range(&self, i: isize, j: isize) -> bool {
        i >= 1 && j >= 1 && i as usize <= self.rows && j as usize <= self.cols
    }

    /// Block `(i, j)`, 1-based; out-of-range indices give the zero block.
    pub fn block(&self, i: isize, j: isize) -> DMatrix<f64> {
        let r = self.block_dim;
        if !self.in_range(i, j) {
            return DMatrix::zeros(r, r);
        }
        let (i, j) = ((i - 1) as usize, (j - 1) as usize);
        self.data.view((i * r, j * r), (r, r)).into_owned()
    }

    /// Writes block `(i, j)`. Panics on out-of-range indices.
    pub fn set_block(&mut self, i: usize, j: usize, value: &DMatrix<f64>) {
        assert!(self.in_range(i as isize, j as isize), "block ({i},{j}) out of range");
        let r = self.block_dim;
        self.data
            .view_mut(((i - 1) * r, (j - 1) * r), (r, r))
            .copy_from(value);
    }

    pub fn add_to_block(&mut self, i: usize, j: usize, value: &DMatrix<f64>) {
        assert!(self.in_range(i as isize, j as isize), "block ({i},{j}) out of range");
        let r = self.block_dim;
        let mut view = self.data.view_mut(((i - 1) * r, (j - 1) * r), (r, r));
        view += value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: &self.data * factor,
            ..self.clone()
        }
    }

    /// Blockwise transpose, which for a flat matrix is the plain transpose.
    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            block_dim: self.block_dim,
            data: self.data.transpose(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.rows == self.cols && is_symmetric(&self.data, rel_tol)
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Checks `min_eig >= -tol * max|eig|`.
pub fn check_psd(m: &DMatrix<f64>, tol: f64, context: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(PcrbError::NonFinite(context.to_string()));
    }
    let (min_eig, max_eig) = eig_range(m);
    let scale = min_eig.abs().max(max_eig.abs());
    if min_eig < -tol * scale {
        return Err(PcrbError::NotPositiveSemidefinite {
            context: context.to_string(),
            min_eig,
            max_eig,
        });
    }
    Ok(())
}

/// Reciprocal 2-norm condition number of a symmetric matrix.
pub fn rcond_sym(m: &DMatrix<f64>) -> f64 {
    let (min_eig, max_eig) = eig_range(m);
    if max_eig <= 0.0 {
        return 0.0;
    }
    (min_eig / max_eig).max(0.0)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
///
/// Fails when the reciprocal condition number drops under [`RCOND_FLOOR`] or
/// the factorization breaks down; no pseudo-inverse fallback.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(PcrbError::NonFinite(context.to_string()));
    }
    let rcond = rcond_sym(m);
    if rcond < RCOND_FLOOR {
        return Err(PcrbError::Singular {
            context: context.to_string(),
            rcond,
        });
    }
    let chol = nalgebra::Cholesky::new(symmetrize(m)).ok_or_else(|| PcrbError::Singular {
        context: context.to_string(),
        rcond,
    })?;
    Ok(symmetrize(&chol.inverse()))
}

/// General inverse via LU, for the non-symmetric pieces of the lemma utilities.
pub fn lu_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or_else(|| PcrbError::Singular {
        context: context.to_string(),
        rcond: 0.0,
    })
}

/// Schur complement of a symmetric matrix onto its trailing `keep` rows/cols:
/// `A22 - A21 A11^{-1} A12`.
pub fn schur_onto_trailing(m: &DMatrix<f64>, keep: usize, context: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if keep > n || m.ncols() != n {
        return Err(PcrbError::Shape(format!(
            "cannot keep {keep} trailing rows of a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    let drop = n - keep;
    let a22 = m.view((drop, drop), (keep, keep)).into_owned();
    if drop == 0 {
        return Ok(a22);
    }
    let a11 = m.view((0, 0), (drop, drop)).into_owned();
    let a12 = m.view((0, drop), (drop, keep)).into_owned();
    let a21 = m.view((drop, 0), (keep, drop)).into_owned();
    let a11_inv = spd_inverse(&a11, context)?;
    Ok(symmetrize(&(a22 - a21 * a11_inv * a12)))
}

/// Parses a row-major flat slice into a matrix.
pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<DMatrix<f64>> {
    if values.len() != rows * cols {
        return Err(PcrbError::Shape(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, values))
}

/// Frobenius-norm relative difference `|a - b| / max(|a|, |b|)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return 0.0;
    }
    (a - b).norm() / scale
}

/// Largest elementwise relative deviation, each entry scaled by the larger
/// of the two matrices' max-abs entries so near-zero entries do not blow up.
pub fn max_rel_elementwise(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        return 0.0;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_range_blocks_are_zero() {
        let mut m = BlockMatrix::zeros(2, 2, 2);
        m.set_block(1, 2, &DMatrix::from_element(2, 2, 3.0));
        assert_eq!(m.block(1, 2)[(0, 0)], 3.0);
        for (i, j) in [(0, 1), (-1, 2), (3, 1), (1, 3), (0, 0)] {
            assert_eq!(m.block(i, j), DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn spd_inverse_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            spd_inverse(&m, "test"),
            Err(PcrbError::Singular { .. })
        ));
    }

    #[test]
    fn scalar_schur() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = schur_onto_trailing(&m, 1, "test").unwrap();
        assert!((s[(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn psd_check_flags_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(check_psd(&m, PSD_TOL, "m").is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(check_psd(&ok, PSD_TOL, "m").is_ok());
    }
}
