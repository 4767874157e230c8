use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Condition number above which a fibre metric or frame block is treated as
/// singular.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// True for NaN or a condition number at or above [`MAX_CONDITION`].
pub(crate) fn ill_conditioned(cond: f64) -> bool {
    cond.is_nan() || cond >= MAX_CONDITION
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    if s.is_empty() {
        return 1.0;
    }
    let max = s.max();
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Number of singular values above `rel * max(largest, floor)`.
pub(crate) fn numerical_rank(m: &DMatrix<f64>, rel: f64, floor: f64) -> usize {
    let s = singular_values(m);
    let reference = s.iter().copied().fold(floor, f64::max);
    if reference == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel * reference).count()
}

/// Orthonormal basis (columns) of the null space of a square matrix.
pub(crate) fn null_space(m: &DMatrix<f64>, rel: f64, floor: f64) -> DMatrix<f64> {
    let k = m.ncols();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let reference = svd.singular_values.iter().copied().fold(floor, f64::max);
    let mut cols = Vec::new();
    for i in 0..k {
        let s = svd.singular_values.get(i).copied().unwrap_or(0.0);
        if reference == 0.0 || s <= rel * reference {
            cols.push(v_t.row(i).transpose());
        }
    }
    // nalgebra's thin SVD of a square matrix has k singular values; rows
    // beyond that never occur here.
    if cols.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

pub(crate) fn solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    m.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Regularity(format!("{what} is singular")))
}

pub(crate) fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Regularity(format!("{what} is singular")))
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
