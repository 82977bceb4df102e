//! Small dense linear-algebra helpers shared by the regression fits.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{PmoeError, Result};

/// Smallest admissible squared Cholesky pivot relative to the largest diagonal entry.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// `XᵀX` through the blocked matrix product.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x
}

/// `XᵀWX` for a diagonal weight vector.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        col.component_mul_assign(w);
    }
    x.transpose() * scaled
}

/// Cholesky factor of a symmetric positive definite matrix, rejecting
/// factorizations whose pivots reveal numerical rank deficiency.
pub fn cholesky_checked(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !max_diag.is_finite() || max_diag == 0.0 {
        return Err(PmoeError::SingularDesign);
    }
    let chol = Cholesky::new(a).ok_or(PmoeError::SingularDesign)?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if min_pivot < PIVOT_TOLERANCE * max_diag {
        return Err(PmoeError::SingularDesign);
    }
    Ok(chol)
}

/// Solves `(XᵀX + diag(penalty)) β = Xᵀy`.
///
/// `penalty` has one entry per column; zero entries leave that column unpenalized.
pub fn penalized_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, penalty: &[f64]) -> Result<DVector<f64>> {
    debug_assert_eq!(penalty.len(), x.ncols());
    let mut a = gram(x);
    for (j, p) in penalty.iter().enumerate() {
        a[(j, j)] += p;
    }
    let rhs = x.tr_mul(y);
    Ok(cholesky_checked(a)?.solve(&rhs))
}

/// Ordinary least squares.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    penalized_least_squares(x, y, &vec![0.0; x.ncols()])
}

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Copies the listed columns, in order.
pub fn select_columns(x: &DMatrix<f64>, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), columns.len(), |i, k| x[(i, columns[k])])
}

/// Copies the listed rows, in order (repetitions allowed).
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() as f64 - 1.0)).sqrt()
}

/// Numerically stable `ln(1 + e^z)`.
#[inline]
pub fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function evaluated without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
