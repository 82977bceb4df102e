//! Dataset representation, column standardization and Gram-Schmidt
//! orthogonalization of the covariate matrix.
//!
//! The treatment vector and the outcome are never rescaled: the treatment
//! effect keeps the units of the outcome.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PmoeError, Result};
use crate::linalg;

/// Relative residual norm below which a column is declared dependent.
const RANK_TOLERANCE: f64 = 1e-10;

/// Location and scale removed from one covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// Covariates `x` (n × r), binary treatment `d` and real outcome `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    d: DVector<f64>,
    y: DVector<f64>,
    column_names: Vec<String>,
    standardized: bool,
}

impl Dataset {
    /// Validates and wraps raw data. Column names default to `x1..xr`.
    pub fn new(x: DMatrix<f64>, d: DVector<f64>, y: DVector<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        let (n, r) = x.shape();
        if n < 2 || r < 1 {
            return Err(PmoeError::InvalidInput(format!("need n >= 2 rows and r >= 1 covariates, got {n} x {r}")));
        }
        if d.len() != n || y.len() != n {
            return Err(PmoeError::InvalidInput(format!(
                "length mismatch: x has {n} rows, d has {}, y has {}",
                d.len(),
                y.len()
            )));
        }
        for j in 0..r {
            for i in 0..n {
                if !x[(i, j)].is_finite() {
                    return Err(PmoeError::NonFinite { row: i, col: j });
                }
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(PmoeError::InvalidInput(format!("non-finite outcome at row {i}")));
        }
        if let Some(i) = d.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(PmoeError::InvalidInput(format!("treatment must be 0 or 1, found {} at row {i}", d[i])));
        }
        let treated = d.iter().filter(|&&v| v == 1.0).count();
        if treated == 0 || treated == n {
            return Err(PmoeError::InvalidInput("treatment needs at least one treated and one control unit".into()));
        }
        let column_names = match column_names {
            Some(names) if names.len() != r => {
                return Err(PmoeError::InvalidInput(format!("{} column names for {r} covariates", names.len())))
            }
            Some(names) => names,
            None => (1..=r).map(|j| format!("x{j}")).collect(),
        };
        Ok(Self { x, d, y, column_names, standardized: false })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    /// Returns a copy with standardized covariates and the removed scales.
    pub fn standardize(&self) -> Result<(Dataset, Vec<ColumnScale>)> {
        let (x, scales) = standardize(&self.x)?;
        let ds = Dataset {
            x,
            d: self.d.clone(),
            y: self.y.clone(),
            column_names: self.column_names.clone(),
            standardized: true,
        };
        Ok((ds, scales))
    }

    /// Unstandardized copy made of the listed rows (repetitions allowed).
    pub fn resample(&self, rows: &[usize]) -> Result<Dataset> {
        let x = linalg::select_rows(&self.x, rows);
        let d = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.d[i]));
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset::new(x, d, y, Some(self.column_names.clone()))
    }

    /// Largest absolute pairwise sample correlation between covariates.
    pub fn max_abs_correlation(&self) -> f64 {
        let (n, r) = self.x.shape();
        let mut centered = self.x.clone();
        for mut col in centered.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        let corr = linalg::gram(&centered);
        let mut max = 0.0_f64;
        for i in 0..r {
            for j in (i + 1)..r {
                max = max.max(corr[(i, j)].abs());
            }
        }
        debug_assert!(n >= 2);
        max
    }
}

/// Centers every column and scales it to unit sample standard deviation
/// (divisor `n - 1`).
pub fn standardize(x_raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<ColumnScale>)> {
    let (n, r) = x_raw.shape();
    if n < 2 {
        return Err(PmoeError::InvalidInput("standardization needs n >= 2".into()));
    }
    let mut x = x_raw.clone();
    let mut scales = Vec::with_capacity(r);
    for j in 0..r {
        let mut col = x.column_mut(j);
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(PmoeError::NonFinite { row: i, col: j });
        }
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        // Relative test so that columns constant up to rounding are rejected too.
        if sd <= 1e-14 * mean.abs().max(1.0) {
            return Err(PmoeError::ConstantColumn(j));
        }
        col /= sd;
        scales.push(ColumnScale { mean, sd });
    }
    Ok((x, scales))
}

/// Covariates orthogonalized column by column, in the original order.
///
/// Column `j` of `u` lies in the span of columns `0..=j` of the source
/// covariates and is re-standardized, so `uᵀu = (n - 1) I`.
#[derive(Debug, Clone)]
pub struct OrthogonalizedDataset {
    u: DMatrix<f64>,
    source: Dataset,
}

impl OrthogonalizedDataset {
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn source(&self) -> &Dataset {
        &self.source
    }

    /// Source covariate columns that column `j` of `u` was built from.
    pub fn source_columns(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        0..=j
    }
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
pub fn gram_schmidt(ds: &Dataset) -> Result<OrthogonalizedDataset> {
    if !ds.is_standardized() {
        return Err(PmoeError::InvalidInput("gram_schmidt expects a standardized dataset".into()));
    }
    let (n, r) = ds.x().shape();
    let scale = (n as f64 - 1.0).sqrt();
    let mut q = DMatrix::<f64>::zeros(n, r);
    for j in 0..r {
        let mut v: DVector<f64> = ds.x().column(j).into_owned();
        let original = v.norm();
        for _pass in 0..2 {
            for k in 0..j {
                let qk = q.column(k);
                let proj = qk.dot(&v);
                v.axpy(-proj, &qk, 1.0);
            }
        }
        let residual = v.norm();
        if residual < RANK_TOLERANCE * original {
            return Err(PmoeError::RankDeficient(j));
        }
        v /= residual;
        q.set_column(j, &v);
    }
    let mut u = q * scale;
    // Projections keep columns centered; remove rounding drift before rescaling.
    for mut col in u.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        col /= sd;
    }
    Ok(OrthogonalizedDataset { u, source: ds.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(x: DMatrix<f64>) -> Dataset {
        let n = x.nrows();
        let d = DVector::from_fn(n, |i, _| (i % 2) as f64);
        let y = DVector::from_fn(n, |i, _| i as f64);
        Dataset::new(x, d, y, None).unwrap()
    }

    #[test]
    fn symmetric_three_point_column() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let (z, scales) = standardize(&x).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(scales[0], ColumnScale { mean: 2.0, sd: 1.0 });
    }

    #[test]
    fn standardization_is_idempotent() {
        let x = DMatrix::from_fn(7, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.3 * j as f64 * i as f64);
        let (z, _) = standardize(&x).unwrap();
        let (zz, _) = standardize(&z).unwrap();
        assert!((z - zz).amax() < 1e-12);
    }

    #[test]
    fn constant_column_is_rejected() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 4.0, 5.0, 5.0, 5.0]);
        assert_eq!(standardize(&x).unwrap_err(), PmoeError::ConstantColumn(1));
    }

    #[test]
    fn non_finite_entry_is_reported() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, f64::NAN, 2.0]);
        assert_eq!(standardize(&x).unwrap_err(), PmoeError::NonFinite { row: 1, col: 0 });
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let bad = DVector::from_vec(vec![0.0, 2.0, 1.0]);
        assert!(matches!(Dataset::new(x.clone(), bad, y.clone(), None), Err(PmoeError::InvalidInput(_))));
        let all_treated = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(Dataset::new(x.clone(), all_treated, y.clone(), None).is_err());
        let ok = Dataset::new(x, DVector::from_vec(vec![0.0, 1.0, 1.0]), y, None).unwrap();
        assert_eq!(ok.column_names(), &["x1".to_string()]);
        assert!(!ok.is_standardized());
    }

    #[test]
    fn orthogonal_input_is_a_fixed_point() {
        // Centered, mutually orthogonal columns.
        let x = DMatrix::from_column_slice(4, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0]);
        let ds = toy(x).standardize().unwrap().0;
        let o = gram_schmidt(&ds).unwrap();
        assert!((o.u() - ds.x()).amax() < 1e-10);
    }

    #[test]
    fn two_column_case_recovers_the_noise_direction() {
        // x2 = x1 + e with e orthogonal to x1 and both centered.
        let x1 = [1.0, -1.0, 2.0, -2.0, 0.0, 0.0];
        let e = [1.0, 1.0, 0.0, 0.0, -1.0, -1.0];
        let mut data = Vec::new();
        data.extend_from_slice(&x1);
        data.extend(x1.iter().zip(e.iter()).map(|(a, b)| a + b));
        let ds = toy(DMatrix::from_column_slice(6, 2, &data)).standardize().unwrap().0;
        let o = gram_schmidt(&ds).unwrap();
        // By hand: u2 is e rescaled to unit sample SD.
        let e = DVector::from_column_slice(&e);
        let e_std = &e / (e.norm_squared() / 5.0).sqrt();
        assert!((o.u().column(1) - e_std).amax() < 1e-10);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = DMatrix::from_column_slice(4, 3, &[1.0, 2.0, 0.0, 5.0, 3.0, 1.0, 1.0, 2.0, 1.0, 2.0, 0.0, 5.0]);
        let ds = toy(x).standardize().unwrap().0;
        assert_eq!(gram_schmidt(&ds).unwrap_err(), PmoeError::RankDeficient(2));
    }
}
