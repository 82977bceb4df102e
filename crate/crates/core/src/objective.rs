//! The modified objective combining outcome and treatment scores.
//!
//! For a standardized design with `XᵀX = m I`:
//!
//! ```text
//! M(α) = ‖a_y − mα‖² / (2m) + (1/τ) [ −a_dᵀα + Σᵢ log(1 + exp(xᵢα)) ]
//! ```
//!
//! where `a_y = |Xᵀỹ|` and `a_d = |Xᵀd|` componentwise. With `τ = ∞` the
//! treatment term vanishes and the objective is the lasso loss on `ỹ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{PmoeError, Result};
use crate::linalg::{log1p_exp, sigmoid};

#[derive(Debug, Clone)]
pub struct PmoeProblem<'a> {
    x: &'a DMatrix<f64>,
    a_y: DVector<f64>,
    a_d: DVector<f64>,
    tau: f64,
    inv_tau: f64,
    m: f64,
}

impl<'a> PmoeProblem<'a> {
    /// Builds the problem on design `x` (standardized, possibly orthogonalized).
    pub fn new(x: &'a DMatrix<f64>, y_tilde: &DVector<f64>, d: &DVector<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(PmoeError::InvalidInput(format!("tau must be positive and finite, got {tau}")));
        }
        Self::check_shapes(x, y_tilde)?;
        if d.len() != x.nrows() {
            return Err(PmoeError::InvalidInput("treatment length differs from design rows".into()));
        }
        Ok(Self {
            x,
            a_y: x.tr_mul(y_tilde).abs(),
            a_d: x.tr_mul(d).abs(),
            tau,
            inv_tau: 1.0 / tau,
            m: x.nrows() as f64 - 1.0,
        })
    }

    /// Outcome-only problem (`τ = ∞`): the lasso loss on the outcome scores.
    pub fn outcome_only(x: &'a DMatrix<f64>, y_tilde: &DVector<f64>) -> Result<Self> {
        Self::check_shapes(x, y_tilde)?;
        Ok(Self {
            x,
            a_y: x.tr_mul(y_tilde).abs(),
            a_d: DVector::zeros(x.ncols()),
            tau: f64::INFINITY,
            inv_tau: 0.0,
            m: x.nrows() as f64 - 1.0,
        })
    }

    fn check_shapes(x: &DMatrix<f64>, y_tilde: &DVector<f64>) -> Result<()> {
        if x.nrows() < 2 || x.ncols() == 0 || y_tilde.len() != x.nrows() {
            return Err(PmoeError::InvalidInput(format!(
                "design {} x {} does not match outcome length {}",
                x.nrows(),
                x.ncols(),
                y_tilde.len()
            )));
        }
        Ok(())
    }

    pub fn x(&self) -> &DMatrix<f64> {
        self.x
    }

    pub fn a_y(&self) -> &DVector<f64> {
        &self.a_y
    }

    pub fn a_d(&self) -> &DVector<f64> {
        &self.a_d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn inv_tau(&self) -> f64 {
        self.inv_tau
    }

    /// Diagonal of `XᵀX` under the standardization convention (`n − 1`).
    pub fn gram_scale(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    pub fn objective(&self, alpha: &DVector<f64>) -> f64 {
        let quad = (&self.a_y - alpha * self.m).norm_squared() / (2.0 * self.m);
        if self.inv_tau == 0.0 {
            return quad;
        }
        let z = self.x * alpha;
        quad + self.inv_tau * (self.logistic_sum(&z) - self.a_d.dot(alpha))
    }

    pub fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let mut g = alpha * self.m - &self.a_y;
        if self.inv_tau != 0.0 {
            let mu = (self.x * alpha).map(sigmoid);
            g += (self.x.tr_mul(&mu) - &self.a_d) * self.inv_tau;
        }
        g
    }

    /// Objective and gradient sharing one product `Xα`.
    pub fn objective_and_gradient(&self, alpha: &DVector<f64>) -> (f64, DVector<f64>) {
        let quad = (&self.a_y - alpha * self.m).norm_squared() / (2.0 * self.m);
        let mut g = alpha * self.m - &self.a_y;
        if self.inv_tau == 0.0 {
            return (quad, g);
        }
        let z = self.x * alpha;
        let f = quad + self.inv_tau * (self.logistic_sum(&z) - self.a_d.dot(alpha));
        let mu = z.map(sigmoid);
        g += (self.x.tr_mul(&mu) - &self.a_d) * self.inv_tau;
        (f, g)
    }

    fn logistic_sum(&self, z: &DVector<f64>) -> f64 {
        z.iter().map(|&v| log1p_exp(v)).sum()
    }

    /// Upper bound on the gradient's Lipschitz constant: `m + n·maxᵢ‖xᵢ‖² / (4τ)`.
    pub fn lipschitz_bound(&self) -> f64 {
        if self.inv_tau == 0.0 {
            return self.m;
        }
        let max_row = self.x.row_iter().map(|row| row.norm_squared()).fold(0.0, f64::max);
        self.m + self.inv_tau * self.n() as f64 * max_row / 4.0
    }
}

/// First-order approximation of the unpenalized minimizer:
/// `(2τ/(2τ+1))|α̃_y| + (1/(2τ+1))|α̃_d|`.
pub fn taylor_weighted_sum(alpha_y: &DVector<f64>, alpha_d: &DVector<f64>, tau: f64) -> DVector<f64> {
    let w = 2.0 * tau / (2.0 * tau + 1.0);
    alpha_y.abs() * w + alpha_d.abs() * (1.0 - w)
}
