//! Causal adaptive-lasso penalty weights.

use nalgebra::DVector;

use crate::pilot::PilotEstimates;

/// Weight assigned when the outcome pilot coefficient is numerically zero.
pub const WEIGHT_CAP: f64 = 1e12;
const CAP_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    pub nu: DVector<f64>,
    pub capped: Vec<bool>,
}

impl PenaltyWeights {
    /// `νⱼ = 1 / (α̃_y[j]² (1 + |α̃_d[j]|)²)`, capped at [`WEIGHT_CAP`].
    pub fn from_coefficients(alpha_y: &DVector<f64>, alpha_d: &DVector<f64>) -> Self {
        assert_eq!(alpha_y.len(), alpha_d.len());
        let mut capped = vec![false; alpha_y.len()];
        let nu = DVector::from_fn(alpha_y.len(), |j, _| {
            let ay2 = alpha_y[j] * alpha_y[j];
            if ay2 < CAP_THRESHOLD {
                capped[j] = true;
                return WEIGHT_CAP;
            }
            let t = 1.0 + alpha_d[j].abs();
            (1.0 / (ay2 * t * t)).min(WEIGHT_CAP)
        });
        Self { nu, capped }
    }

    /// Plain lasso weights.
    pub fn unit(r: usize) -> Self {
        Self { nu: DVector::from_element(r, 1.0), capped: vec![false; r] }
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }
}

pub fn penalty_weights(pilots: &PilotEstimates) -> PenaltyWeights {
    PenaltyWeights::from_coefficients(&pilots.alpha_tilde_y, &pilots.alpha_tilde_d)
}
