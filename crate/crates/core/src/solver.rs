//! Proximal gradient solver for `M(α) + λ Σⱼ νⱼ|αⱼ|`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{PmoeError, Result};
use crate::objective::PmoeProblem;
use crate::penalty::PenaltyWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Keep the penalized objective after every iteration.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kkt_tolerance: 1e-7, max_iterations: 10_000, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmoeFit {
    pub alpha_hat: DVector<f64>,
    pub selected: Vec<usize>,
    pub lambda: f64,
    pub tau: f64,
    pub objective_value: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
    pub trace: Option<Vec<f64>>,
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest scaled KKT residual at `alpha` given the smooth gradient `g`.
pub fn kkt_violation(alpha: &DVector<f64>, g: &DVector<f64>, weights: &PenaltyWeights, lambda: f64) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..alpha.len() {
        let pen = lambda * weights.nu[j];
        let v = if alpha[j] != 0.0 {
            (g[j] + pen * alpha[j].signum()).abs() / pen.max(1.0)
        } else {
            (g[j].abs() - pen).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest λ whose solution is identically zero.
pub fn lambda_max(problem: &PmoeProblem<'_>, weights: &PenaltyWeights) -> f64 {
    let g0 = problem.gradient(&DVector::zeros(problem.r()));
    g0.iter().zip(weights.nu.iter()).map(|(g, nu)| g.abs() / nu).fold(0.0, f64::max)
}

fn penalty_value(alpha: &DVector<f64>, weights: &PenaltyWeights, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * alpha.iter().zip(weights.nu.iter()).map(|(a, nu)| nu * a.abs()).sum::<f64>()
}

pub fn solve(
    problem: &PmoeProblem<'_>,
    weights: &PenaltyWeights,
    lambda: f64,
    init: Option<&DVector<f64>>,
) -> Result<PmoeFit> {
    solve_with(problem, weights, lambda, init, &SolverOptions::default())
}

pub fn solve_with(
    problem: &PmoeProblem<'_>,
    weights: &PenaltyWeights,
    lambda: f64,
    init: Option<&DVector<f64>>,
    options: &SolverOptions,
) -> Result<PmoeFit> {
    let r = problem.r();
    if weights.len() != r {
        return Err(PmoeError::InvalidInput(format!("{} weights for {r} coefficients", weights.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PmoeError::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut alpha = match init {
        Some(a) if a.len() == r => a.clone(),
        Some(a) => return Err(PmoeError::InvalidInput(format!("initial point has length {}, expected {r}", a.len()))),
        None => DVector::zeros(r),
    };
    let thresholds = &weights.nu * lambda;
    // The smooth part has curvature at least m; start from the global bound and adapt down.
    let l_min = problem.gram_scale();
    let mut l = problem.lipschitz_bound();
    let (mut f, mut g) = problem.objective_and_gradient(&alpha);
    let mut trace = options.record_trace.then(|| vec![f + penalty_value(&alpha, weights, lambda)]);
    let mut violation = kkt_violation(&alpha, &g, weights, lambda);
    let mut iterations = 0;
    let mut candidate = DVector::zeros(r);
    while violation > options.kkt_tolerance {
        if iterations == options.max_iterations {
            return Err(PmoeError::NoConvergence { solver: "proximal gradient", residual: violation });
        }
        iterations += 1;
        let mut doublings = 0;
        let (fc, gc) = loop {
            for j in 0..r {
                candidate[j] = soft_threshold(alpha[j] - g[j] / l, thresholds[j] / l);
            }
            let step = &candidate - &alpha;
            let model = f + g.dot(&step) + 0.5 * l * step.norm_squared();
            let (fc, gc) = problem.objective_and_gradient(&candidate);
            // For convex f, f(c) − f − gᵀs ≤ ⟨∇f(c) − g, s⟩, which stays accurate
            // near the optimum where the value test suffers cancellation.
            let curvature = (&gc - &g).dot(&step);
            if fc <= model || curvature <= 0.5 * l * step.norm_squared() {
                break (fc, gc);
            }
            l *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(PmoeError::NoConvergence { solver: "proximal gradient", residual: violation });
            }
        };
        std::mem::swap(&mut alpha, &mut candidate);
        f = fc;
        g = gc;
        if let Some(t) = trace.as_mut() {
            t.push(f + penalty_value(&alpha, weights, lambda));
        }
        violation = kkt_violation(&alpha, &g, weights, lambda);
        if doublings == 0 {
            l = (l / 2.0).max(l_min);
        }
    }
    let selected = (0..r).filter(|&j| alpha[j] != 0.0).collect();
    let objective_value = f + penalty_value(&alpha, weights, lambda);
    Ok(PmoeFit {
        alpha_hat: alpha,
        selected,
        lambda,
        tau: problem.tau(),
        objective_value,
        kkt_violation: violation,
        iterations,
        trace,
    })
}
