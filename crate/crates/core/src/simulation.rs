//! Synthetic scenarios and the replicated comparison harness.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::data::Dataset;
use crate::effect::{estimate_effect, replicate_rng};
use crate::error::{PmoeError, Result};
use crate::linalg::{self, sigmoid};
use crate::pilot::fit_pilots;
use crate::pipeline::{self, PmoeConfig};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// One additive term of a linear predictor or mean function. Column indices
/// are zero-based (`0` is `x1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `coef · x[column]`
    Linear { column: usize, coef: f64 },
    /// `coef · Σ x[numerator] / (1 + |x[denominator]|)`
    SumOverAbs { coef: f64, numerator: Vec<usize>, denominator: usize },
    /// `coef · exp(Σ a·x[j]) / exp(Σ b·|x[k]|)`
    ExpRatio { coef: f64, numerator: Vec<(usize, f64)>, denominator: Vec<(usize, f64)> },
}

impl Term {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Term::Linear { column, coef } => coef * x[*column],
            Term::SumOverAbs { coef, numerator, denominator } => {
                coef * numerator.iter().map(|&j| x[j]).sum::<f64>() / (1.0 + x[*denominator].abs())
            }
            Term::ExpRatio { coef, numerator, denominator } => {
                let up: f64 = numerator.iter().map(|&(j, a)| a * x[j]).sum();
                let down: f64 = denominator.iter().map(|&(k, b)| b * x[k].abs()).sum();
                coef * (up - down).exp()
            }
        }
    }

    fn max_column(&self) -> usize {
        match self {
            Term::Linear { column, .. } => *column,
            Term::SumOverAbs { numerator, denominator, .. } => {
                numerator.iter().copied().chain(std::iter::once(*denominator)).max().unwrap_or(0)
            }
            Term::ExpRatio { numerator, denominator, .. } => {
                numerator.iter().chain(denominator.iter()).map(|&(j, _)| j).max().unwrap_or(0)
            }
        }
    }
}

fn eval_terms(terms: &[Term], x: &[f64]) -> f64 {
    terms.iter().map(|t| t.eval(x)).sum()
}

fn linear(coefs: &[(usize, f64)]) -> Vec<Term> {
    coefs.iter().map(|&(column, coef)| Term::Linear { column, coef }).collect()
}

/// Generative model: i.i.d. normal covariates, logistic treatment,
/// `y = θd + f(x) + N(0, noise_sd²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub r: usize,
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    /// Terms of the treatment linear predictor.
    pub treatment: Vec<Term>,
    /// Terms of the outcome mean, excluding `θd`.
    pub outcome: Vec<Term>,
    pub noise_sd: f64,
    pub true_theta: f64,
    pub true_support: Vec<usize>,
    /// Run the penalized fit on orthogonalized covariates.
    #[serde(default)]
    pub orthogonalize: bool,
}

pub const BUILTIN_NAMES: [&str; 6] = ["s1", "s2", "a2", "a3s1", "a3s2", "a3s3"];

impl Scenario {
    pub fn builtin(name: &str) -> Option<Scenario> {
        let main_treatment = linear(&[(0, 0.2), (1, -2.0), (4, 1.0), (5, -1.0), (6, 1.0), (7, -1.0)]);
        let wide_treatment = linear(&[(0, 0.5), (1, -1.0), (4, 0.5), (5, -0.5), (6, 0.5)]);
        let wide_outcome = linear(&[(0, 1.0), (1, 0.2), (2, 3.0), (3, 3.0)]);
        let base = |name: &str, r, mean, sd, treatment, outcome, noise_sd, orthogonalize| Scenario {
            name: name.to_string(),
            r,
            covariate_mean: mean,
            covariate_sd: sd,
            treatment,
            outcome,
            noise_sd,
            true_theta: 1.0,
            true_support: vec![0, 1, 2, 3],
            orthogonalize,
        };
        let s = match name {
            "s1" => {
                base(name, 100, 1.0, 4.0, main_treatment, linear(&[(0, 2.0), (1, 0.5), (2, 5.0), (3, 5.0)]), 4.0, false)
            }
            "s2" => {
                base(name, 100, 1.0, 4.0, main_treatment, linear(&[(0, 2.0), (1, 0.2), (2, 5.0), (3, 5.0)]), 4.0, false)
            }
            "a2" => base(
                name,
                100,
                1.0,
                std::f64::consts::SQRT_2,
                linear(&[(0, 1.0), (1, -2.0), (4, 1.0), (5, -1.0), (6, 1.0), (7, -1.0)]),
                linear(&[(0, 1.0), (1, 0.2), (2, -1.0), (3, 1.0)]),
                2.0,
                true,
            ),
            "a3s1" => base(name, 550, 0.0, 2.0, wide_treatment, wide_outcome, 2.0, false),
            "a3s2" => {
                let mut t = linear(&[(0, 0.1), (1, 1.0)]);
                t.push(Term::SumOverAbs { coef: 0.7, numerator: vec![9, 8], denominator: 7 });
                base(name, 550, 0.0, 2.0, t, wide_outcome, 2.0, false)
            }
            "a3s3" => {
                let mut o = linear(&[(0, 1.0)]);
                o.push(Term::ExpRatio {
                    coef: 2.0,
                    numerator: vec![(2, 0.2), (3, 0.2)],
                    denominator: vec![(0, 0.2), (1, 0.2)],
                });
                base(name, 550, 0.0, 2.0, wide_treatment, o, 2.0, false)
            }
            _ => return None,
        };
        Some(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PmoeError::InvalidInput(format!("scenario {}: {msg}", self.name)));
        if self.r == 0 {
            return bad("r must be positive".into());
        }
        if !(self.covariate_sd > 0.0 && self.noise_sd >= 0.0) {
            return bad("standard deviations must be positive".into());
        }
        let max_col = self.treatment.iter().chain(self.outcome.iter()).map(Term::max_column).max();
        if max_col.is_some_and(|c| c >= self.r) {
            return bad(format!("a term references a column beyond r = {}", self.r));
        }
        if self.true_support.iter().any(|&j| j >= self.r) {
            return bad("true support references a column beyond r".into());
        }
        Ok(())
    }

    /// Base configuration for methods run on this scenario.
    pub fn config(&self) -> PmoeConfig {
        PmoeConfig { orthogonalize: self.orthogonalize, ..PmoeConfig::default() }
    }
}

/// Draws an unstandardized dataset.
pub fn generate_raw<R: Rng>(scenario: &Scenario, n: usize, rng: &mut R) -> Result<Dataset> {
    scenario.validate()?;
    if n < 10 {
        return Err(PmoeError::InvalidInput(format!("generate needs n >= 10, got {n}")));
    }
    let r = scenario.r;
    let law = Normal::new(scenario.covariate_mean, scenario.covariate_sd)
        .map_err(|e| PmoeError::InvalidInput(e.to_string()))?;
    let noise = Normal::new(0.0, scenario.noise_sd).map_err(|e| PmoeError::InvalidInput(e.to_string()))?;
    let mut x = DMatrix::<f64>::zeros(n, r);
    let mut d = DVector::<f64>::zeros(n);
    let mut y = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; r];
    for i in 0..n {
        for v in row.iter_mut() {
            *v = law.sample(rng);
        }
        let p = sigmoid(eval_terms(&scenario.treatment, &row));
        d[i] = f64::from(rng.random::<f64>() < p);
        y[i] = scenario.true_theta * d[i] + eval_terms(&scenario.outcome, &row) + noise.sample(rng);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    Dataset::new(x, d, y, None)
}

/// Draws a dataset and standardizes its covariates.
pub fn generate_with<R: Rng>(scenario: &Scenario, n: usize, rng: &mut R) -> Result<Dataset> {
    Ok(generate_raw(scenario, n, rng)?.standardize()?.0)
}

pub fn generate(scenario: &Scenario, n: usize, seed: u64) -> Result<Dataset> {
    generate_with(scenario, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Treatment propensity of one covariate row under the scenario.
pub fn propensity_of(scenario: &Scenario, row: &[f64]) -> f64 {
    sigmoid(eval_terms(&scenario.treatment, row))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Pmoe { tau: f64 },
    Yfit,
    Oracle,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Pmoe { tau } => format!("pmoe(tau={tau})"),
            Method::Yfit => "yfit".into(),
            Method::Oracle => "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub bias: f64,
    pub sd: Option<f64>,
    pub mse: f64,
    /// `bias² + sd²(reps − 1)/reps`, equal to `mse` up to rounding.
    pub mse_from_moments: f64,
    pub mean_correct_zeros: f64,
    pub mean_incorrect_zeros: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodDraws {
    pub method: String,
    pub theta: Vec<f64>,
    pub correct_zeros: Vec<usize>,
    pub incorrect_zeros: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub failed_reps: Vec<usize>,
    pub methods: Vec<MethodSummary>,
    #[serde(skip)]
    pub draws: Vec<MethodDraws>,
}

impl SimulationReport {
    pub fn summary(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == label)
    }

    /// Table layout: one row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,n,method,bias,sd,mse,correct_zeros,incorrect_zeros\n");
        for m in &self.methods {
            let sd = m.sd.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.6},{},{:.6},{:.4},{:.4}\n",
                self.scenario, self.n, m.method, m.bias, sd, m.mse, m.mean_correct_zeros, m.mean_incorrect_zeros
            ));
        }
        out
    }

    /// Per-replication draws in long format.
    pub fn draws_csv(&self) -> String {
        let mut out = String::from("method,rep,theta_hat,correct_zeros,incorrect_zeros\n");
        for m in &self.draws {
            for (k, t) in m.theta.iter().enumerate() {
                out.push_str(&format!("{},{},{:?},{},{}\n", m.method, k, t, m.correct_zeros[k], m.incorrect_zeros[k]));
            }
        }
        out
    }
}

struct RepOutcome {
    theta: Vec<f64>,
    correct: Vec<usize>,
    incorrect: Vec<usize>,
}

fn zero_counts(selected: &[usize], support: &[usize], r: usize) -> (usize, usize) {
    let mut chosen = vec![false; r];
    for &j in selected {
        chosen[j] = true;
    }
    let mut in_support = vec![false; r];
    for &j in support {
        in_support[j] = true;
    }
    let correct = (0..r).filter(|&j| !in_support[j] && !chosen[j]).count();
    let incorrect = support.iter().filter(|&&j| !chosen[j]).count();
    (correct, incorrect)
}

fn one_replication(
    scenario: &Scenario,
    n: usize,
    methods: &[Method],
    config: &PmoeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RepOutcome> {
    let ds = generate_with(scenario, n, rng)?;
    let needs_selection = methods.iter().any(|m| !matches!(m, Method::Oracle));
    let shared = if needs_selection {
        let pilots = fit_pilots(&ds, &config.pilot)?;
        let design = pipeline::working_design(&ds, config.orthogonalize)?;
        Some((pilots, design))
    } else {
        None
    };
    let mut out = RepOutcome { theta: vec![], correct: vec![], incorrect: vec![] };
    for method in methods {
        let (theta, selected) = match (method, shared.as_ref()) {
            (Method::Pmoe { tau }, Some((pilots, design))) => {
                let cfg = PmoeConfig { tau: *tau, ..config.clone() };
                let sel = pipeline::select_with(&ds, design, pilots.clone(), &cfg)?;
                let est = estimate_effect(&ds, sel.selected(), &cfg.effect)?;
                (est.theta_hat, sel.selected().to_vec())
            }
            (Method::Yfit, Some((pilots, design))) => {
                let fit = baselines::y_fit_with(&ds, design, pilots.clone(), config)?;
                (fit.theta_hat, fit.selected)
            }
            _ => {
                let fit = baselines::oracle(&ds, &scenario.true_support, &config.effect)?;
                (fit.theta_hat, fit.selected)
            }
        };
        if !theta.is_finite() {
            return Err(PmoeError::InvalidInput(format!("{} produced a non-finite estimate", method.label())));
        }
        let (c, i) = zero_counts(&selected, &scenario.true_support, scenario.r);
        out.theta.push(theta);
        out.correct.push(c);
        out.incorrect.push(i);
    }
    Ok(out)
}

/// Runs `reps` replications with the scenario's default configuration.
pub fn run(scenario: &Scenario, n: usize, reps: usize, methods: &[Method], seed: u64) -> Result<SimulationReport> {
    run_with(scenario, n, reps, methods, seed, &scenario.config(), true)
}

/// Replication `k` uses stream `k` of the generator seeded with `seed`, so
/// serial and parallel runs agree exactly.
pub fn run_with(
    scenario: &Scenario,
    n: usize,
    reps: usize,
    methods: &[Method],
    seed: u64,
    config: &PmoeConfig,
    parallel: bool,
) -> Result<SimulationReport> {
    scenario.validate()?;
    if reps == 0 {
        return Err(PmoeError::InvalidInput("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(PmoeError::InvalidInput("no methods requested".into()));
    }
    let job = |k: usize| {
        let mut rng = replicate_rng(seed, k as u64);
        one_replication(scenario, n, methods, config, &mut rng)
    };
    let outcomes: Vec<Result<RepOutcome>> =
        if parallel { (0..reps).into_par_iter().map(job).collect() } else { (0..reps).map(job).collect() };
    let mut failed_reps = Vec::new();
    let mut ok = Vec::with_capacity(reps);
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::warn!("replication {k} failed: {e}");
                failed_reps.push(k);
            }
        }
    }
    if failed_reps.len() as f64 > MAX_FAILURE_RATE * reps as f64 || ok.is_empty() {
        return Err(PmoeError::TooManyFailures { failed: failed_reps.len(), total: reps });
    }
    let mut summaries = Vec::with_capacity(methods.len());
    let mut draws = Vec::with_capacity(methods.len());
    for (m, method) in methods.iter().enumerate() {
        let theta: Vec<f64> = ok.iter().map(|o| o.theta[m]).collect();
        let correct: Vec<usize> = ok.iter().map(|o| o.correct[m]).collect();
        let incorrect: Vec<usize> = ok.iter().map(|o| o.incorrect[m]).collect();
        summaries.push(summarize(method.label(), &theta, &correct, &incorrect, scenario.true_theta));
        draws.push(MethodDraws { method: method.label(), theta, correct_zeros: correct, incorrect_zeros: incorrect });
    }
    Ok(SimulationReport { scenario: scenario.name.clone(), n, reps, seed, failed_reps, methods: summaries, draws })
}

fn summarize(label: String, theta: &[f64], correct: &[usize], incorrect: &[usize], truth: f64) -> MethodSummary {
    let k = theta.len() as f64;
    let bias = linalg::mean(theta) - truth;
    let sd = (theta.len() > 1).then(|| linalg::sample_sd(theta));
    let mse = theta.iter().map(|t| (t - truth) * (t - truth)).sum::<f64>() / k;
    let mse_from_moments = bias * bias + sd.map_or(0.0, |s| s * s * (k - 1.0) / k);
    MethodSummary {
        method: label,
        bias,
        sd,
        mse,
        mse_from_moments,
        mean_correct_zeros: correct.iter().sum::<usize>() as f64 / k,
        mean_incorrect_zeros: incorrect.iter().sum::<usize>() as f64 / k,
    }
}
