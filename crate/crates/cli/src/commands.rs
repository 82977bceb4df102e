use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use pmoe::pipeline::{self, Selection};
use pmoe::simulation::BUILTIN_NAMES;
use pmoe::{
    effect, penalty_weights, solve_with, Dataset, EffectOptions, Method, PilotConfig, PmoeConfig, PmoeProblem, Scenario,
};

use crate::args::{
    Command, DataArgs, EstimateArgs, GcvPathArgs, GenerateArgs, MethodName, Orthogonalize, ScenarioArgs, SelectArgs,
    SimulateArgs,
};
use crate::error::{CliError, Result};
use crate::report::{
    Diagnostics, EstimateReport, GcvPoint, ResolvedConfig, SelectReport, SimulateReport, SCHEMA_VERSION,
};
use crate::table::{read_dataset, write_dataset, ColumnRoles};

/// Largest pairwise |correlation| tolerated before `auto` orthogonalizes.
pub const AUTO_ORTHOGONALIZE_CORRELATION: f64 = 0.05;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Select(args) => select(&args),
        Command::Estimate(args) => estimate(&args),
        Command::Simulate(args) => simulate(&args),
        Command::GcvPath(args) => gcv_path(&args),
        Command::Generate(args) => generate(&args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Writes to `path`, or to standard output when it is `None`.
fn emit(path: Option<&Path>, body: &[u8]) -> Result<()> {
    let stdout_err = |source| CliError::Io { path: PathBuf::from("<stdout>"), source };
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(body).and_then(|_| w.flush()).map_err(|source| CliError::Io { path: p.to_path_buf(), source })
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body).and_then(|_| out.flush()).map_err(stdout_err)
        }
    }
}

fn json(value: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    Ok(body)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Loaded data with the resolved configuration of one analysis.
struct Prepared {
    ds: Dataset,
    config: PmoeConfig,
    resolved: ResolvedConfig,
}

fn prepare(data: &DataArgs) -> Result<Prepared> {
    positive("tau", data.tau)?;
    let roles =
        ColumnRoles { outcome: &data.outcome, treatment: &data.treatment, covariates: data.covariates.as_deref() };
    let (ds, _) = read_dataset(&data.input, &roles)?.standardize()?;
    let max_abs_correlation = ds.max_abs_correlation();
    let orthogonalize = match data.orthogonalize {
        Orthogonalize::Auto => max_abs_correlation > AUTO_ORTHOGONALIZE_CORRELATION,
        Orthogonalize::On => true,
        Orthogonalize::Off => false,
    };
    let config = PmoeConfig {
        tau: data.tau,
        pilot: PilotConfig { outcome_ridge: data.outcome_ridge, treatment_ridge: data.treatment_ridge },
        orthogonalize,
        lambda_grid: data.lambda_grid.clone(),
        ..PmoeConfig::default()
    };
    let resolved = ResolvedConfig {
        input: data.input.display().to_string(),
        outcome: data.outcome.clone(),
        treatment: data.treatment.clone(),
        covariates: ds.column_names().to_vec(),
        orthogonalize_mode: data.orthogonalize,
        max_abs_correlation,
        pmoe: config.clone(),
        bootstrap: None,
        seed: None,
    };
    Ok(Prepared { ds, config, resolved })
}

fn names_of(ds: &Dataset, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&j| ds.column_names()[j].clone()).collect()
}

fn gcv_points(selection: &Selection) -> Vec<GcvPoint> {
    let path = &selection.path;
    path.lambdas
        .iter()
        .zip(&path.scores)
        .zip(&path.fits)
        .map(|((&lambda, score), fit)| GcvPoint {
            lambda,
            gcv: score.value.is_finite().then_some(score.value),
            rss: score.rss,
            effective_df: score.effective_df,
            n_selected: fit.selected.len(),
        })
        .collect()
}

fn select_report(p: &Prepared, selection: &Selection) -> SelectReport {
    let fit = selection.fit();
    SelectReport {
        schema_version: SCHEMA_VERSION,
        command: "select",
        config: p.resolved.clone(),
        selected: names_of(&p.ds, &fit.selected),
        selected_indices: fit.selected.clone(),
        alpha_hat: fit.alpha_hat.iter().copied().collect(),
        lambda_hat: fit.lambda,
        tau: fit.tau,
        gcv_path: gcv_points(selection),
        diagnostics: Diagnostics {
            n: p.ds.n(),
            r: p.ds.r(),
            orthogonalized: selection.orthogonalized,
            theta_tilde: selection.pilots.theta_tilde,
            outcome_ridge: selection.pilots.outcome_ridge,
            treatment_ridge: selection.pilots.treatment_ridge,
            treatment_fallback: selection.pilots.treatment_fallback,
            capped_weights: selection.weights.capped.iter().filter(|&&c| c).count(),
            penalty_weights: selection.weights.nu.iter().copied().collect(),
            kkt_violation: fit.kkt_violation,
            iterations: fit.iterations,
        },
    }
}

pub fn select(args: &SelectArgs) -> Result<()> {
    let p = prepare(&args.data)?;
    let selection = pipeline::select(&p.ds, &p.config)?;
    emit(args.out.as_deref(), &json(&select_report(&p, &selection))?)
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let mut p = prepare(&args.data)?;
    p.config.effect = EffectOptions { propensity_terms: args.propensity_terms };
    p.resolved.pmoe = p.config.clone();
    p.resolved.bootstrap = Some(args.bootstrap);
    p.resolved.seed = Some(args.seed);
    let bootstrap = (args.bootstrap > 0).then_some((args.bootstrap, args.seed));
    let analysis = pipeline::analyze(&p.ds, &p.config, bootstrap)?;
    let est = &analysis.effect;
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        config: p.resolved.clone(),
        theta_hat: est.theta_hat,
        se: est.se,
        ci: est.ci.map(|(lo, hi)| [lo, hi]),
        selected: names_of(&p.ds, &est.selected),
        lambda_hat: analysis.selection.fit().lambda,
        bootstrap: args.bootstrap,
        bootstrap_failed: analysis.bootstrap_failed,
        propensity_fallback: est.propensity_fallback,
    };
    emit(args.out.as_deref(), &json(&report)?)
}

fn resolve_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    if let Some(path) = &args.scenario_file {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let scenario: Scenario = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: invalid scenario: {e}", path.display())))?;
        scenario.validate()?;
        return Ok(scenario);
    }
    let name = args
        .positional
        .as_ref()
        .or(args.scenario.as_ref())
        .ok_or_else(|| CliError::Validation("a scenario name or --scenario-file is required".into()))?;
    Scenario::builtin(name).ok_or_else(|| {
        CliError::Validation(format!("unknown scenario '{name}'; available: {}", BUILTIN_NAMES.join(", ")))
    })
}

fn methods_of(args: &SimulateArgs) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in &args.methods {
        match name {
            MethodName::Pmoe => {
                for &tau in &args.tau {
                    positive("tau", tau)?;
                    methods.push(Method::Pmoe { tau });
                }
            }
            MethodName::Yfit => methods.push(Method::Yfit),
            MethodName::Oracle => methods.push(Method::Oracle),
        }
    }
    let mut labels: Vec<String> = methods.iter().map(Method::label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != methods.len() {
        return Err(CliError::Validation("duplicate methods requested".into()));
    }
    Ok(methods)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let scenario = resolve_scenario(&args.scenario)?;
    let methods = methods_of(args)?;
    let mut config = scenario.config();
    match args.orthogonalize {
        Orthogonalize::Auto => {}
        Orthogonalize::On => config.orthogonalize = true,
        Orthogonalize::Off => config.orthogonalize = false,
    }
    let report = pmoe::run_with(&scenario, args.n, args.reps, &methods, args.seed, &config, true)?;
    let Some(dir) = &args.out else {
        return emit(None, report.to_csv().as_bytes());
    };
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let full = SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        scenario_definition: &scenario,
        methods,
        pmoe: &config,
        report: &report,
    };
    emit(Some(&dir.join("report.json")), &json(&full)?)?;
    emit(Some(&dir.join("table.csv")), report.to_csv().as_bytes())?;
    emit(Some(&dir.join("draws.csv")), report.draws_csv().as_bytes())
}

fn csv_row(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn gcv_path(args: &GcvPathArgs) -> Result<()> {
    let p = prepare(&args.data)?;
    let selection = pipeline::select(&p.ds, &p.config)?;
    let names = p.ds.column_names();
    let mut body = csv_row(
        ["lambda", "gcv", "n_selected"].iter().map(|s| s.to_string()).chain(names.iter().map(|n| format!("alpha_{n}"))),
    );
    for ((lambda, score), fit) in selection.path.lambdas.iter().zip(&selection.path.scores).zip(&selection.path.fits) {
        body.push_str(&csv_row(
            [format!("{lambda:?}"), format!("{:?}", score.value), fit.selected.len().to_string()]
                .into_iter()
                .chain(fit.alpha_hat.iter().map(|a| format!("{a:?}"))),
        ));
    }
    emit(args.out.as_deref(), body.as_bytes())?;

    let Some(taus) = &args.tau_sweep else {
        return Ok(());
    };
    if !(args.sweep_lambda >= 0.0 && args.sweep_lambda.is_finite()) {
        return Err(CliError::Validation(format!("sweep lambda must be >= 0, got {}", args.sweep_lambda)));
    }
    let sweep_out =
        args.sweep_out.as_deref().ok_or_else(|| CliError::Validation("--tau-sweep needs --sweep-out".into()))?;
    let design = pipeline::working_design(&p.ds, p.config.orthogonalize)?;
    let weights = penalty_weights(&selection.pilots);
    let mut sweep =
        csv_row(["tau", "lambda"].iter().map(|s| s.to_string()).chain(names.iter().map(|n| format!("alpha_{n}"))));
    for &tau in taus {
        positive("tau", tau)?;
        let problem = PmoeProblem::new(&design, &selection.pilots.y_tilde, p.ds.d(), tau)?;
        let fit = solve_with(&problem, &weights, args.sweep_lambda, None, &p.config.solver)?;
        sweep.push_str(&csv_row(
            [format!("{tau:?}"), format!("{:?}", args.sweep_lambda)]
                .into_iter()
                .chain(fit.alpha_hat.iter().map(|a| format!("{a:?}"))),
        ));
    }
    emit(Some(sweep_out), sweep.as_bytes())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let scenario = resolve_scenario(&args.scenario)?;
    let mut rng = effect::replicate_rng(args.seed, 0);
    let ds = pmoe::simulation::generate_raw(&scenario, args.n, &mut rng)?;
    let mut body = Vec::new();
    write_dataset(&mut body, &ds, "y", "d")?;
    emit(args.out.as_deref(), &body)
}
