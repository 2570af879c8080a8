//! Command pipelines. Each `run_*` function does its computation first and
//! writes files only once all results are in hand.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use gsdde_core::integrator::{integrate_ensemble, PathEnsemble};
use gsdde_core::model::validate_model;
use gsdde_core::scenario::{build_volatility_grid, generate_ensemble, TimeGrid};
use gsdde_core::stability::{
    check_delay_lipschitz, check_khasminskii, check_polynomial_growth, check_stability_assumption,
    delay_bound, moment_exponent_condition, CheckReport, DelayBound, StabilityError,
};
use gsdde_core::sublinear::{estimate_series, EstimateSeries};
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::CliError;
use crate::output::{gnuplot_script, write_file, write_paths_csv, write_series_csv, SeriesColumns};
use crate::verdict::{stability_verdict, VerdictReport};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub levels: Option<usize>,
    pub samples: Option<usize>,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let sim = &mut cfg.simulation;
        sim.seed = self.seed.unwrap_or(sim.seed);
        sim.levels = self.levels.unwrap_or(sim.levels);
        sim.samples = self.samples.unwrap_or(sim.samples);
        sim.steps = self.steps.unwrap_or(sim.steps);
        sim.horizon = self.horizon.unwrap_or(sim.horizon);
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg.output.format = self.format.unwrap_or(cfg.output.format);
    }
}

/// Everything a simulation produced, before any file is written.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: EstimateSeries,
    pub paths: PathEnsemble,
    pub grid: TimeGrid,
    /// `steps` had to grow so that `τ` is a whole number of steps.
    pub steps_adjusted: bool,
    pub elapsed: Duration,
}

impl Simulation {
    pub fn exploded_paths(&self) -> usize {
        self.paths.exploded_count()
    }

    pub fn total_paths(&self) -> usize {
        self.paths.levels() * self.paths.samples()
    }
}

/// validate → grid → ensemble → integrate → estimate.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation, CliError> {
    let start = Instant::now();
    let sim = &cfg.simulation;
    let (grid, steps_adjusted) =
        TimeGrid::aligned_to_delay(sim.horizon, sim.steps, cfg.model.delay.tau)?;
    let model = validate_model(cfg.model.clone(), cfg.history.clone(), &grid)?;
    let vol = build_volatility_grid(&model.vol, sim.levels)?;
    let scenario = generate_ensemble(&vol, sim.samples, &grid, sim.seed)?;
    let paths = integrate_ensemble(&model, &scenario)?;
    let series = estimate_series(&paths, &cfg.functional)?;
    Ok(Simulation {
        series,
        paths,
        grid,
        steps_adjusted,
        elapsed: start.elapsed(),
    })
}

/// Result of `simulate` or `reproduce` after files were written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub name: String,
    pub simulation: Simulation,
    pub verdict: VerdictReport,
    pub written: Vec<PathBuf>,
}

fn header_comments(name: &str, cfg: &ExperimentConfig, sim: &Simulation) -> Vec<String> {
    let s = &cfg.simulation;
    let th = cfg.verdict;
    vec![
        format!(
            "{name}: sublinear expectation estimates of {}",
            sim.series.functional
        ),
        format!(
            "m = {}, n = {}, seed = {}, steps = {}, horizon = {}, dt = {}",
            s.levels,
            s.samples,
            s.seed,
            sim.grid.steps(),
            sim.grid.horizon(),
            sim.grid.dt()
        ),
        format!(
            "exploded paths: {} of {}",
            sim.exploded_paths(),
            sim.total_paths()
        ),
        format!(
            "verdict thresholds (heuristic, calibrated on pilot runs): window_fraction = {}, \
             stable_ratio = {}, unstable_floor = {}",
            th.window_fraction, th.stable_ratio, th.unstable_floor
        ),
    ]
}

#[derive(Serialize)]
struct SeriesDocument<'a> {
    name: &'a str,
    comments: &'a [String],
    series: &'a EstimateSeries,
    verdict: &'a VerdictReport,
}

fn write_outputs(
    name: &str,
    cfg: &ExperimentConfig,
    sim: &Simulation,
    verdict: &VerdictReport,
    columns: SeriesColumns,
) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output.dir;
    let comments = header_comments(name, cfg, sim);
    let mut written = Vec::new();
    match cfg.output.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_series_csv(&mut buf, &sim.series, columns, &comments).expect("writing to memory");
            written.push(write_file(&dir.join(format!("{name}.csv")), &buf)?);
        }
        OutputFormat::Json => {
            let doc = SeriesDocument {
                name,
                comments: &comments,
                series: &sim.series,
                verdict,
            };
            let text = serde_json::to_string_pretty(&doc).expect("series serializes");
            written.push(write_file(
                &dir.join(format!("{name}.json")),
                text.as_bytes(),
            )?);
        }
    }
    if cfg.output.gnuplot {
        let script = gnuplot_script(&format!("{name}.csv"), columns, name);
        written.push(write_file(
            &dir.join(format!("{name}.gp")),
            script.as_bytes(),
        )?);
    }
    if cfg.output.dump_paths {
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &sim.paths).expect("writing to memory");
        written.push(write_file(&dir.join(format!("{name}_paths.csv")), &buf)?);
    }
    Ok(written)
}

/// Simulates `cfg` and writes `<name>.csv` (or `.json`) into the output
/// directory.
pub fn run_simulate(cfg: &ExperimentConfig, name: &str) -> Result<RunOutcome, CliError> {
    run_with_columns(cfg, name, SeriesColumns::UpperAndLower)
}

fn run_with_columns(
    cfg: &ExperimentConfig,
    name: &str,
    columns: SeriesColumns,
) -> Result<RunOutcome, CliError> {
    let simulation = simulate(cfg)?;
    let verdict = stability_verdict(&simulation.series, cfg.verdict)?;
    let written = write_outputs(name, cfg, &simulation, &verdict, columns)?;
    Ok(RunOutcome {
        name: name.to_string(),
        simulation,
        verdict,
        written,
    })
}

/// The three delay regimes of the cubic delay preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig41,
    Fig42,
    Fig43,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig41 => "fig41",
            Figure::Fig42 => "fig42",
            Figure::Fig43 => "fig43",
        }
    }

    /// Constant delay `δ = τ`.
    pub fn delay(self) -> f64 {
        match self {
            Figure::Fig41 => 0.01,
            Figure::Fig42 => 2.0,
            Figure::Fig43 => 0.08,
        }
    }

    pub fn default_seed(self) -> u64 {
        match self {
            Figure::Fig41 => 41,
            Figure::Fig42 => 42,
            Figure::Fig43 => 43,
        }
    }

    /// The unstable regime is shown through its lower estimate only.
    pub fn columns(self) -> SeriesColumns {
        match self {
            Figure::Fig42 => SeriesColumns::LowerOnly,
            _ => SeriesColumns::UpperAndLower,
        }
    }

    /// Preset configuration: `Δ = 10⁻³`, `T = 20`, `m = 5`, `n = 20`,
    /// `φ = |x|`.
    pub fn config(self) -> ExperimentConfig {
        let mut cfg =
            ExperimentConfig::preset("example41", self.delay()).expect("built-in preset is valid");
        cfg.simulation.seed = self.default_seed();
        cfg
    }
}

pub fn run_reproduce(figure: Figure, overrides: &Overrides) -> Result<RunOutcome, CliError> {
    let mut cfg = figure.config();
    overrides.apply(&mut cfg);
    run_with_columns(&cfg, figure.name(), figure.columns())
}

pub fn run_delay_bound(cfg: &ExperimentConfig) -> Result<DelayBound, CliError> {
    let [b1, b2, b3, b4, varpi] = cfg.delay_bound_constants().map_err(|e| cfg.error(e))?;
    Ok(delay_bound(
        b1,
        b2,
        b3,
        b4,
        varpi,
        cfg.model.vol.sigma_upper(),
    )?)
}

/// One checker's outcome; a checker that could not run records its error.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub report: Option<CheckReport>,
    pub error: Option<String>,
}

impl CheckOutcome {
    pub fn satisfied(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.satisfied)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub checks: Vec<CheckOutcome>,
    /// The moment-exponent condition for `(moment_p, q1, q2, q)`.
    pub moment_exponent_condition: Option<bool>,
}

impl CheckSummary {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.satisfied()).count()
    }
}

/// Runs all four assumption checks. A failure in one never prevents the
/// others from running.
pub fn run_check(cfg: &ExperimentConfig) -> CheckSummary {
    let spec = cfg.lyapunov_spec();
    let (model, grid, tol) = (&cfg.model, &cfg.grid, cfg.tolerance);
    let with_spec = |f: &dyn Fn(
        &gsdde_core::LyapunovSpec,
    ) -> Result<CheckReport, StabilityError>| {
        match &spec {
            Ok(s) => f(s).map_err(|e| e.to_string()),
            Err(e) => Err(format!("config: {e}")),
        }
    };
    let growth = match model.growth {
        Some(g) => {
            check_polynomial_growth(model, g.k, g.q1, g.q2, grid, tol).map_err(|e| e.to_string())
        }
        None => Err("config: missing required key(s): K, q1, q2".to_string()),
    };
    let results = [
        ("polynomial_growth", growth),
        (
            "khasminskii",
            with_spec(&|s| check_khasminskii(s, model, grid, tol)),
        ),
        (
            "delay_lipschitz",
            with_spec(&|s| check_delay_lipschitz(model, s.varpi, grid, tol)),
        ),
        (
            "stability_assumption",
            with_spec(&|s| check_stability_assumption(s, model, grid, tol)),
        ),
    ];
    let checks = results
        .into_iter()
        .map(|(name, r)| match r {
            Ok(report) => CheckOutcome {
                name,
                report: Some(report),
                error: None,
            },
            Err(error) => CheckOutcome {
                name,
                report: None,
                error: Some(error),
            },
        })
        .collect();
    CheckSummary {
        checks,
        moment_exponent_condition: spec
            .ok()
            .map(|s| moment_exponent_condition(s.p, s.q1, s.q2, s.q)),
    }
}
