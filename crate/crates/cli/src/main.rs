use std::process::ExitCode;

use clap::Parser;
use gsdde_cli::args::{Cli, Command};
use gsdde_cli::config::{ExperimentConfig, OutputFormat};
use gsdde_cli::error::{exit, CliError};
use gsdde_cli::output::write_file;
use gsdde_cli::runner::{run_check, run_delay_bound, run_reproduce, run_simulate, RunOutcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_outcome(outcome: &RunOutcome) {
    let sim = &outcome.simulation;
    let s = &sim.series;
    let last = s.len() - 1;
    if sim.steps_adjusted {
        eprintln!(
            "note: steps raised to {} so the delay is a whole number of steps",
            sim.grid.steps()
        );
    }
    println!(
        "{}: {} on [0, {}]",
        outcome.name,
        s.functional,
        sim.grid.horizon()
    );
    println!(
        "  terminal estimates: upper {:.6e}, lower {:.6e}",
        s.upper[last], s.lower[last]
    );
    println!(
        "  exploded paths: {} of {}",
        sim.exploded_paths(),
        sim.total_paths()
    );
    let v = &outcome.verdict;
    println!(
        "  verdict: {:?} (tail upper {:.4e}, tail lower {:.4e}, initial upper {:.4e})",
        v.verdict, v.tail_upper, v.tail_lower, v.initial_upper
    );
    println!(
        "  thresholds (heuristic): window_fraction {}, stable_ratio {}, unstable_floor {}",
        v.thresholds.window_fraction, v.thresholds.stable_ratio, v.thresholds.unstable_floor
    );
    for path in &outcome.written {
        println!("  wrote {}", path.display());
    }
    println!("  wall time: {:.2?}", sim.elapsed);
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate { config, flags } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            flags.overrides().apply(&mut cfg);
            let name = config
                .file_stem()
                .map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned());
            print_outcome(&run_simulate(&cfg, &name)?);
            Ok(exit::SUCCESS)
        }
        Command::Reproduce { figure, flags } => {
            print_outcome(&run_reproduce(figure, &flags.overrides())?);
            Ok(exit::SUCCESS)
        }
        Command::DelayBound { config, format } => {
            let cfg = ExperimentConfig::load(&config)?;
            let bound = run_delay_bound(&cfg)?;
            match format.unwrap_or(cfg.output.format) {
                OutputFormat::Json => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&bound).expect("serializes")
                    );
                }
                OutputFormat::Csv => {
                    println!("sqrt(4 b1 b2 / 3 w^2)        = {}", bound.drift_term);
                    println!("sqrt(4 b1 b3 / 3 w^2 s^2)    = {}", bound.qv_term);
                    println!("4 b1 b4 / 3 w^2 s^2          = {}", bound.noise_term);
                    println!("admissible delay tau_max     = {}", bound.bound);
                }
            }
            Ok(exit::SUCCESS)
        }
        Command::Check {
            config,
            format,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_check(&cfg);
            let json = serde_json::to_string_pretty(&summary).expect("serializes");
            match format.unwrap_or(cfg.output.format) {
                OutputFormat::Json => println!("{json}"),
                OutputFormat::Csv => {
                    for c in &summary.checks {
                        match (&c.report, &c.error) {
                            (Some(r), _) => println!("{r}"),
                            (None, Some(e)) => println!("{}: ERROR {e}", c.name),
                            (None, None) => unreachable!("outcome has a report or an error"),
                        }
                    }
                    if let Some(ok) = summary.moment_exponent_condition {
                        println!(
                            "moment exponent condition (p >= 2, max(p+q1-1, p+q2-1) <= q): {}",
                            if ok { "holds" } else { "fails" }
                        );
                    }
                }
            }
            if let Some(dir) = out {
                write_file(&dir.join("checks.json"), json.as_bytes())?;
            }
            let failed = summary.failures();
            if failed > 0 {
                let err = CliError::ChecksFailed(failed, summary.checks.len());
                eprintln!("{err}");
                return Ok(err.exit_code());
            }
            Ok(exit::SUCCESS)
        }
    }
}
