//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::OutputFormat;
use crate::runner::{Figure, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "gsdde",
    version,
    about = "Simulate and check stochastic delay equations driven by G-Brownian motion"
)]
pub struct Cli {
    /// Worker threads for path integration and grid checks.
    #[arg(long, env = "GSDDE_THREADS", global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an ensemble and write upper/lower expectation series.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Print the admissible delay bound and its three terms.
    DelayBound {
        config: PathBuf,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Run the four assumption checks on a grid; exit code 1 if any fails.
    Check {
        config: PathBuf,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Also write `checks.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate one of the three delay-regime data sets.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Volatility levels.
    #[arg(long)]
    pub m: Option<usize>,
    /// Sample groups.
    #[arg(long)]
    pub n: Option<usize>,
    /// Time steps `N`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Horizon `T`.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

impl RunFlags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            levels: self.m,
            samples: self.n,
            steps: self.steps,
            horizon: self.horizon,
            out: self.out.clone(),
            format: self.format,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_reproduce_flags() {
        let cli = Cli::parse_from(["gsdde", "reproduce", "fig41", "--seed", "42", "--out", "d"]);
        match cli.command {
            Command::Reproduce { figure, flags } => {
                assert_eq!(figure, Figure::Fig41);
                assert_eq!(flags.seed, Some(42));
                assert_eq!(flags.out, Some(PathBuf::from("d")));
            }
            other => panic!("{other:?}"),
        }
    }
}
