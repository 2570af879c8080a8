use std::io;
use std::path::PathBuf;

use gsdde_core::integrator::IntegrateError;
use gsdde_core::kv::KvError;
use gsdde_core::model::ModelError;
use gsdde_core::scenario::ScenarioError;
use gsdde_core::stability::StabilityError;
use gsdde_core::sublinear::EstimateError;
use thiserror::Error;

use crate::verdict::VerdictError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: KvError,
    },
    #[error("cannot read {}: {source}", path.display())]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid simulation setup: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("stability: {0}")]
    Stability(#[from] StabilityError),
    #[error("integration failed: {0}")]
    Integrate(IntegrateError),
    #[error(
        "all {0} paths exploded; the explicit scheme overflowed, \
         try more `steps` (a smaller step size) or a shorter `horizon`"
    )]
    AllPathsExploded(usize),
    #[error("estimation failed: {0}")]
    Estimate(#[from] EstimateError),
    #[error("verdict: {0}")]
    Verdict(#[from] VerdictError),
    #[error("writing {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0} of {1} assumption checks failed")]
    ChecksFailed(usize, usize),
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::AllPathsExploded(n) => CliError::AllPathsExploded(n),
            e => CliError::Integrate(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::ReadConfig { .. } | CliError::Model(_) => {
                exit::CONFIG
            }
            CliError::Scenario(_) => exit::CONFIG,
            CliError::Stability(StabilityError::Eval { .. }) => exit::RUNTIME,
            CliError::Stability(_) => exit::CONFIG,
            CliError::Integrate(IntegrateError::MisalignedDelay { .. })
            | CliError::Integrate(IntegrateError::LookbackBeforeHistory { .. }) => exit::CONFIG,
            CliError::Integrate(_)
            | CliError::AllPathsExploded(_)
            | CliError::Estimate(_)
            | CliError::Write { .. } => exit::RUNTIME,
            CliError::Verdict(_) => exit::CONFIG,
            CliError::ChecksFailed(..) => exit::CHECK_FAILED,
        }
    }
}
