//! Closed-form constants and grid checks of the stability assumptions.
//!
//! A passing grid check is evidence over the sampled box, not a proof.

mod checks;
mod constants;
mod lyapunov;

use thiserror::Error;

use crate::exprlang::{EvalError, Var};

pub use checks::{
    check_delay_lipschitz, check_khasminskii, check_polynomial_growth, check_stability_assumption,
    AxisRange, CheckGrid, CheckReport, SideCondition, Witness, DEFAULT_TOLERANCE,
};
pub use constants::{
    bdg_constant, bdg_cp, delay_bound, g_generator, moment_exponent_condition, BdgConstants,
    DelayBound,
};
pub use lyapunov::{
    lyapunov_operator_lbar_u, lyapunov_operator_lu, DerivativeSteps, Derivatives, LyapunovSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("moment exponent p must be positive, got {0}")]
    NonPositiveP(f64),
    #[error("`{name}` must be positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("constant `{name}` is out of range: {value}")]
    InvalidConstant { name: &'static str, value: f64 },
    #[error("Lyapunov candidate `{field}` may depend on x and t only, found `{var}`")]
    CandidateVariable { field: &'static str, var: Var },
    #[error("beta3 = inf is only allowed when g is identically zero")]
    InfiniteBeta3WithNonzeroG,
    #[error("check grid axis {axis}: {reason}")]
    InvalidGrid {
        axis: &'static str,
        reason: &'static str,
    },
    #[error("check grid has no node with x != y")]
    NoDistinctPairs,
    #[error("evaluation failed at {at}: {source}")]
    Eval {
        at: Witness,
        #[source]
        source: EvalError,
    },
}
