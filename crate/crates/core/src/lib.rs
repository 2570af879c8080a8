//! Simulation and verification toolkit for scalar stochastic delay equations
//! driven by a G-Brownian motion.
//!
//! The pipeline is: build a [`model::GsddeModel`], validate it on a
//! [`scenario::TimeGrid`], generate a [`scenario::ScenarioEnsemble`] of
//! constant-volatility Gaussian increments, integrate every path with
//! [`integrator::integrate_ensemble`] and reduce the paths with the
//! φ-max-mean estimators of [`sublinear`]. The [`stability`] module provides
//! the closed-form constants and grid checks of the stability assumptions.

pub mod exprlang;
pub mod integrator;
pub mod kv;
pub mod model;
pub mod registry;
pub mod scenario;
pub mod stability;
pub mod sublinear;

pub use exprlang::{Bindings, EvalError, Expr, ParseError, Var};
pub use integrator::{integrate_ensemble, integrate_path, IntegrateError, Path, PathEnsemble};
pub use kv::{KvError, KvFile};
pub use model::{
    validate_model, DelaySpec, GrowthConstants, GsddeModel, InitialHistory, ModelError,
    ValidatedModel, VolatilityBounds,
};
pub use scenario::{
    build_volatility_grid, generate_ensemble, ScenarioEnsemble, ScenarioError, TimeGrid,
    VolatilityGrid,
};
pub use stability::{CheckGrid, CheckReport, LyapunovSpec, StabilityError};
pub use sublinear::{
    estimate_series, lower_expectation, upper_expectation, EstimateError, EstimateSeries,
    Functional, SampleArray,
};
