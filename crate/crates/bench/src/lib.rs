//! Shared fixtures for the benchmarks.

use gsdde_core::registry;
use gsdde_core::scenario::{build_volatility_grid, generate_ensemble, ScenarioEnsemble, TimeGrid};
use gsdde_core::{validate_model, ValidatedModel};

/// The cubic delay preset on `[0, horizon]` with `steps` steps and its
/// `m × n` scenario ensemble.
pub fn cubic_fixture(
    delay: f64,
    horizon: f64,
    steps: usize,
    m: usize,
    n: usize,
) -> (ValidatedModel, ScenarioEnsemble) {
    let (grid, _) = TimeGrid::aligned_to_delay(horizon, steps, delay).expect("valid grid");
    let (model, history) = registry::example41(delay);
    let model = validate_model(model, history, &grid).expect("preset is valid");
    let vol = build_volatility_grid(&model.vol, m).expect("valid levels");
    let scenario = generate_ensemble(&vol, n, &grid, 42).expect("valid ensemble");
    (model, scenario)
}
