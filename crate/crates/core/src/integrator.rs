//! Explicit Euler–Maruyama integration of scenario paths.
//!
//! One step from `t_{i-1}` to `t_i` is
//!
//! ```text
//! X_i = X_{i-1} + f(X_{i-1}, Y_{i-1}, t_{i-1}) Δ
//!               + g(X_{i-1}, Y_{i-1}, t_{i-1}) (σ_k)² Δ
//!               + h(t_{i-1}) ζ_i
//! ```
//!
//! where `Y_{i-1}` is the delayed state `X(t_{i-1} - δ(t_{i-1}))` and the
//! quadratic-variation increment of a constant-volatility scenario is the
//! deterministic `(σ_k)² Δ`.

use rayon::prelude::*;
use thiserror::Error;

use crate::exprlang::{Bindings, EvalError};
use crate::model::{InitialHistory, ValidatedModel};
use crate::scenario::{ScenarioEnsemble, TimeGrid, ALIGNMENT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("tau = {tau} is not a whole number of steps of size {dt}")]
    MisalignedDelay { tau: f64, dt: f64 },
    #[error("lookback time {s} precedes the history start -{tau}")]
    LookbackBeforeHistory { s: f64, tau: f64 },
    #[error("expected {expected} increments, got {found}")]
    IncrementCount { expected: usize, found: usize },
    #[error("ensemble time grid does not match the model's validation grid")]
    GridMismatch,
    #[error("all {0} paths exploded")]
    AllPathsExploded(usize),
    #[error("evaluating {what}: {source}")]
    Eval {
        what: &'static str,
        #[source]
        source: EvalError,
    },
}

/// How the delayed state of one step is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookback {
    /// Stored value at this grid index (negative indices are history).
    Grid(isize),
    /// `η(s)` evaluated directly for an off-grid `s ∈ [-τ, 0]`.
    History(f64),
    /// `(1 - w) X[lo] + w X[lo + 1]`.
    Interpolate { lo: isize, weight: f64 },
}

impl Lookback {
    /// Reads the delayed state from `values`, whose element 0 is grid index
    /// `-history_steps`.
    pub fn read(&self, values: &[f64], history_steps: usize) -> f64 {
        let at = |i: isize| values[(i + history_steps as isize) as usize];
        match *self {
            Lookback::Grid(i) => at(i),
            Lookback::History(v) => v,
            Lookback::Interpolate { lo, weight } => (1.0 - weight) * at(lo) + weight * at(lo + 1),
        }
    }

    pub fn interpolates(&self) -> bool {
        matches!(self, Lookback::Interpolate { .. })
    }
}

/// Resolves `X(t_i - d)` for the grid time `t_i = index Δ`.
///
/// Delays within [`ALIGNMENT_TOLERANCE`] of a whole number of steps read the
/// stored grid value; otherwise off-grid points in `[-τ, 0]` use `η` and
/// points in `(0, t_i)` interpolate linearly between neighbours.
pub fn resolve_lookback(
    grid: &TimeGrid,
    history: &InitialHistory,
    tau: f64,
    index: usize,
    delay: f64,
) -> Result<Lookback, IntegrateError> {
    let dt = grid.dt();
    let t = grid.time(index);
    let s = t - delay;
    let tol = ALIGNMENT_TOLERANCE * dt * (tau / dt).max(1.0);
    if s < -tau - tol {
        return Err(IntegrateError::LookbackBeforeHistory { s, tau });
    }
    if let Some(r) = grid.steps_for(delay) {
        return Ok(Lookback::Grid(index as isize - r as isize));
    }
    if s <= 0.0 {
        let value = history
            .value(s.max(-tau))
            .map_err(|source| IntegrateError::Eval {
                what: "initial history",
                source,
            })?;
        return Ok(Lookback::History(value));
    }
    let pos = s / dt;
    let lo = pos.floor();
    Ok(Lookback::Interpolate {
        lo: lo as isize,
        weight: pos - lo,
    })
}

/// `X(t - δ(t))` for the grid time `t_index` given the path computed so far.
pub fn delayed_state(
    values: &[f64],
    history: &InitialHistory,
    grid: &TimeGrid,
    tau: f64,
    t_index: usize,
    delay: f64,
) -> Result<f64, IntegrateError> {
    let history_steps = history_steps(grid, tau)?;
    let lookback = resolve_lookback(grid, history, tau, t_index, delay)?;
    Ok(lookback.read(values, history_steps))
}

fn history_steps(grid: &TimeGrid, tau: f64) -> Result<usize, IntegrateError> {
    grid.steps_for(tau)
        .ok_or(IntegrateError::MisalignedDelay { tau, dt: grid.dt() })
}

/// Time-only quantities of every step, shared by all paths of an ensemble.
#[derive(Debug, Clone)]
struct StepPlan {
    history_steps: usize,
    history: Vec<f64>,
    /// Per step `i = 1..=N`: `(t_{i-1}, h(t_{i-1}), lookback)`.
    steps: Vec<(f64, f64, Lookback)>,
    interpolations: u64,
}

impl StepPlan {
    fn build(model: &ValidatedModel, grid: &TimeGrid) -> Result<Self, IntegrateError> {
        let tau = model.delay.tau;
        let history_steps = history_steps(grid, tau)?;
        let dt = grid.dt();
        let history = (0..=history_steps)
            .map(|k| {
                let u = (k as f64 - history_steps as f64) * dt;
                model
                    .history()
                    .value(u.max(-tau))
                    .map_err(|source| IntegrateError::Eval {
                        what: "initial history",
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut interpolations = 0;
        let steps = (0..grid.steps())
            .map(|i| {
                let t = grid.time(i);
                let eval = |what, r: Result<f64, EvalError>| {
                    r.map_err(|source| IntegrateError::Eval { what, source })
                };
                let h = eval("h", model.noise_at(t))?;
                let delay = eval("delta", model.delay_at(t))?;
                let lookback = resolve_lookback(grid, model.history(), tau, i, delay)?;
                interpolations += u64::from(lookback.interpolates());
                Ok((t, h, lookback))
            })
            .collect::<Result<Vec<_>, IntegrateError>>()?;
        Ok(StepPlan {
            history_steps,
            history,
            steps,
            interpolations,
        })
    }
}

/// One scenario path on the extended grid `-τ/Δ ..= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub level: usize,
    pub sample: usize,
    history_steps: usize,
    values: Vec<f64>,
    exploded_at: Option<usize>,
    interpolations: u64,
}

impl Path {
    /// Values from `t = -τ` onward; shorter than the grid if the path exploded.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn history_steps(&self) -> usize {
        self.history_steps
    }

    /// `X(t_i)` for `i ≥ -history_steps`, `None` past an explosion.
    pub fn at(&self, i: isize) -> Option<f64> {
        let idx = i + self.history_steps as isize;
        usize::try_from(idx)
            .ok()
            .and_then(|idx| self.values.get(idx).copied())
    }

    /// First time index whose value was not finite.
    pub fn exploded_at(&self) -> Option<usize> {
        self.exploded_at
    }

    pub fn is_finite_at(&self, i: usize) -> bool {
        self.exploded_at.is_none_or(|e| i < e)
    }

    /// Number of steps whose lookback needed linear interpolation.
    pub fn interpolations(&self) -> u64 {
        self.interpolations
    }
}

fn run_path(
    model: &ValidatedModel,
    plan: &StepPlan,
    increments: &[f64],
    dt: f64,
    level_sigma: f64,
    (level, sample): (usize, usize),
) -> Path {
    let qv_dt = level_sigma * level_sigma * dt;
    let qv_is_zero = model.qv_is_zero();
    let mut values = Vec::with_capacity(plan.history.len() + plan.steps.len());
    values.extend_from_slice(&plan.history);
    let mut exploded_at = None;
    let mut b = Bindings::new();
    for (i, (&(t, h, lookback), &zeta)) in plan.steps.iter().zip(increments).enumerate() {
        let x = *values.last().expect("history is never empty");
        let y = lookback.read(&values, plan.history_steps);
        b = b.x(x).y(y).t(t);
        let drift = model.drift.eval(&b);
        let qv = if qv_is_zero {
            Ok(0.0)
        } else {
            model.qv_coeff.eval(&b)
        };
        let next = match (drift, qv) {
            (Ok(f), Ok(g)) => x + f * dt + g * qv_dt + h * zeta,
            _ => f64::NAN,
        };
        if !next.is_finite() {
            exploded_at = Some(i + 1);
            break;
        }
        values.push(next);
    }
    Path {
        level,
        sample,
        history_steps: plan.history_steps,
        values,
        exploded_at,
        interpolations: if exploded_at.is_some() {
            plan.steps[..exploded_at.unwrap_or(0)]
                .iter()
                .filter(|s| s.2.interpolates())
                .count() as u64
        } else {
            plan.interpolations
        },
    }
}

/// Integrates a single path driven by `increments` (`ζ_1..ζ_N`) at volatility
/// level `level_sigma`.
pub fn integrate_path(
    model: &ValidatedModel,
    increments: &[f64],
    grid: &TimeGrid,
    level_sigma: f64,
    index: (usize, usize),
) -> Result<Path, IntegrateError> {
    if increments.len() != grid.steps() {
        return Err(IntegrateError::IncrementCount {
            expected: grid.steps(),
            found: increments.len(),
        });
    }
    let plan = StepPlan::build(model, grid)?;
    Ok(run_path(
        model,
        &plan,
        increments,
        grid.dt(),
        level_sigma,
        index,
    ))
}

/// All `m × n` paths of a scenario ensemble, stored level-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    levels: usize,
    samples: usize,
    time: TimeGrid,
    paths: Vec<Path>,
}

impl PathEnsemble {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn path(&self, k: usize, j: usize) -> &Path {
        &self.paths[k * self.samples + j]
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn exploded_count(&self) -> usize {
        self.paths
            .iter()
            .filter(|p| p.exploded_at.is_some())
            .count()
    }

    pub fn interpolations(&self) -> u64 {
        self.paths.iter().map(|p| p.interpolations).sum()
    }
}

/// Integrates every `(k, j)` scenario. Exploded paths are kept and flagged;
/// the call fails only when every path explodes.
pub fn integrate_ensemble(
    model: &ValidatedModel,
    scenario: &ScenarioEnsemble,
) -> Result<PathEnsemble, IntegrateError> {
    let grid = scenario.time();
    let plan = StepPlan::build(model, grid)?;
    let (m, n, _) = scenario.shape();
    let levels = scenario.vol_grid().levels();
    let dt = grid.dt();
    let paths: Vec<Path> = (0..m * n)
        .into_par_iter()
        .map(|p| {
            let (k, j) = (p / n, p % n);
            run_path(
                model,
                &plan,
                scenario.path_increments(k, j),
                dt,
                levels[k],
                (k, j),
            )
        })
        .collect();
    let ensemble = PathEnsemble {
        levels: m,
        samples: n,
        time: *grid,
        paths,
    };
    if ensemble.exploded_count() == m * n {
        return Err(IntegrateError::AllPathsExploded(m * n));
    }
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::Expr;
    use crate::model::{validate_model, DelaySpec, GsddeModel, VolatilityBounds};
    use crate::registry;
    use crate::scenario::{build_volatility_grid, generate_ensemble};

    fn linear_model(
        f: &str,
        g: &str,
        h: &str,
        eta: &str,
        tau: f64,
        delta: &str,
    ) -> (GsddeModel, InitialHistory) {
        (
            GsddeModel {
                drift: Expr::parse(f).unwrap(),
                qv_coeff: Expr::parse(g).unwrap(),
                noise: Expr::parse(h).unwrap(),
                delay: DelaySpec {
                    tau,
                    delta: Expr::parse(delta).unwrap(),
                    delta_dot_bound: 0.0,
                },
                vol: VolatilityBounds::new(1.0, 1.0).unwrap(),
                growth: None,
            },
            InitialHistory {
                eta: Expr::parse(eta).unwrap(),
            },
        )
    }

    #[test]
    fn zero_dynamics_keep_constant() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let (m, h) = linear_model("0", "0", "0", "3.5", 0.05, "0.05");
        let v = validate_model(m, h, &grid).unwrap();
        let path = integrate_path(&v, &[0.3; 100], &grid, 1.0, (0, 0)).unwrap();
        assert!(path.values().iter().all(|&x| x == 3.5));
        assert_eq!(path.values().len(), 5 + 1 + 100);
    }

    #[test]
    fn single_step_of_example41() {
        // η ≡ 1, Δ = 0.001, ζ_1 = 0, δ = 0 for the step:
        // 1 + (-1 - 1) 0.001 + 0.5 * 0 = 0.998.
        let grid = TimeGrid::new(0.001, 1).unwrap();
        let (mut model, _) = registry::example41(0.001);
        model.delay.delta = Expr::Num(0.0);
        let v = validate_model(model, InitialHistory::constant(1.0), &grid).unwrap();
        let path = integrate_path(&v, &[0.0], &grid, 1.0, (0, 0)).unwrap();
        assert_eq!(path.at(1), Some(0.998));
    }

    #[test]
    fn explicit_euler_decay_recursion() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let dt = grid.dt();
        let (m, h) = linear_model("-x", "0", "0", "1", dt, "0");
        let v = validate_model(m, h, &grid).unwrap();
        let path = integrate_path(&v, &vec![0.0; 1000], &grid, 1.0, (0, 0)).unwrap();
        for i in 0..=1000 {
            let exact = (1.0 - dt).powi(i);
            assert!((path.at(i as isize).unwrap() - exact).abs() <= 1e-14);
        }
    }

    #[test]
    fn qv_term_uses_level_variance() {
        // f = 0, g = 1, h = 0: X_N = X_0 + N σ² Δ.
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let (mut m, h) = linear_model("0", "1", "0", "0", 0.1, "0");
        m.vol = VolatilityBounds::new(0.25, 1.0).unwrap();
        let v = validate_model(m, h, &grid).unwrap();
        let path = integrate_path(&v, &[0.0; 10], &grid, 0.5, (0, 0)).unwrap();
        assert!((path.at(10).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_aligned_lookback_reads_stored_value() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let history = InitialHistory::constant(0.0);
        let values: Vec<f64> = (0..=110).map(f64::from).collect();
        // history_steps = 10, so values[k] is grid index k - 10.
        let y = delayed_state(&values, &history, &grid, 0.1, 50, 0.03).unwrap();
        assert_eq!(y, values[10 + 47]);
        let y = delayed_state(&values, &history, &grid, 0.1, 50, 0.0).unwrap();
        assert_eq!(y, values[10 + 50]);
    }

    #[test]
    fn off_grid_lookback_into_history_uses_eta() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let history = InitialHistory {
            eta: Expr::parse("2 + sin(u)").unwrap(),
        };
        // Stored history samples, as the integrator lays them out.
        let values: Vec<f64> = (0..=10)
            .map(|k| history.value((k as f64 - 10.0) * 0.001).unwrap())
            .collect();
        let y = delayed_state(&values, &history, &grid, 0.01, 0, 0.0055).unwrap();
        assert_eq!(y, 2.0 + (-0.0055f64).sin());
        let y = delayed_state(&values, &history, &grid, 0.01, 0, 0.005).unwrap();
        assert!((y - (2.0 + (-0.005f64).sin())).abs() < 1e-15);
    }

    #[test]
    fn off_grid_lookback_interpolates() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let history = InitialHistory::constant(0.0);
        let values = [0.0, 0.0, 10.0, 20.0, 30.0];
        // history_steps = 1; t_3 = 0.3, s = 0.15 between t_1 = 10 and t_2 = 20.
        let y = delayed_state(&values, &history, &grid, 0.1, 3, 0.15).unwrap();
        assert!((y - 15.0).abs() < 1e-12);
        assert!(matches!(
            delayed_state(&values, &history, &grid, 0.1, 0, 0.2),
            Err(IntegrateError::LookbackBeforeHistory { .. })
        ));
    }

    #[test]
    fn aligned_constant_delay_never_interpolates() {
        let grid = TimeGrid::new(2.0, 2000).unwrap();
        let (m, h) = registry::example41(0.08);
        let v = validate_model(m, h, &grid).unwrap();
        let vol = build_volatility_grid(&v.vol, 2).unwrap();
        let s = generate_ensemble(&vol, 3, &grid, 1).unwrap();
        let e = integrate_ensemble(&v, &s).unwrap();
        assert_eq!(e.interpolations(), 0);

        let (mut m, h) = registry::example41(0.08);
        m.delay.delta = Expr::parse("0.0405 + 0.0005*sin(t)").unwrap();
        let v = validate_model(m, h, &grid).unwrap();
        let e = integrate_ensemble(&v, &s).unwrap();
        assert!(e.interpolations() > 0);
    }

    #[test]
    fn misaligned_tau_is_rejected() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let (m, h) = registry::example41(0.0105);
        let v = validate_model(m, h, &grid).unwrap();
        assert!(matches!(
            integrate_path(&v, &vec![0.0; 1000], &grid, 1.0, (0, 0)),
            Err(IntegrateError::MisalignedDelay { .. })
        ));
    }

    #[test]
    fn explosion_is_flagged_and_truncated() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let (m, h) = linear_model("x^3", "0", "0", "10", 0.01, "0");
        let v = validate_model(m, h, &grid).unwrap();
        let path = integrate_path(&v, &[0.0; 100], &grid, 1.0, (0, 0)).unwrap();
        let at = path.exploded_at().expect("x' = x^3 from 10 blows up");
        assert_eq!(path.values().len(), path.history_steps() + at);
        assert!(path.values().iter().all(|x| x.is_finite()));
        assert!(!path.is_finite_at(at));

        let vol = build_volatility_grid(&v.vol, 1).unwrap();
        let s = generate_ensemble(&vol, 2, &grid, 3).unwrap();
        assert_eq!(
            integrate_ensemble(&v, &s).unwrap_err(),
            IntegrateError::AllPathsExploded(2)
        );
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let grid = TimeGrid::new(2.0, 2000).unwrap();
        let (m, h) = registry::example41(0.01);
        let v = validate_model(m, h, &grid).unwrap();
        let vol = build_volatility_grid(&v.vol, 5).unwrap();
        let s = generate_ensemble(&vol, 4, &grid, 42).unwrap();
        let a = integrate_ensemble(&v, &s).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| integrate_ensemble(&v, &s).unwrap());
        assert_eq!(a, b);
        let single =
            integrate_path(&v, s.path_increments(3, 2), &grid, vol.levels()[3], (3, 2)).unwrap();
        assert_eq!(a.path(3, 2), &single);
    }
}
