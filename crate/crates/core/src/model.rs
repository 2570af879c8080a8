//! Scalar G-SDDE instances
//!
//! ```text
//! dX(t) = f(X(t), X(t-δ(t)), t) dt + g(X(t), X(t-δ(t)), t) d<B>(t) + h(t) dB(t)
//! X(u)  = η(u),  u ∈ [-τ, 0]
//! ```
//!
//! with `B` a G-Brownian motion whose variance is uncertain in
//! `[σ_lower², σ_upper²]`.

use std::collections::BTreeSet;
use std::ops::Deref;

use thiserror::Error;

use crate::exprlang::{Bindings, EvalError, Expr, Var};
use crate::kv::{KvError, KvFile};
use crate::scenario::TimeGrid;

/// Tolerance on the finite-difference check of `dδ/dt ≤ δ̄`.
pub const DELAY_RATE_TOLERANCE: f64 = 1e-6;

/// Keys understood by [`GsddeModel::from_kv`].
pub const MODEL_KEYS: &[&str] = &[
    "f",
    "g",
    "h",
    "eta",
    "delta",
    "tau",
    "delta_dot_bound",
    "sigma_lower_sq",
    "sigma_upper_sq",
    "K",
    "q1",
    "q2",
];

/// Variance bounds of the G-Brownian motion, `0 < σ_lower² ≤ σ_upper² < ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityBounds {
    pub sigma_lower_sq: f64,
    pub sigma_upper_sq: f64,
}

impl VolatilityBounds {
    pub fn new(sigma_lower_sq: f64, sigma_upper_sq: f64) -> Result<Self, ModelError> {
        let vol = VolatilityBounds {
            sigma_lower_sq,
            sigma_upper_sq,
        };
        vol.check()?;
        Ok(vol)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let (lo, hi) = (self.sigma_lower_sq, self.sigma_upper_sq);
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(ModelError::InvalidVolatility { lo, hi });
        }
        if lo > hi {
            return Err(ModelError::VolatilityOrderViolation { lo, hi });
        }
        Ok(())
    }

    pub fn sigma_lower(&self) -> f64 {
        self.sigma_lower_sq.sqrt()
    }

    pub fn sigma_upper(&self) -> f64 {
        self.sigma_upper_sq.sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lower_sq == self.sigma_upper_sq
    }
}

/// Variable delay `δ(t) ∈ [0, τ]` with declared rate bound `δ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    pub tau: f64,
    pub delta: Expr,
    pub delta_dot_bound: f64,
}

impl DelaySpec {
    /// Constant delay `δ(t) = τ`.
    pub fn constant(tau: f64, delta_dot_bound: f64) -> Self {
        DelaySpec {
            tau,
            delta: Expr::Num(tau),
            delta_dot_bound,
        }
    }

    pub fn delay_at(&self, t: f64) -> Result<f64, EvalError> {
        self.delta.eval(&Bindings::new().t(t))
    }
}

/// Constants of the polynomial growth bound on `f`, `g` and `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    pub k: f64,
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsddeModel {
    /// `f(x, y, t)`
    pub drift: Expr,
    /// `g(x, y, t)`, coefficient of the quadratic-variation increment.
    pub qv_coeff: Expr,
    /// `h(t)`, deterministic.
    pub noise: Expr,
    pub delay: DelaySpec,
    pub vol: VolatilityBounds,
    pub growth: Option<GrowthConstants>,
}

impl GsddeModel {
    pub fn drift_at(&self, x: f64, y: f64, t: f64) -> Result<f64, EvalError> {
        self.drift.eval(&Bindings::new().x(x).y(y).t(t))
    }

    pub fn qv_coeff_at(&self, x: f64, y: f64, t: f64) -> Result<f64, EvalError> {
        self.qv_coeff.eval(&Bindings::new().x(x).y(y).t(t))
    }

    pub fn noise_at(&self, t: f64) -> Result<f64, EvalError> {
        self.noise.eval(&Bindings::new().t(t))
    }

    pub fn delay_at(&self, t: f64) -> Result<f64, EvalError> {
        self.delay.delay_at(t)
    }

    pub fn qv_is_zero(&self) -> bool {
        self.qv_coeff.is_identically_zero()
    }

    /// Reads a model and its initial history from a flat key-value file.
    ///
    /// `g` defaults to `0`; `K`, `q1`, `q2` are optional but must appear
    /// together.
    pub fn from_kv(kv: &KvFile) -> Result<(GsddeModel, InitialHistory), KvError> {
        let missing: Vec<String> = [
            "f",
            "h",
            "eta",
            "delta",
            "tau",
            "delta_dot_bound",
            "sigma_lower_sq",
            "sigma_upper_sq",
        ]
        .iter()
        .filter(|k| !kv.contains(k))
        .map(|k| k.to_string())
        .collect();
        if !missing.is_empty() {
            return Err(KvError::Missing(missing));
        }
        let expr = |key: &str| -> Result<Option<Expr>, KvError> {
            kv.get(key)
                .map(|e| Expr::parse(&e.value).map_err(|err| kv.invalid(key, err.to_string())))
                .transpose()
        };
        let num = |key: &str| -> Result<f64, KvError> {
            kv.parsed::<f64>(key)?
                .ok_or_else(|| KvError::Missing(vec![key.to_string()]))
        };
        let growth = match (kv.contains("K"), kv.contains("q1"), kv.contains("q2")) {
            (false, false, false) => None,
            (true, true, true) => Some(GrowthConstants {
                k: num("K")?,
                q1: num("q1")?,
                q2: num("q2")?,
            }),
            _ => {
                let absent = ["K", "q1", "q2"]
                    .iter()
                    .filter(|k| !kv.contains(k))
                    .map(|k| k.to_string())
                    .collect();
                return Err(KvError::Missing(absent));
            }
        };
        let model = GsddeModel {
            drift: expr("f")?.expect("checked above"),
            qv_coeff: expr("g")?.unwrap_or(Expr::Num(0.0)),
            noise: expr("h")?.expect("checked above"),
            delay: DelaySpec {
                tau: num("tau")?,
                delta: expr("delta")?.expect("checked above"),
                delta_dot_bound: num("delta_dot_bound")?,
            },
            vol: VolatilityBounds {
                sigma_lower_sq: num("sigma_lower_sq")?,
                sigma_upper_sq: num("sigma_upper_sq")?,
            },
            growth,
        };
        let history = InitialHistory {
            eta: expr("eta")?.expect("checked above"),
        };
        Ok((model, history))
    }
}

/// Deterministic initial segment `η` on `[-τ, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialHistory {
    pub eta: Expr,
}

impl InitialHistory {
    pub fn constant(value: f64) -> Self {
        InitialHistory {
            eta: Expr::Num(value),
        }
    }

    pub fn value(&self, u: f64) -> Result<f64, EvalError> {
        self.eta.eval(&Bindings::new().u(u))
    }

    /// `η(s)` on `[-τ, 0]`, extended by `η(-τ)` on `[-2τ, -τ)`.
    pub fn extended_value(&self, s: f64, tau: f64) -> Result<f64, EvalError> {
        self.value(s.max(-tau))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("delay horizon tau must be positive and finite, got {0}")]
    NonPositiveTau(f64),
    #[error("volatility bounds must satisfy 0 < sigma_lower_sq and both finite, got [{lo}, {hi}]")]
    InvalidVolatility { lo: f64, hi: f64 },
    #[error("sigma_lower_sq {lo} exceeds sigma_upper_sq {hi}")]
    VolatilityOrderViolation { lo: f64, hi: f64 },
    #[error("delay delta({t}) = {value} lies outside [0, tau = {tau}]")]
    DelayOutOfRange { t: f64, value: f64, tau: f64 },
    #[error("delay rate bound must be < 1, got {0}")]
    DeltaDotBoundNotLessThanOne(f64),
    #[error("finite-difference delay rate {rate} at t = {t} exceeds declared bound {bound}")]
    DelayRateExceedsBound { t: f64, rate: f64, bound: f64 },
    #[error("noise coefficient h must depend on t only, but references `{0}`")]
    NonDeterministicH(Var),
    #[error("`{field}` may not reference variable `{var}`")]
    UnsupportedVariable { field: &'static str, var: Var },
    #[error("growth constants invalid: need K > 0 and q1, q2 >= 0")]
    InvalidGrowthConstants,
    #[error("initial history is not finite at u = {u}")]
    HistoryNotFinite { u: f64 },
    #[error("evaluating {field}: {source}")]
    Eval {
        field: &'static str,
        #[source]
        source: EvalError,
    },
}

/// A model whose invariants were verified on a specific time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    model: GsddeModel,
    history: InitialHistory,
    grid: TimeGrid,
    qv_is_zero: bool,
}

impl ValidatedModel {
    pub fn model(&self) -> &GsddeModel {
        &self.model
    }

    pub fn history(&self) -> &InitialHistory {
        &self.history
    }

    /// Grid the delay invariants were checked on.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `g ≡ 0`, which lets `β₃` take the infinite sentinel.
    pub fn qv_is_zero(&self) -> bool {
        self.qv_is_zero
    }

    pub fn into_parts(self) -> (GsddeModel, InitialHistory) {
        (self.model, self.history)
    }
}

impl Deref for ValidatedModel {
    type Target = GsddeModel;

    fn deref(&self) -> &GsddeModel {
        &self.model
    }
}

fn allow_vars(
    field: &'static str,
    expr: &Expr,
    allowed: &[Var],
) -> Result<BTreeSet<Var>, ModelError> {
    let vars = expr.variables();
    match vars.iter().find(|v| !allowed.contains(v)) {
        Some(&var) => Err(ModelError::UnsupportedVariable { field, var }),
        None => Ok(vars),
    }
}

/// Checks every model invariant; delay range and rate are sampled on `grid`.
pub fn validate_model(
    model: GsddeModel,
    history: InitialHistory,
    grid: &TimeGrid,
) -> Result<ValidatedModel, ModelError> {
    let tau = model.delay.tau;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ModelError::NonPositiveTau(tau));
    }
    model.vol.check()?;
    let bound = model.delay.delta_dot_bound;
    if bound.is_nan() || bound >= 1.0 {
        return Err(ModelError::DeltaDotBoundNotLessThanOne(bound));
    }
    if let Some(g) = model.growth {
        if !(g.k > 0.0 && g.q1 >= 0.0 && g.q2 >= 0.0) {
            return Err(ModelError::InvalidGrowthConstants);
        }
    }

    if let Some(&var) = model
        .noise
        .variables()
        .iter()
        .find(|v| matches!(v, Var::X | Var::Y))
    {
        return Err(ModelError::NonDeterministicH(var));
    }
    allow_vars("h", &model.noise, &[Var::T])?;
    allow_vars("f", &model.drift, &[Var::X, Var::Y, Var::T])?;
    allow_vars("g", &model.qv_coeff, &[Var::X, Var::Y, Var::T])?;
    allow_vars("delta", &model.delay.delta, &[Var::T])?;
    allow_vars("eta", &history.eta, &[Var::U])?;

    let dt = grid.dt();
    let delay_at = |t: f64| {
        model.delay_at(t).map_err(|source| ModelError::Eval {
            field: "delta",
            source,
        })
    };
    let mut prev = delay_at(0.0)?;
    for i in 0..=grid.steps() {
        let t = grid.time(i);
        let value = if i == 0 { prev } else { delay_at(t)? };
        if !(0.0..=tau).contains(&value) {
            return Err(ModelError::DelayOutOfRange { t, value, tau });
        }
        if i > 0 {
            let rate = (value - prev) / dt;
            if rate > bound + DELAY_RATE_TOLERANCE {
                return Err(ModelError::DelayRateExceedsBound { t, rate, bound });
            }
        }
        prev = value;
    }

    let history_points = (tau / dt).ceil() as usize;
    let samples = (0..=history_points)
        .map(|k| (-(k as f64) * dt).max(-tau))
        .chain(std::iter::once(-tau));
    for u in samples {
        match history.value(u) {
            Ok(v) if v.is_finite() => {}
            _ => return Err(ModelError::HistoryNotFinite { u }),
        }
    }

    let qv_is_zero = model.qv_is_zero();
    Ok(ValidatedModel {
        model,
        history,
        grid: *grid,
        qv_is_zero,
    })
}
