//! Built-in models and Lyapunov specifications.

use crate::exprlang::Expr;
use crate::model::{DelaySpec, GrowthConstants, GsddeModel, InitialHistory, VolatilityBounds};
use crate::stability::{DerivativeSteps, LyapunovSpec};

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["example41", "linear-ou"];

fn expr(text: &str) -> Expr {
    Expr::parse(text).expect("built-in expression parses")
}

/// Cubic drift with linear delayed feedback and decaying noise:
///
/// ```text
/// dX = (-X³ - X(t-δ)) dt + 0.5 e^{-t} dB,   X(u) = 2 + sin(u),
/// ```
///
/// with variance uncertainty `[0.5, 1]` and constant delay `delay = τ`.
pub fn example41(delay: f64) -> (GsddeModel, InitialHistory) {
    let model = GsddeModel {
        drift: expr("-x^3 - y"),
        qv_coeff: Expr::Num(0.0),
        noise: expr("0.5*exp(-t)"),
        delay: DelaySpec {
            tau: delay,
            delta: Expr::Num(delay),
            delta_dot_bound: 0.1,
        },
        vol: VolatilityBounds {
            sigma_lower_sq: 0.5,
            sigma_upper_sq: 1.0,
        },
        growth: Some(GrowthConstants {
            k: 1.0,
            q1: 3.0,
            q2: 0.0,
        }),
    };
    let history = InitialHistory {
        eta: expr("2 + sin(u)"),
    };
    (model, history)
}

/// Lyapunov data for [`example41`].
///
/// `U = e^{-t} + x² + x⁴` and `U₁ = 0.5e^{-t} + 0.1x² + 4x⁴ + 2x⁶` with
/// `β = (0.1, 0.05, ∞, 1)`, `α₁ = 1`, `α₂ = 0.5`. For the Khasminskii part
/// `Ū = x⁶` and `H = 1 + 1.5x⁶ + 2.5x⁸`, which is what the bound
/// `6x⁵f + G(15x⁴h²) ≤ c₁ − 2H(x) + H(y)` needs. `c₁ = 585` covers
/// `sup_x (1 + 4x⁴ + 8x⁶ − x⁸) ≈ 584.86`.
pub fn example41_lyapunov() -> LyapunovSpec {
    LyapunovSpec {
        u: expr("exp(-t) + x^2 + x^4"),
        u1: expr("0.5*exp(-t) + 0.1*x^2 + 4*x^4 + 2*x^6"),
        ubar: expr("x^6"),
        h_dom: expr("1 + 1.5*x^6 + 2.5*x^8"),
        betas: [0.1, 0.05, f64::INFINITY, 1.0],
        alpha1: 1.0,
        alpha2: 0.5,
        cs: [585.0, 2.0, 1.0],
        varpi: 1.0,
        q1: 3.0,
        q2: 0.0,
        q: 6.0,
        p: 4.0,
        steps: DerivativeSteps::default(),
    }
}

/// Linear mean reversion `dX = -X dt + dB` with no volatility uncertainty and
/// no delay dependence. `τ = tau` only sizes the history segment.
pub fn linear_ou(tau: f64) -> (GsddeModel, InitialHistory) {
    let model = GsddeModel {
        drift: expr("-x"),
        qv_coeff: Expr::Num(0.0),
        noise: Expr::Num(1.0),
        delay: DelaySpec {
            tau,
            delta: Expr::Num(0.0),
            delta_dot_bound: 0.0,
        },
        vol: VolatilityBounds {
            sigma_lower_sq: 1.0,
            sigma_upper_sq: 1.0,
        },
        growth: Some(GrowthConstants {
            k: 1.0,
            q1: 1.0,
            q2: 0.0,
        }),
    };
    (model, InitialHistory::constant(1.0))
}

/// Looks up a built-in model by name. `delay` sets `τ` (and `δ` where the
/// model is delayed).
pub fn preset(name: &str, delay: f64) -> Option<(GsddeModel, InitialHistory)> {
    match name {
        "example41" => Some(example41(delay)),
        "linear-ou" => Some(linear_ou(delay)),
        _ => None,
    }
}

/// Lyapunov data for a built-in model, if one is registered.
pub fn preset_lyapunov(name: &str) -> Option<LyapunovSpec> {
    match name {
        "example41" => Some(example41_lyapunov()),
        _ => None,
    }
}
