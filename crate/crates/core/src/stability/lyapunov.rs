use crate::exprlang::{partial_derivative, Bindings, DerivativeOrder, EvalError, Expr, Var};
use crate::model::GsddeModel;

use super::constants::g_generator;
use super::StabilityError;

/// Relative finite-difference steps used for Lyapunov derivatives.
///
/// The second derivative uses a larger step than the first: the three-point
/// stencil divides rounding error by `h²`, which dominates at `1e-5` for
/// polynomial candidates of degree 8 on `|x| ≤ 5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeSteps {
    pub first: f64,
    pub second: f64,
}

impl Default for DerivativeSteps {
    fn default() -> Self {
        DerivativeSteps {
            first: 1e-5,
            second: 1e-4,
        }
    }
}

/// Lyapunov candidates and constants for the stability, Khasminskii and
/// moment assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    /// `U(x, t)` of the stability assumption.
    pub u: Expr,
    /// `U₁(x, t)`, the decay term of the stability assumption.
    pub u1: Expr,
    /// `Ū(x, t)` of the Khasminskii condition.
    pub ubar: Expr,
    /// `H(x, t)` dominating `Ū`.
    pub h_dom: Expr,
    /// `β₁..β₄`; `β₃` may be `f64::INFINITY` when `g ≡ 0`.
    pub betas: [f64; 4],
    pub alpha1: f64,
    pub alpha2: f64,
    /// `c₁, c₂, c₃`.
    pub cs: [f64; 3],
    pub varpi: f64,
    pub q1: f64,
    pub q2: f64,
    pub q: f64,
    pub p: f64,
    pub steps: DerivativeSteps,
}

impl LyapunovSpec {
    /// `q = 2 max(q1, q2)`, the moment order the Khasminskii condition targets
    /// when none is given.
    pub fn auto_q(q1: f64, q2: f64) -> f64 {
        2.0 * q1.max(q2)
    }

    /// Checks that candidates use only `x` and `t` and constants are in range.
    pub fn validate(&self) -> Result<(), StabilityError> {
        for (field, e) in [
            ("U", &self.u),
            ("U1", &self.u1),
            ("Ubar", &self.ubar),
            ("H", &self.h_dom),
        ] {
            if let Some(&var) = e.variables().iter().find(|v| !matches!(v, Var::X | Var::T)) {
                return Err(StabilityError::CandidateVariable { field, var });
            }
        }
        let [b1, b2, b3, b4] = self.betas;
        let non_negative = [
            ("beta1", b1),
            ("beta2", b2),
            ("beta4", b4),
            ("c1", self.cs[0]),
            ("c2", self.cs[1]),
            ("c3", self.cs[2]),
            ("q1", self.q1),
            ("q2", self.q2),
            ("q", self.q),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(StabilityError::InvalidConstant { name, value });
            }
        }
        if b3.is_nan() || b3 < 0.0 {
            return Err(StabilityError::InvalidConstant {
                name: "beta3",
                value: b3,
            });
        }
        for (name, value) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("varpi", self.varpi),
            ("p", self.p),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(StabilityError::InvalidConstant { name, value });
            }
        }
        Ok(())
    }
}

/// Derivatives of a candidate `V(x, t)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub v: f64,
    pub v_t: f64,
    pub v_x: f64,
    pub v_xx: f64,
}

impl Derivatives {
    pub fn of(expr: &Expr, x: f64, t: f64, steps: DerivativeSteps) -> Result<Self, EvalError> {
        let at = Bindings::new().x(x).t(t);
        Ok(Derivatives {
            v: expr.eval(&at)?,
            v_t: partial_derivative(expr, Var::T, &at, DerivativeOrder::First, steps.first)?,
            v_x: partial_derivative(expr, Var::X, &at, DerivativeOrder::First, steps.first)?,
            v_xx: partial_derivative(expr, Var::X, &at, DerivativeOrder::Second, steps.second)?,
        })
    }

    /// `V_t + V_x f + G(2 g V_x + h² V_xx)` for already evaluated `f`, `g`, `h`.
    pub fn generator(&self, model: &GsddeModel, f: f64, g: f64, h: f64) -> f64 {
        self.v_t + self.v_x * f + g_generator(2.0 * g * self.v_x + h * h * self.v_xx, &model.vol)
    }
}

/// `𝓛U(x, y, t) = U_t + U_x f(x, x, t) + G(2 g(x, y, t) U_x + h(t)² U_xx)`.
///
/// The drift is evaluated without delay; only `g` sees the delayed state.
pub fn lyapunov_operator_lu(
    spec: &LyapunovSpec,
    model: &GsddeModel,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64, EvalError> {
    let d = Derivatives::of(&spec.u, x, t, spec.steps)?;
    let f = model.drift_at(x, x, t)?;
    let g = model.qv_coeff_at(x, y, t)?;
    let h = model.noise_at(t)?;
    Ok(d.generator(model, f, g, h))
}

/// `𝕃Ū(x, y, t) = Ū_t + Ū_x f(x, y, t) + G(2 Ū_x g(x, y, t) + Ū_xx h(t)²)`.
pub fn lyapunov_operator_lbar_u(
    spec: &LyapunovSpec,
    model: &GsddeModel,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64, EvalError> {
    let d = Derivatives::of(&spec.ubar, x, t, spec.steps)?;
    let f = model.drift_at(x, y, t)?;
    let g = model.qv_coeff_at(x, y, t)?;
    let h = model.noise_at(t)?;
    Ok(d.generator(model, f, g, h))
}
