use thiserror::Error;

use super::{BinOp, Expr, Func, Var};

/// Default relative step for finite differences.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(Var),
    #[error("expression `{expr}` evaluated to non-finite value {value}")]
    DomainError { expr: String, value: f64 },
}

/// Values for the free variables of an expression.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    values: [Option<f64>; 4],
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.set(var, value);
        self
    }

    pub fn x(self, value: f64) -> Self {
        self.with(Var::X, value)
    }

    pub fn y(self, value: f64) -> Self {
        self.with(Var::Y, value)
    }

    pub fn t(self, value: f64) -> Self {
        self.with(Var::T, value)
    }

    pub fn u(self, value: f64) -> Self {
        self.with(Var::U, value)
    }

    pub fn set(&mut self, var: Var, value: f64) {
        self.values[var as usize] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.values[var as usize]
    }
}

impl FromIterator<(Var, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (Var, f64)>>(iter: I) -> Self {
        let mut b = Bindings::new();
        for (var, value) in iter {
            b.set(var, value);
        }
        b
    }
}

fn power(base: f64, exponent: f64) -> f64 {
    // Small integral exponents go through repeated multiplication.
    if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

impl Expr {
    /// Evaluates in IEEE double precision. A non-finite final value is an error.
    pub fn eval(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        let value = self.eval_raw(bindings)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::DomainError {
                expr: self.to_string(),
                value,
            })
        }
    }

    fn eval_raw(&self, b: &Bindings) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => b.get(*v).ok_or(EvalError::UnboundVariable(*v))?,
            Expr::Neg(inner) => -inner.eval_raw(b)?,
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval_raw(b)?, r.eval_raw(b)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    BinOp::Pow => power(l, r),
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval_raw(b)?;
                match func {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                    Func::Pow => power(a, args[1].eval_raw(b)?),
                    Func::Min => a.min(args[1].eval_raw(b)?),
                    Func::Max => a.max(args[1].eval_raw(b)?),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Finite-difference partial derivative of `expr` in `var` at `point`.
///
/// First order uses the central difference `(f(v+h) - f(v-h)) / 2h`, second
/// order the three-point stencil `(f(v+h) - 2f(v) + f(v-h)) / h^2`, with
/// `h = step * max(1, |v|)`.
pub fn partial_derivative(
    expr: &Expr,
    var: Var,
    point: &Bindings,
    order: DerivativeOrder,
    step: f64,
) -> Result<f64, EvalError> {
    let v = point.get(var).ok_or(EvalError::UnboundVariable(var))?;
    let h = step * v.abs().max(1.0);
    let at = |value: f64| expr.eval(&point.with(var, value));
    let (plus, minus) = (at(v + h)?, at(v - h)?);
    let d = match order {
        DerivativeOrder::First => (plus - minus) / (2.0 * h),
        DerivativeOrder::Second => (plus - 2.0 * at(v)? + minus) / (h * h),
    };
    if d.is_finite() {
        Ok(d)
    } else {
        Err(EvalError::DomainError {
            expr: format!("d/d{var} {expr}"),
            value: d,
        })
    }
}
