use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::exprlang::{BinOp, Bindings, EvalError, Expr, Func, Var};
use crate::model::GsddeModel;

use super::lyapunov::{Derivatives, LyapunovSpec};
use super::StabilityError;

/// Violations up to this size still count as satisfied.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Equally spaced points `min, min + step, ..., ≤ max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self, StabilityError> {
        let range = AxisRange { min, max, step };
        range.check("axis")?;
        Ok(range)
    }

    fn check(&self, axis: &'static str) -> Result<(), StabilityError> {
        let reason = if !(self.min.is_finite() && self.max.is_finite()) {
            "bounds must be finite"
        } else if self.max < self.min {
            "max is below min"
        } else if !(self.step > 0.0 && self.step.is_finite()) {
            "step must be positive"
        } else {
            return Ok(());
        };
        Err(StabilityError::InvalidGrid { axis, reason })
    }

    pub fn len(&self) -> usize {
        // The slack keeps `max` itself when the span is a whole number of
        // steps up to rounding.
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

impl fmt::Display for AxisRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] step {}", self.min, self.max, self.step)
    }
}

/// Box of `(x, y, t)` nodes a checker sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckGrid {
    pub x: AxisRange,
    pub y: AxisRange,
    pub t: AxisRange,
}

impl Default for CheckGrid {
    fn default() -> Self {
        let space = AxisRange {
            min: -5.0,
            max: 5.0,
            step: 0.05,
        };
        CheckGrid {
            x: space,
            y: space,
            t: AxisRange {
                min: 0.0,
                max: 10.0,
                step: 0.1,
            },
        }
    }
}

impl CheckGrid {
    pub fn validate(&self) -> Result<(), StabilityError> {
        self.x.check("x")?;
        self.y.check("y")?;
        self.t.check("t")
    }

    pub fn nodes(&self) -> usize {
        self.x.len() * self.y.len() * self.t.len()
    }
}

/// Grid node at which a violation was largest. Coordinates a condition does
/// not depend on are left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub t: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<f64>| v.map_or_else(|| "any".to_string(), |v| format!("{v:.4}"));
        write!(
            f,
            "x = {}, y = {}, t = {:.4}",
            show(self.x),
            show(self.y),
            self.t
        )
    }
}

/// A scalar precondition checked once, outside the grid sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideCondition {
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl SideCondition {
    fn strictly_less(description: &str, lhs: f64, rhs: f64) -> Self {
        SideCondition {
            description: description.to_string(),
            lhs,
            rhs,
            holds: lhs < rhs,
        }
    }
}

/// Outcome of one grid check. `satisfied` requires every side condition to
/// hold and `max_violation ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub satisfied: bool,
    /// Largest `lhs − rhs` over all nodes and inequalities.
    pub max_violation: f64,
    pub witness: Witness,
    /// Inequality that attained `max_violation`.
    pub worst_condition: String,
    pub side_conditions: Vec<SideCondition>,
    pub grid: CheckGrid,
    pub tolerance: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {}",
            self.name,
            if self.satisfied {
                "satisfied"
            } else {
                "FAILED"
            }
        )?;
        writeln!(
            f,
            "  max violation {:.6e} ({}) at {}",
            self.max_violation, self.worst_condition, self.witness
        )?;
        for side in &self.side_conditions {
            writeln!(
                f,
                "  side condition {}: {} vs {} {}",
                side.description,
                side.lhs,
                side.rhs,
                if side.holds { "holds" } else { "FAILS" }
            )?;
        }
        write!(
            f,
            "  grid x {}, y {}, t {}; tolerance {:e}",
            self.grid.x, self.grid.y, self.grid.t, self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Worst {
    violation: f64,
    witness: Option<Witness>,
    condition: usize,
}

impl Worst {
    const NONE: Worst = Worst {
        violation: f64::NEG_INFINITY,
        witness: None,
        condition: 0,
    };

    fn observe(
        &mut self,
        violation: f64,
        condition: usize,
        x: Option<f64>,
        y: Option<f64>,
        t: f64,
    ) {
        let violation = if violation.is_nan() {
            f64::INFINITY
        } else {
            violation
        };
        if self.witness.is_none() || violation > self.violation {
            *self = Worst {
                violation,
                witness: Some(Witness { x, y, t }),
                condition,
            };
        }
    }

    fn merge(self, other: Worst) -> Worst {
        match (self.witness, other.witness) {
            (None, _) => other,
            (_, None) => self,
            _ if other.violation > self.violation => other,
            _ => self,
        }
    }
}

fn at(x: Option<f64>, y: Option<f64>, t: f64) -> impl FnOnce(EvalError) -> StabilityError {
    move |source| StabilityError::Eval {
        at: Witness { x, y, t },
        source,
    }
}

/// Runs `per_t` for every `t` in parallel and reduces in grid order, so the
/// reported witness does not depend on scheduling.
fn sweep<F>(grid: &CheckGrid, per_t: F) -> Result<Worst, StabilityError>
where
    F: Fn(f64) -> Result<Worst, StabilityError> + Sync,
{
    grid.validate()?;
    let results: Vec<_> = grid.t.points().into_par_iter().map(&per_t).collect();
    let mut worst = Worst::NONE;
    for r in results {
        worst = worst.merge(r?);
    }
    Ok(worst)
}

fn finish(
    name: &str,
    conditions: &[&str],
    worst: Worst,
    side_conditions: Vec<SideCondition>,
    grid: &CheckGrid,
    tolerance: f64,
) -> Result<CheckReport, StabilityError> {
    let witness = worst.witness.ok_or(StabilityError::NoDistinctPairs)?;
    Ok(CheckReport {
        name: name.to_string(),
        satisfied: worst.violation <= tolerance && side_conditions.iter().all(|s| s.holds),
        max_violation: worst.violation,
        witness,
        worst_condition: conditions[worst.condition].to_string(),
        side_conditions,
        grid: *grid,
        tolerance,
    })
}

fn abs_power(q: f64) -> Expr {
    Expr::binary(
        BinOp::Pow,
        Expr::call(Func::Abs, vec![Expr::var(Var::X)]),
        Expr::num(q),
    )
}

fn eval_xt(expr: &Expr, x: f64, t: f64) -> Result<f64, EvalError> {
    expr.eval(&Bindings::new().x(x).t(t))
}

/// Polynomial growth of the coefficients:
/// `|f| ≤ K(1 + |x|^q1 + |y|^q1)`, `|g| ≤ K(1 + |x|^q2 + |y|^q2)`, `|h| ≤ K`.
pub fn check_polynomial_growth(
    model: &GsddeModel,
    k: f64,
    q1: f64,
    q2: f64,
    grid: &CheckGrid,
    tolerance: f64,
) -> Result<CheckReport, StabilityError> {
    const CONDITIONS: [&str; 3] = [
        "|f| <= K(1+|x|^q1+|y|^q1)",
        "|g| <= K(1+|x|^q2+|y|^q2)",
        "|h| <= K",
    ];
    for (name, value) in [("K", k), ("q1", q1), ("q2", q2)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(StabilityError::InvalidConstant { name, value });
        }
    }
    let (p1, p2) = (abs_power(q1), abs_power(q2));
    let pow = |e: &Expr, v: f64| e.eval(&Bindings::new().x(v));
    let powers = |axis: &AxisRange| -> Result<Vec<(f64, f64, f64)>, StabilityError> {
        axis.points()
            .into_iter()
            .map(|v| {
                Ok((
                    v,
                    pow(&p1, v).map_err(at(Some(v), None, 0.0))?,
                    pow(&p2, v).map_err(at(Some(v), None, 0.0))?,
                ))
            })
            .collect()
    };
    grid.validate()?;
    let (xs, ys) = (powers(&grid.x)?, powers(&grid.y)?);
    let g_zero = model.qv_is_zero();
    let worst = sweep(grid, |t| {
        let mut worst = Worst::NONE;
        let h = model.noise_at(t).map_err(at(None, None, t))?;
        worst.observe(h.abs() - k, 2, None, None, t);
        for &(x, x1, x2) in &xs {
            for &(y, y1, y2) in &ys {
                let f = model.drift_at(x, y, t).map_err(at(Some(x), Some(y), t))?;
                worst.observe(f.abs() - k * (1.0 + x1 + y1), 0, Some(x), Some(y), t);
                let g = if g_zero {
                    0.0
                } else {
                    model
                        .qv_coeff_at(x, y, t)
                        .map_err(at(Some(x), Some(y), t))?
                };
                worst.observe(g.abs() - k * (1.0 + x2 + y2), 1, Some(x), Some(y), t);
            }
        }
        Ok(worst)
    })?;
    finish(
        "polynomial_growth",
        &CONDITIONS,
        worst,
        Vec::new(),
        grid,
        tolerance,
    )
}

/// `|f(x, x, t) − f(x, y, t)| ≤ ϖ |x − y|`, checked on nodes with `x ≠ y`.
/// The violation at a node is the difference quotient minus `ϖ`.
pub fn check_delay_lipschitz(
    model: &GsddeModel,
    varpi: f64,
    grid: &CheckGrid,
    tolerance: f64,
) -> Result<CheckReport, StabilityError> {
    const CONDITIONS: [&str; 1] = ["|f(x,x,t)-f(x,y,t)| <= varpi |x-y|"];
    if !(varpi > 0.0 && varpi.is_finite()) {
        return Err(StabilityError::InvalidConstant {
            name: "varpi",
            value: varpi,
        });
    }
    grid.validate()?;
    let (xs, ys) = (grid.x.points(), grid.y.points());
    let worst = sweep(grid, |t| {
        let mut worst = Worst::NONE;
        for &x in &xs {
            let fxx = model.drift_at(x, x, t).map_err(at(Some(x), Some(x), t))?;
            for &y in ys.iter().filter(|&&y| y != x) {
                let fxy = model.drift_at(x, y, t).map_err(at(Some(x), Some(y), t))?;
                let ratio = (fxx - fxy).abs() / (x - y).abs();
                worst.observe(ratio - varpi, 0, Some(x), Some(y), t);
            }
        }
        Ok(worst)
    })?;
    finish(
        "delay_lipschitz",
        &CONDITIONS,
        worst,
        Vec::new(),
        grid,
        tolerance,
    )
}

/// Khasminskii-type condition on `Ū` and `H`:
/// `𝕃Ū ≤ c₁ − c₂ H(x, t) + c₃ H(y, t − δ(t))` and `|x|^q ≤ Ū ≤ H`, with the
/// side condition `c₃ < c₂ (1 − δ̄)`.
pub fn check_khasminskii(
    spec: &LyapunovSpec,
    model: &GsddeModel,
    grid: &CheckGrid,
    tolerance: f64,
) -> Result<CheckReport, StabilityError> {
    const CONDITIONS: [&str; 3] = [
        "LbarU <= c1 - c2 H(x,t) + c3 H(y,t-delta(t))",
        "|x|^q <= Ubar",
        "Ubar <= H",
    ];
    spec.validate()?;
    let [c1, c2, c3] = spec.cs;
    let delta_bar = model.delay.delta_dot_bound;
    let sides = vec![SideCondition::strictly_less(
        "c3 < c2 (1 - delta_dot_bound)",
        c3,
        c2 * (1.0 - delta_bar),
    )];
    let qpow = abs_power(spec.q);
    grid.validate()?;
    let (xs, ys) = (grid.x.points(), grid.y.points());
    let g_zero = model.qv_is_zero();
    let worst = sweep(grid, |t| {
        let mut worst = Worst::NONE;
        let h = model.noise_at(t).map_err(at(None, None, t))?;
        let ts = t - model.delay_at(t).map_err(at(None, None, t))?;
        let h_y = ys
            .iter()
            .map(|&y| eval_xt(&spec.h_dom, y, ts).map_err(at(None, Some(y), t)))
            .collect::<Result<Vec<_>, _>>()?;
        for &x in &xs {
            let d = Derivatives::of(&spec.ubar, x, t, spec.steps).map_err(at(Some(x), None, t))?;
            let h_x = eval_xt(&spec.h_dom, x, t).map_err(at(Some(x), None, t))?;
            let xq = qpow
                .eval(&Bindings::new().x(x))
                .map_err(at(Some(x), None, t))?;
            worst.observe(xq - d.v, 1, Some(x), None, t);
            worst.observe(d.v - h_x, 2, Some(x), None, t);
            for (&y, &hy) in ys.iter().zip(&h_y) {
                let f = model.drift_at(x, y, t).map_err(at(Some(x), Some(y), t))?;
                let g = if g_zero {
                    0.0
                } else {
                    model
                        .qv_coeff_at(x, y, t)
                        .map_err(at(Some(x), Some(y), t))?
                };
                let lhs = d.generator(model, f, g, h);
                worst.observe(lhs - (c1 - c2 * h_x + c3 * hy), 0, Some(x), Some(y), t);
            }
        }
        Ok(worst)
    })?;
    finish("khasminskii", &CONDITIONS, worst, sides, grid, tolerance)
}

/// Delay-dependent stability condition:
///
/// ```text
/// 𝓛U + β₁|U_x|² + β₂|f|² + β₃|g|² + β₄|h|² ≤ −α₁U₁(x, t) + α₂U₁(y, t − δ(t))
/// ```
///
/// with the side condition `α₂ < α₁(1 − δ̄)`. `β₃ = ∞` is accepted only when
/// `g ≡ 0`, in which case the `β₃` term is dropped.
pub fn check_stability_assumption(
    spec: &LyapunovSpec,
    model: &GsddeModel,
    grid: &CheckGrid,
    tolerance: f64,
) -> Result<CheckReport, StabilityError> {
    const CONDITIONS: [&str; 1] =
        ["LU + b1|Ux|^2 + b2|f|^2 + b3|g|^2 + b4|h|^2 <= -a1 U1(x,t) + a2 U1(y,t-delta(t))"];
    spec.validate()?;
    let [b1, b2, b3, b4] = spec.betas;
    let g_zero = model.qv_is_zero();
    if b3 == f64::INFINITY && !g_zero {
        return Err(StabilityError::InfiniteBeta3WithNonzeroG);
    }
    let (a1, a2) = (spec.alpha1, spec.alpha2);
    let sides = vec![SideCondition::strictly_less(
        "alpha2 < alpha1 (1 - delta_dot_bound)",
        a2,
        a1 * (1.0 - model.delay.delta_dot_bound),
    )];
    grid.validate()?;
    let (xs, ys) = (grid.x.points(), grid.y.points());
    let worst = sweep(grid, |t| {
        let mut worst = Worst::NONE;
        let h = model.noise_at(t).map_err(at(None, None, t))?;
        let ts = t - model.delay_at(t).map_err(at(None, None, t))?;
        let delayed = ys
            .iter()
            .map(|&y| Ok(a2 * eval_xt(&spec.u1, y, ts).map_err(at(None, Some(y), t))?))
            .collect::<Result<Vec<_>, StabilityError>>()?;
        for &x in &xs {
            let d = Derivatives::of(&spec.u, x, t, spec.steps).map_err(at(Some(x), None, t))?;
            let f_undelayed = model.drift_at(x, x, t).map_err(at(Some(x), Some(x), t))?;
            let u1 = eval_xt(&spec.u1, x, t).map_err(at(Some(x), None, t))?;
            let x_part = b1 * d.v_x * d.v_x + b4 * h * h + a1 * u1;
            let lu_no_g = d.generator(model, f_undelayed, 0.0, h);
            for (&y, &rhs_y) in ys.iter().zip(&delayed) {
                let f = model.drift_at(x, y, t).map_err(at(Some(x), Some(y), t))?;
                let (lu, g_term) = if g_zero {
                    (lu_no_g, 0.0)
                } else {
                    let g = model
                        .qv_coeff_at(x, y, t)
                        .map_err(at(Some(x), Some(y), t))?;
                    (d.generator(model, f_undelayed, g, h), b3 * g * g)
                };
                let lhs = lu + x_part + b2 * f * f + g_term;
                worst.observe(lhs - rhs_y, 0, Some(x), Some(y), t);
            }
        }
        Ok(worst)
    })?;
    finish(
        "stability_assumption",
        &CONDITIONS,
        worst,
        sides,
        grid,
        tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;

    fn small_grid() -> CheckGrid {
        CheckGrid {
            x: AxisRange::new(-2.0, 2.0, 0.25).unwrap(),
            y: AxisRange::new(-2.0, 2.0, 0.25).unwrap(),
            t: AxisRange::new(0.0, 2.0, 0.5).unwrap(),
        }
    }

    #[test]
    fn axis_counts_include_endpoint() {
        assert_eq!(CheckGrid::default().x.len(), 201);
        assert_eq!(CheckGrid::default().t.len(), 101);
        assert_eq!(AxisRange::new(0.0, 1.0, 0.3).unwrap().len(), 4);
        assert_eq!(AxisRange::new(1.0, 1.0, 0.3).unwrap().len(), 1);
        assert!(AxisRange::new(1.0, 0.0, 0.1).is_err());
        assert!(AxisRange::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn lipschitz_constant_of_linear_delay() {
        let (mut model, _) = registry::example41(0.01);
        let r = check_delay_lipschitz(&model, 1.0, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(r.satisfied, "{r}");
        assert!(r.max_violation.abs() < 1e-12);

        model.drift = Expr::parse("-x^3 - 2*y").unwrap();
        let r = check_delay_lipschitz(&model, 1.0, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(!r.satisfied);
        assert!((r.max_violation - 1.0).abs() < 1e-12);

        model.drift = Expr::parse("-x^3").unwrap();
        let r = check_delay_lipschitz(&model, 0.01, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.max_violation, -0.01);
    }

    #[test]
    fn growth_fails_on_h_and_exponential_drift() {
        let (mut model, _) = registry::example41(0.01);
        model.drift = Expr::num(0.0);
        let r = check_polynomial_growth(&model, 0.4, 3.0, 0.0, &small_grid(), DEFAULT_TOLERANCE)
            .unwrap();
        assert!(!r.satisfied);
        assert_eq!(r.worst_condition, "|h| <= K");
        assert_eq!(r.witness.t, 0.0);
        assert!((r.max_violation - 0.1).abs() < 1e-15);

        model.drift = Expr::parse("exp(x)").unwrap();
        let grid = CheckGrid {
            x: AxisRange::new(-20.0, 20.0, 1.0).unwrap(),
            ..small_grid()
        };
        let r = check_polynomial_growth(&model, 1.0, 3.0, 0.0, &grid, DEFAULT_TOLERANCE).unwrap();
        assert!(!r.satisfied);
        assert_eq!(r.witness.x, Some(20.0));
    }

    #[test]
    fn khasminskii_side_condition() {
        let (model, _) = registry::example41(0.01);
        let mut spec = registry::example41_lyapunov();
        let r = check_khasminskii(&spec, &model, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(r.satisfied, "{r}");
        assert_eq!(r.side_conditions[0].lhs, 1.0);
        assert!((r.side_conditions[0].rhs - 1.8).abs() < 1e-15);

        spec.cs[2] = spec.cs[1];
        let r = check_khasminskii(&spec, &model, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(!r.satisfied);
        assert!(!r.side_conditions[0].holds);
    }

    #[test]
    fn stability_fails_for_huge_alpha1() {
        let (model, _) = registry::example41(0.01);
        let mut spec = registry::example41_lyapunov();
        spec.alpha1 = 1e6;
        let r =
            check_stability_assumption(&spec, &model, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(!r.satisfied);
        assert!(r.max_violation > 1.0);
    }

    #[test]
    fn infinite_beta3_requires_zero_g() {
        let (mut model, _) = registry::example41(0.01);
        let spec = registry::example41_lyapunov();
        assert_eq!(spec.betas[2], f64::INFINITY);
        let zero =
            check_stability_assumption(&spec, &model, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        assert!(zero.max_violation.is_finite());

        model.qv_coeff = Expr::parse("0.1*x").unwrap();
        assert_eq!(
            check_stability_assumption(&spec, &model, &small_grid(), DEFAULT_TOLERANCE),
            Err(StabilityError::InfiniteBeta3WithNonzeroG)
        );
    }

    #[test]
    fn report_is_independent_of_thread_count() {
        let (model, _) = registry::example41(0.01);
        let spec = registry::example41_lyapunov();
        let a = check_khasminskii(&spec, &model, &small_grid(), DEFAULT_TOLERANCE).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| {
                check_khasminskii(&spec, &model, &small_grid(), DEFAULT_TOLERANCE).unwrap()
            });
        assert_eq!(a, b);
    }
}
