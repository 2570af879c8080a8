use serde::Serialize;

use super::StabilityError;
use crate::model::VolatilityBounds;

/// `G(α) = ½(σ_upper² α⁺ − σ_lower² α⁻)`.
pub fn g_generator(alpha: f64, vol: &VolatilityBounds) -> f64 {
    0.5 * (vol.sigma_upper_sq * alpha.max(0.0) - vol.sigma_lower_sq * (-alpha).max(0.0))
}

/// Constants of the Burkholder–Davis–Gundy inequality for G-Itô integrals,
/// `C1 = σ_upper^p` and `C2 = C_p σ_upper^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BdgConstants {
    pub c1: f64,
    pub c2: f64,
    pub cp: f64,
}

/// The three-branch constant `C_p`. The branches do not join continuously
/// at `p = 2`; the value there is exactly 4.
pub fn bdg_cp(p: f64) -> Result<f64, StabilityError> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(StabilityError::NonPositiveP(p));
    }
    Ok(if p < 2.0 {
        (32.0 / p).powf(p / 2.0)
    } else if p == 2.0 {
        4.0
    } else {
        (p.powf(p + 1.0) / (2.0 * (p - 1.0).powf(p - 1.0))).powf(p / 2.0)
    })
}

pub fn bdg_constant(p: f64, sigma_upper: f64) -> Result<BdgConstants, StabilityError> {
    let cp = bdg_cp(p)?;
    positive("sigma_upper", sigma_upper)?;
    let c1 = sigma_upper.powf(p);
    Ok(BdgConstants {
        c1,
        c2: cp * c1,
        cp,
    })
}

/// The admissible delay of the delay-dependent stability criterion together
/// with its three competing terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayBound {
    /// `√(4β₁β₂ / 3ϖ²)`
    pub drift_term: f64,
    /// `√(4β₁β₃ / 3ϖ²σ_upper²)`, infinite when `β₃` is.
    pub qv_term: f64,
    /// `4β₁β₄ / 3ϖ²σ_upper²`
    pub noise_term: f64,
    pub bound: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, StabilityError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(StabilityError::NonPositiveParameter { name, value })
    }
}

/// `τ_max = √(4β₁β₂/3ϖ²) ∧ √(4β₁β₃/3ϖ²σ̄²) ∧ 4β₁β₄/3ϖ²σ̄²`.
///
/// `beta3 = f64::INFINITY` is the sentinel for models with `g ≡ 0` and
/// removes the middle term.
pub fn delay_bound(
    beta1: f64,
    beta2: f64,
    beta3: f64,
    beta4: f64,
    varpi: f64,
    sigma_upper: f64,
) -> Result<DelayBound, StabilityError> {
    let beta1 = positive("beta1", beta1)?;
    let beta2 = positive("beta2", beta2)?;
    if beta3 != f64::INFINITY {
        positive("beta3", beta3)?;
    }
    let beta4 = positive("beta4", beta4)?;
    let varpi = positive("varpi", varpi)?;
    let sigma_upper = positive("sigma_upper", sigma_upper)?;
    let w2 = 3.0 * varpi * varpi;
    let s2 = sigma_upper * sigma_upper;
    let drift_term = (4.0 * beta1 * beta2 / w2).sqrt();
    let qv_term = if beta3 == f64::INFINITY {
        f64::INFINITY
    } else {
        (4.0 * beta1 * beta3 / (w2 * s2)).sqrt()
    };
    let noise_term = 4.0 * beta1 * beta4 / (w2 * s2);
    Ok(DelayBound {
        drift_term,
        qv_term,
        noise_term,
        bound: drift_term.min(qv_term).min(noise_term),
    })
}

/// `p ≥ 2` and `(p + q1 − 1) ∨ (p + q2 − 1) ≤ q`: the exponent condition for
/// the p-th moment stability result.
pub fn moment_exponent_condition(p: f64, q1: f64, q2: f64, q: f64) -> bool {
    p >= 2.0 && (p + q1 - 1.0).max(p + q2 - 1.0) <= q
}
