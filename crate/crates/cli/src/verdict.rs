//! Heuristic stability verdicts for estimated moment series.
//!
//! The default thresholds were calibrated on pilot runs of the cubic delay
//! preset (`m = 5`, `n = 20`, `Δ = 10⁻³`, `T = 20`, `φ = |x|`, seeds 1 to 12
//! plus the preset seeds):
//!
//! | delay | `upper[0]` | tail mean of upper | tail mean of lower |
//! |-------|-----------|--------------------|--------------------|
//! | 0.01  | 2         | 5e-8 to 8e-8       | 1e-8 to 3e-8       |
//! | 0.08  | 2         | 3e-8 to 5e-8       | 6e-9 to 2e-8       |
//! | 2     | 2         | 0.44 to 0.48       | 0.35 to 0.40       |
//!
//! With delay 2 the paths settle into a sustained oscillation of amplitude
//! about 0.64, whose mean absolute value stays near 0.4. An
//! `unstable_floor` of 0.25 separates that regime from decay with a wide
//! margin on both sides.

use gsdde_core::sublinear::EstimateSeries;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerdictThresholds {
    /// Fraction of the series, counted from the end, that forms the tail.
    pub window_fraction: f64,
    /// Stable when the tail mean of the upper series is at most this
    /// multiple of `upper[0]`.
    pub stable_ratio: f64,
    /// Unstable when the tail mean of the lower series is at least this.
    pub unstable_floor: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        VerdictThresholds {
            window_fraction: 0.2,
            stable_ratio: 0.05,
            unstable_floor: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub tail_upper: f64,
    pub tail_lower: f64,
    pub initial_upper: f64,
    pub thresholds: VerdictThresholds,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerdictError {
    #[error("series has {0} points; a verdict needs at least 10")]
    SeriesTooShort(usize),
}

fn tail_mean(values: &[f64], window: usize) -> f64 {
    let tail = &values[values.len() - window..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Classifies a series by its tail. When the stable and unstable criteria
/// both hold the series is reported as inconclusive.
pub fn stability_verdict(
    series: &EstimateSeries,
    thresholds: VerdictThresholds,
) -> Result<VerdictReport, VerdictError> {
    let len = series.len();
    if len < 10 {
        return Err(VerdictError::SeriesTooShort(len));
    }
    let window = ((thresholds.window_fraction * len as f64).ceil() as usize).clamp(1, len);
    let tail_upper = tail_mean(&series.upper, window);
    let tail_lower = tail_mean(&series.lower, window);
    let initial_upper = series.upper[0];
    let stable = tail_upper <= thresholds.stable_ratio * initial_upper;
    let unstable = tail_lower >= thresholds.unstable_floor;
    let verdict = match (stable, unstable) {
        (true, false) => Verdict::Stable,
        (false, true) => Verdict::Unstable,
        _ => Verdict::Inconclusive,
    };
    Ok(VerdictReport {
        verdict,
        tail_upper,
        tail_lower,
        initial_upper,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(upper: Vec<f64>, lower: Vec<f64>) -> EstimateSeries {
        EstimateSeries {
            times: (0..upper.len()).map(|i| i as f64).collect(),
            excluded: vec![0; upper.len()],
            upper,
            lower,
            functional: "|x|^1".into(),
        }
    }

    #[test]
    fn decaying_series_is_stable() {
        let up: Vec<f64> = (0..=2000)
            .map(|i| 2.0 * (-(i as f64) * 0.01).exp())
            .collect();
        let r = stability_verdict(&series(up.clone(), up), VerdictThresholds::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        assert!(r.tail_upper < 0.1 * 0.05);
        assert_eq!(r.initial_upper, 2.0);
    }

    #[test]
    fn persistent_lower_series_is_unstable() {
        let flat = vec![1.5; 100];
        let r =
            stability_verdict(&series(flat.clone(), flat), VerdictThresholds::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Unstable);
    }

    #[test]
    fn partial_decay_is_inconclusive() {
        let mut up = vec![0.2; 100];
        up[0] = 1.0;
        let r =
            stability_verdict(&series(up, vec![0.2; 100]), VerdictThresholds::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn both_criteria_met_is_inconclusive() {
        let th = VerdictThresholds {
            unstable_floor: 0.0,
            ..VerdictThresholds::default()
        };
        let up: Vec<f64> = (0..50).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let r = stability_verdict(&series(up.clone(), up), th).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn short_series_rejected() {
        assert_eq!(
            stability_verdict(
                &series(vec![1.0; 9], vec![1.0; 9]),
                VerdictThresholds::default()
            ),
            Err(VerdictError::SeriesTooShort(9))
        );
    }
}
