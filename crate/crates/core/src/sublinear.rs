//! φ-max-mean estimators of upper and lower sublinear expectations.
//!
//! Samples are grouped as `n` groups of `m` values: group `j` holds one draw
//! at each of the `m` volatility levels. The upper estimate is the largest
//! group mean of `φ`, the lower estimate the smallest.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{Bindings, EvalError, Expr, Var};
use crate::integrator::PathEnsemble;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("sample array is empty")]
    EmptyEnsemble,
    #[error("sample groups have unequal sizes")]
    RaggedGroups,
    #[error("indicator value {0} is neither 0 nor 1")]
    NotIndicator(f64),
    #[error("all {0} paths exploded")]
    AllPathsExploded(usize),
    #[error(
        "group {group} has {excluded} of {size} paths exploded by t = {t}; \
         the estimate would be meaningless"
    )]
    GroupMostlyExploded {
        group: usize,
        excluded: usize,
        size: usize,
        t: f64,
    },
    #[error("functional must be an expression in x only, found `{0}`")]
    FunctionalVariable(Var),
    #[error("evaluating the functional: {0}")]
    Eval(#[from] EvalError),
}

/// Rectangular array of samples stored group-major: `n` groups of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleArray {
    group_size: usize,
    values: Vec<f64>,
}

impl SampleArray {
    /// Builds from `groups[j][k]`.
    pub fn from_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<Self, EstimateError> {
        let group_size = groups.first().map_or(0, |g| g.as_ref().len());
        if group_size == 0 {
            return Err(EstimateError::EmptyEnsemble);
        }
        let mut values = Vec::with_capacity(group_size * groups.len());
        for g in groups {
            let g = g.as_ref();
            if g.len() != group_size {
                return Err(EstimateError::RaggedGroups);
            }
            values.extend_from_slice(g);
        }
        Ok(SampleArray { group_size, values })
    }

    /// Number of groups `n`.
    pub fn groups(&self) -> usize {
        self.values.len() / self.group_size
    }

    /// Values per group `m`.
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group(&self, j: usize) -> &[f64] {
        &self.values[j * self.group_size..(j + 1) * self.group_size]
    }

    /// Applies `op` to every sample, keeping the shape.
    pub fn map(&self, op: impl Fn(f64) -> f64) -> SampleArray {
        SampleArray {
            group_size: self.group_size,
            values: self.values.iter().map(|&v| op(v)).collect(),
        }
    }

    /// Elementwise combination of two arrays of the same shape.
    pub fn zip_with(&self, other: &SampleArray, op: impl Fn(f64, f64) -> f64) -> SampleArray {
        assert_eq!(self.group_size, other.group_size);
        assert_eq!(self.values.len(), other.values.len());
        SampleArray {
            group_size: self.group_size,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }

    fn group_means(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .chunks_exact(self.group_size)
            .map(|g| g.iter().sum::<f64>() / g.len() as f64)
    }
}

/// Largest group mean: the φ-max-mean estimate of the upper expectation.
pub fn upper_expectation(samples: &SampleArray) -> f64 {
    samples.group_means().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest group mean: the estimate of the lower expectation.
pub fn lower_expectation(samples: &SampleArray) -> f64 {
    samples.group_means().fold(f64::INFINITY, f64::min)
}

fn check_indicator(samples: &SampleArray) -> Result<(), EstimateError> {
    match samples.values.iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(EstimateError::NotIndicator(v)),
        None => Ok(()),
    }
}

/// Upper capacity estimate from 0/1 indicator samples.
pub fn capacity_upper(indicators: &SampleArray) -> Result<f64, EstimateError> {
    check_indicator(indicators)?;
    Ok(upper_expectation(indicators))
}

/// Lower capacity estimate from 0/1 indicator samples.
pub fn capacity_lower(indicators: &SampleArray) -> Result<f64, EstimateError> {
    check_indicator(indicators)?;
    Ok(lower_expectation(indicators))
}

/// The test function `φ` applied to path values.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `|x|^p`.
    AbsPower(f64),
    /// Any expression whose only variable is `x`.
    Expr(Expr),
}

impl Functional {
    pub fn expr(expr: Expr) -> Result<Self, EstimateError> {
        match expr.variables().into_iter().find(|&v| v != Var::X) {
            Some(v) => Err(EstimateError::FunctionalVariable(v)),
            None => Ok(Functional::Expr(expr)),
        }
    }

    pub fn apply(&self, x: f64) -> Result<f64, EvalError> {
        match self {
            Functional::AbsPower(p) if *p == 1.0 => Ok(x.abs()),
            Functional::AbsPower(p) => Ok(x.abs().powf(*p)),
            Functional::Expr(e) => e.eval(&Bindings::new().x(x)),
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::AbsPower(p) => write!(f, "|x|^{p}"),
            Functional::Expr(e) => write!(f, "{e}"),
        }
    }
}

/// Upper and lower estimates of `E[φ(X(t_i))]` at every grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSeries {
    pub times: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Paths excluded at each time because they had exploded.
    pub excluded: Vec<usize>,
    pub functional: String,
}

impl EstimateSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Applies the φ-max-mean estimators at every grid time.
///
/// Group `j` of the estimator is the set of paths `(k, j)` over all levels
/// `k`. Exploded paths drop out of their group's mean from the explosion
/// index onward; more than half of a group exploded is an error.
pub fn estimate_series(
    ensemble: &PathEnsemble,
    functional: &Functional,
) -> Result<EstimateSeries, EstimateError> {
    let (m, n) = (ensemble.levels(), ensemble.samples());
    if m == 0 || n == 0 {
        return Err(EstimateError::EmptyEnsemble);
    }
    if ensemble.exploded_count() == m * n {
        return Err(EstimateError::AllPathsExploded(m * n));
    }
    let grid = ensemble.time();
    let rows: Vec<(f64, f64, usize)> = (0..=grid.steps())
        .into_par_iter()
        .map(|i| {
            let mut upper = f64::NEG_INFINITY;
            let mut lower = f64::INFINITY;
            let mut excluded = 0;
            for j in 0..n {
                let mut sum = 0.0;
                let mut count = 0usize;
                for k in 0..m {
                    if let Some(x) = ensemble.path(k, j).at(i as isize) {
                        sum += functional.apply(x)?;
                        count += 1;
                    }
                }
                let dropped = m - count;
                if 2 * dropped > m {
                    return Err(EstimateError::GroupMostlyExploded {
                        group: j,
                        excluded: dropped,
                        size: m,
                        t: grid.time(i),
                    });
                }
                excluded += dropped;
                let mean = sum / count as f64;
                upper = upper.max(mean);
                lower = lower.min(mean);
            }
            Ok((upper, lower, excluded))
        })
        .collect::<Result<_, EstimateError>>()?;
    Ok(EstimateSeries {
        times: grid.times().collect(),
        upper: rows.iter().map(|r| r.0).collect(),
        lower: rows.iter().map(|r| r.1).collect(),
        excluded: rows.iter().map(|r| r.2).collect(),
        functional: functional.to_string(),
    })
}
