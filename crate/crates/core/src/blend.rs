//! Convex blending of member predictions and simplex weight search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{self, MetricError};

/// Grids with more points than this are searched by coordinate ascent
/// instead of full enumeration.
pub const EXHAUSTIVE_BUDGET: usize = 50_000;

#[derive(Debug, Error)]
pub enum BlendError {
    #[error("blending needs at least two members")]
    SingleMember,
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("grid step {0} does not divide 1")]
    InvalidStep(f64),
    #[error("duplicate member name `{0}`")]
    DuplicateMember(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn check_lengths(predictions: &[&[f64]], weights: usize) -> Result<usize, BlendError> {
    let Some(first) = predictions.first() else {
        return Err(BlendError::InvalidWeights("no members".into()));
    };
    if weights != predictions.len() {
        return Err(BlendError::InvalidWeights(format!(
            "{weights} weights for {} members",
            predictions.len()
        )));
    }
    let n = first.len();
    if let Some(bad) = predictions.iter().find(|p| p.len() != n) {
        return Err(BlendError::LengthMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    Ok(n)
}

pub fn validate_weights(weights: &[f64]) -> Result<(), BlendError> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(BlendError::InvalidWeights(format!("weight {w} is negative or not finite")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(BlendError::InvalidWeights(format!("weights sum to {sum}")));
    }
    Ok(())
}

fn dot(predictions: &[&[f64]], weights: &[f64], row: usize) -> f64 {
    predictions
        .iter()
        .zip(weights)
        .fold(0.0, |acc, (p, w)| acc + w * p[row])
}

/// Convex combination, kept inside the per-row member range.
pub fn blend(predictions: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, BlendError> {
    let n = check_lengths(predictions, weights.len())?;
    validate_weights(weights)?;
    Ok((0..n)
        .map(|r| {
            let (lo, hi) = predictions
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[r]), hi.max(p[r])));
            dot(predictions, weights, r).clamp(lo, hi)
        })
        .collect())
}

/// Weighted sum with arbitrary finite weights; only the ranking is meaningful.
pub fn blend_unconstrained(predictions: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, BlendError> {
    let n = check_lengths(predictions, weights.len())?;
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(BlendError::InvalidWeights(format!("weight {w} is not finite")));
    }
    Ok((0..n).map(|r| dot(predictions, weights, r)).collect())
}

/// Member names and their blend weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub members: Vec<String>,
    pub weights: Vec<f64>,
}

impl EnsembleSpec {
    pub fn new(members: Vec<String>, weights: Vec<f64>) -> Result<Self, BlendError> {
        let spec = Self { members, weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BlendError> {
        if self.members.len() != self.weights.len() {
            return Err(BlendError::InvalidWeights(format!(
                "{} weights for {} members",
                self.weights.len(),
                self.members.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.members.iter().find(|m| !seen.insert(m.as_str())) {
            return Err(BlendError::DuplicateMember(dup.clone()));
        }
        validate_weights(&self.weights)
    }
}

/// Result of a weight search.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSearch {
    pub weights: Vec<f64>,
    /// Metric of the blended predictions.
    pub score: f64,
    /// Number of weight vectors evaluated.
    pub evaluated: usize,
}

fn grid_units(step: f64) -> Result<u32, BlendError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(BlendError::InvalidStep(step));
    }
    let units = (1.0 / step).round();
    if (units * step - 1.0).abs() > 1e-9 {
        return Err(BlendError::InvalidStep(step));
    }
    Ok(units as u32)
}

/// Number of ways to split `units` into `m` ordered non-negative parts.
fn grid_size(units: u32, m: usize) -> usize {
    let (n, k) = (units as u128 + m as u128 - 1, m as u128 - 1);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

/// Grid points with the first member's share decreasing fastest, starting
/// from the all-on-first vertex.
fn enumerate_grid(units: u32, m: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in (0..=left).rev() {
            prefix.push(c);
            rec(left - c, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(units, m, &mut Vec::with_capacity(m), &mut out);
    out
}

fn counts_to_weights(counts: &[u32], units: u32) -> Vec<f64> {
    counts.iter().map(|&c| f64::from(c) / f64::from(units)).collect()
}

/// Search the simplex grid at `step` for the weights maximising the metric.
///
/// Small grids are enumerated in full; larger ones use coordinate ascent
/// from the best vertex. Ties keep the earliest candidate, which favours
/// earlier members.
pub fn optimize_weights(predictions: &[&[f64]], labels: &[u8], step: f64) -> Result<WeightSearch, BlendError> {
    let m = predictions.len();
    if m < 2 {
        return Err(BlendError::SingleMember);
    }
    let n = check_lengths(predictions, m)?;
    if labels.len() != n {
        return Err(BlendError::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let units = grid_units(step)?;
    let evaluate = |counts: &Vec<u32>| -> Result<f64, BlendError> {
        let blended = blend(predictions, &counts_to_weights(counts, units))?;
        Ok(metric::score(labels, &blended)?)
    };
    let score_all = |candidates: &[Vec<u32>]| -> Result<Vec<f64>, BlendError> {
        candidates.par_iter().map(evaluate).collect()
    };
    let first_best = |scores: &[f64]| {
        scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best })
    };

    if grid_size(units, m) <= EXHAUSTIVE_BUDGET {
        let grid = enumerate_grid(units, m);
        let scores = score_all(&grid)?;
        let (i, score) = first_best(&scores);
        return Ok(WeightSearch {
            weights: counts_to_weights(&grid[i], units),
            score,
            evaluated: grid.len(),
        });
    }

    let vertices: Vec<Vec<u32>> = (0..m)
        .map(|i| {
            let mut c = vec![0; m];
            c[i] = units;
            c
        })
        .collect();
    let scores = score_all(&vertices)?;
    let (i, mut best_score) = first_best(&scores);
    let mut current = vertices[i].clone();
    let mut evaluated = vertices.len();
    loop {
        let moves: Vec<Vec<u32>> = (0..m)
            .flat_map(|to| (0..m).map(move |from| (to, from)))
            .filter(|&(to, from)| to != from && current[from] > 0)
            .map(|(to, from)| {
                let mut c = current.clone();
                c[from] -= 1;
                c[to] += 1;
                c
            })
            .collect();
        let scores = score_all(&moves)?;
        evaluated += moves.len();
        let (j, s) = first_best(&scores);
        if moves.is_empty() || s <= best_score {
            break;
        }
        best_score = s;
        current = moves[j].clone();
    }
    Ok(WeightSearch {
        weights: counts_to_weights(&current, units),
        score: best_score,
        evaluated,
    })
}
