//! Stratified k-fold plans, out-of-fold predictions and meta-model stacking.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureMatrix};
use crate::gbdt::{self, BoostedModel, GbdtError, TrainConfig};

/// Prefix of out-of-fold meta feature columns.
pub const META_PREFIX: &str = "meta_";

#[derive(Debug, Error)]
pub enum StackError {
    #[error("fold count {0} < 2")]
    InvalidK(usize),
    #[error("class {class} has {count} rows, fewer than {k} folds")]
    TooFewPerClass { class: u8, count: usize, k: usize },
    #[error("label {value} at row {row} is not 0 or 1")]
    NonBinaryLabel { row: usize, value: u8 },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("matrix has no `{META_PREFIX}` columns")]
    NoMetaColumns,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: GbdtError,
    },
    #[error("fold plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

/// Shuffle each class by seed and deal round-robin, continuing the deal
/// from positives into negatives so that fold sizes differ by at most one.
pub fn make_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan, StackError> {
    if k < 2 {
        return Err(StackError::InvalidK(k));
    }
    if let Some(row) = labels.iter().position(|&y| y > 1) {
        return Err(StackError::NonBinaryLabel {
            row,
            value: labels[row],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [1u8, 0] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == class).collect();
        if rows.len() < k {
            return Err(StackError::TooFewPerClass {
                class,
                count: rows.len(),
                k,
            });
        }
        rows.shuffle(&mut rng);
        for r in rows {
            assignment[r] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// Like [`make_folds`] but keyed by customer id, so the fold of a customer
/// does not depend on the row order of the input.
pub fn make_folds_keyed(ids: &[String], labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan, StackError> {
    if ids.len() != labels.len() {
        return Err(StackError::LengthMismatch {
            expected: ids.len(),
            actual: labels.len(),
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let sorted_labels: Vec<u8> = order.iter().map(|&r| labels[r]).collect();
    let sorted = make_folds(&sorted_labels, k, seed)?;
    let mut assignment = vec![0; ids.len()];
    for (pos, &r) in order.iter().enumerate() {
        assignment[r] = sorted.assignment[pos];
    }
    Ok(FoldPlan { k, seed, assignment })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.assignment[r] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.assignment[r] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    fn check(&self, rows: usize) -> Result<(), StackError> {
        if self.len() != rows {
            return Err(StackError::LengthMismatch {
                expected: rows,
                actual: self.len(),
            });
        }
        if let Some(&f) = self.assignment.iter().find(|&&f| f >= self.k) {
            return Err(StackError::Plan(format!("fold index {f} >= k = {}", self.k)));
        }
        Ok(())
    }

    /// `row_index,fold` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let mut out = String::from("row_index,fold\n");
        for (r, f) in self.assignment.iter().enumerate() {
            out.push_str(&format!("{r},{f}\n"));
        }
        std::fs::write(path, out).map_err(|e| crate::Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, seed: u64) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let mut assignment = Vec::new();
        for (i, line) in text.lines().skip(1).enumerate() {
            let parsed = line
                .split_once(',')
                .and_then(|(r, f)| Some((r.trim().parse::<usize>().ok()?, f.trim().parse::<usize>().ok()?)));
            match parsed {
                Some((r, f)) if r == i => assignment.push(f),
                _ => return Err(crate::Error::format(path, format!("line {}: expected `{i},<fold>`", i + 2))),
            }
        }
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(StackError::InvalidK(k).into());
        }
        Ok(Self { k, seed, assignment })
    }
}

/// Out-of-fold predictions, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct OofVector {
    pub predictions: Vec<f64>,
    pub fold_of_row: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub fold: usize,
    /// Rows the model was trained on, ascending.
    pub train_rows: Vec<usize>,
    pub model: BoostedModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OofResult {
    pub oof: OofVector,
    pub models: Vec<FoldModel>,
}

impl OofResult {
    pub fn boosted_models(&self) -> Vec<BoostedModel> {
        self.models.iter().map(|m| m.model.clone()).collect()
    }
}

/// Train one model per fold on the complement rows and predict the fold.
///
/// Training rows are ordered by customer id before fitting, so the result
/// per customer does not depend on input row order.
pub fn train_oof(
    matrix: &FeatureMatrix,
    labels: &[u8],
    plan: &FoldPlan,
    config: &TrainConfig,
) -> Result<OofResult, StackError> {
    let n = matrix.n_rows();
    if labels.len() != n {
        return Err(StackError::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    plan.check(n)?;
    let ids = matrix.customer_ids();

    let fits: Vec<Result<(FoldModel, Vec<usize>, Vec<f64>), StackError>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train_rows = plan.train_rows(fold);
            let mut ordered = train_rows.clone();
            ordered.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
            let sub = matrix.select_rows(&ordered);
            let sub_labels: Vec<u8> = ordered.iter().map(|&r| labels[r]).collect();
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(fold as u64),
                ..config.clone()
            };
            let fail = |source| StackError::Fold { fold, source };
            let model = gbdt::train(&sub, &sub_labels, &cfg, None).map_err(fail)?;
            let held = plan.fold_rows(fold);
            let preds = model.predict(&matrix.select_rows(&held)).map_err(fail)?;
            Ok((
                FoldModel {
                    fold,
                    train_rows,
                    model,
                },
                held,
                preds,
            ))
        })
        .collect();

    let mut predictions = vec![0.0; n];
    let mut models = Vec::with_capacity(plan.k);
    for fit in fits {
        let (model, held, preds) = fit?;
        for (r, p) in held.into_iter().zip(preds) {
            predictions[r] = p;
        }
        models.push(model);
    }
    Ok(OofResult {
        oof: OofVector {
            predictions,
            fold_of_row: plan.assignment.clone(),
        },
        models,
    })
}

/// Append one `meta_<i>` column per prediction vector, numbering after any
/// meta columns already present.
pub fn append_meta(matrix: &FeatureMatrix, oof_columns: &[&[f64]]) -> Result<FeatureMatrix, StackError> {
    let n = matrix.n_rows();
    if let Some(bad) = oof_columns.iter().find(|c| c.len() != n) {
        return Err(StackError::LengthMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    let start = meta_columns(matrix).len();
    let cols = oof_columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let values = c.iter().map(|&p| to_open_unit_f32(p)).collect();
            (format!("{META_PREFIX}{}", start + i), values)
        })
        .collect();
    Ok(matrix.append_columns(cols)?)
}

/// Narrow a probability to f32 without landing on 0 or 1.
fn to_open_unit_f32(p: f64) -> f32 {
    const BELOW_ONE: f32 = 1.0 - f32::EPSILON / 2.0;
    (p as f32).clamp(f32::MIN_POSITIVE, BELOW_ONE)
}

pub fn meta_columns(matrix: &FeatureMatrix) -> Vec<&str> {
    matrix
        .column_names()
        .iter()
        .filter(|c| c.starts_with(META_PREFIX))
        .map(String::as_str)
        .collect()
}

/// Mean of the fold models' probabilities, clamped to the member range.
pub fn predict_with_fold_models(models: &[BoostedModel], matrix: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
    let outputs: Vec<Vec<f64>> = models.iter().map(|m| m.predict(matrix)).collect::<Result<_, _>>()?;
    let k = outputs.len() as f64;
    Ok((0..matrix.n_rows())
        .map(|r| {
            let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for o in &outputs {
                sum += o[r];
                lo = lo.min(o[r]);
                hi = hi.max(o[r]);
            }
            (sum / k).clamp(lo, hi)
        })
        .collect())
}

/// Second-stage model over features plus meta columns, trained out-of-fold
/// on the same plan as the base members.
pub fn train_meta(
    augmented: &FeatureMatrix,
    labels: &[u8],
    plan: &FoldPlan,
    config: &TrainConfig,
) -> Result<OofResult, StackError> {
    if meta_columns(augmented).is_empty() {
        return Err(StackError::NoMetaColumns);
    }
    train_oof(augmented, labels, plan, config)
}

/// Single model on all rows, for the refit test path.
pub fn refit_full(matrix: &FeatureMatrix, labels: &[u8], config: &TrainConfig) -> Result<BoostedModel, GbdtError> {
    gbdt::train(matrix, labels, config, None)
}
