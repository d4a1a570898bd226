//! Composite rank metric `M = 0.5 * (G + D)`.
//!
//! `G` is the weighted normalized Gini coefficient, defined here as
//! `2 * auc_w - 1` where `auc_w` is the weighted pairwise AUC with ties
//! scored one half. `D` is the share of positives captured among the
//! top-ranked rows whose cumulative weight stays within 4% of the total.
//! Negative rows carry weight 20 (the inverse of a 5% negative subsample),
//! positives weight 1.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weight given to label-0 rows by default.
pub const NEGATIVE_WEIGHT: f64 = 20.0;
/// Fraction of total weight used for the default-capture cutoff.
pub const CAPTURE_FRACTION: f64 = 0.04;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("labels contain a single class; both 0 and 1 are required")]
    SingleClass,
    #[error("labels contain no positive rows")]
    NoPositives,
    #[error("{labels} labels but {preds} predictions")]
    LengthMismatch { labels: usize, preds: usize },
    #[error("label {value} at row {row} is not 0 or 1")]
    NonBinaryLabel { row: usize, value: u8 },
    #[error("prediction at row {0} is not finite")]
    NonFinitePrediction(usize),
}

/// Label weighting used by both sub-metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub negative_weight: f64,
    pub capture_fraction: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            negative_weight: NEGATIVE_WEIGHT,
            capture_fraction: CAPTURE_FRACTION,
        }
    }
}

impl MetricConfig {
    pub fn weight_of(&self, label: u8) -> f64 {
        if label == 0 {
            self.negative_weight
        } else {
            1.0
        }
    }
}

/// Weight of a single label under the default configuration.
pub fn weight_of(label: u8) -> f64 {
    MetricConfig::default().weight_of(label)
}

/// Sum of label weights under the default configuration.
pub fn total_weight(labels: &[u8]) -> f64 {
    labels.iter().map(|&y| weight_of(y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "G", with = "crate::sig17")]
    pub gini: f64,
    #[serde(rename = "D", with = "crate::sig17")]
    pub capture: f64,
    #[serde(rename = "M", with = "crate::sig17")]
    pub score: f64,
    #[serde(with = "crate::sig17")]
    pub auc_w: f64,
    pub n_rows: usize,
    pub n_pos: usize,
    #[serde(with = "crate::sig17")]
    pub total_weight: f64,
}

fn validate(labels: &[u8], preds: &[f64]) -> Result<(), MetricError> {
    if labels.len() != preds.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            preds: preds.len(),
        });
    }
    for (row, &y) in labels.iter().enumerate() {
        if y > 1 {
            return Err(MetricError::NonBinaryLabel { row, value: y });
        }
    }
    if let Some(row) = preds.iter().position(|p| !p.is_finite()) {
        return Err(MetricError::NonFinitePrediction(row));
    }
    Ok(())
}

/// Row order by prediction descending, ties by ascending row index.
fn ranking(preds: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .partial_cmp(&preds[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

pub fn weighted_auc(labels: &[u8], preds: &[f64]) -> Result<f64, MetricError> {
    weighted_auc_with(&MetricConfig::default(), labels, preds)
}

pub fn weighted_auc_with(
    config: &MetricConfig,
    labels: &[u8],
    preds: &[f64],
) -> Result<f64, MetricError> {
    validate(labels, preds)?;
    auc_sorted(config, labels, preds, &ranking(preds))
}

fn auc_sorted(
    config: &MetricConfig,
    labels: &[u8],
    preds: &[f64],
    order: &[usize],
) -> Result<f64, MetricError> {
    let (mut w_pos, mut w_neg) = (0.0, 0.0);
    for &y in labels {
        if y == 1 {
            w_pos += 1.0;
        } else {
            w_neg += config.negative_weight;
        }
    }
    if w_pos == 0.0 || w_neg == 0.0 {
        return Err(MetricError::SingleClass);
    }

    // Walk tie groups from the highest prediction down. Every positive in a
    // group beats the negatives in all lower groups and ties with the
    // negatives of its own group.
    let mut neg_above = 0.0;
    let mut num = 0.0;
    let mut i = 0;
    while i < order.len() {
        let p = preds[order[i]];
        let (mut gp, mut gn) = (0.0, 0.0);
        while i < order.len() && preds[order[i]] == p {
            let y = labels[order[i]];
            if y == 1 {
                gp += 1.0;
            } else {
                gn += config.negative_weight;
            }
            i += 1;
        }
        let neg_below = w_neg - neg_above - gn;
        num += gp * (neg_below + 0.5 * gn);
        neg_above += gn;
    }
    Ok(num / (w_pos * w_neg))
}

pub fn normalized_weighted_gini(labels: &[u8], preds: &[f64]) -> Result<f64, MetricError> {
    Ok(2.0 * weighted_auc(labels, preds)? - 1.0)
}

pub fn default_rate_at_4pct(labels: &[u8], preds: &[f64]) -> Result<f64, MetricError> {
    default_rate_with(&MetricConfig::default(), labels, preds)
}

pub fn default_rate_with(
    config: &MetricConfig,
    labels: &[u8],
    preds: &[f64],
) -> Result<f64, MetricError> {
    validate(labels, preds)?;
    capture_sorted(config, labels, &ranking(preds))
}

fn capture_sorted(config: &MetricConfig, labels: &[u8], order: &[usize]) -> Result<f64, MetricError> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let total: f64 = labels.iter().map(|&y| config.weight_of(y)).sum();
    let cutoff = config.capture_fraction * total;
    let mut running = 0.0;
    let mut captured = 0usize;
    for &row in order {
        running += config.weight_of(labels[row]);
        if running > cutoff {
            break;
        }
        if labels[row] == 1 {
            captured += 1;
        }
    }
    Ok(captured as f64 / n_pos as f64)
}

pub fn amex_metric(labels: &[u8], preds: &[f64]) -> Result<MetricReport, MetricError> {
    amex_metric_with(&MetricConfig::default(), labels, preds)
}

pub fn amex_metric_with(
    config: &MetricConfig,
    labels: &[u8],
    preds: &[f64],
) -> Result<MetricReport, MetricError> {
    validate(labels, preds)?;
    let order = ranking(preds);
    let auc_w = auc_sorted(config, labels, preds, &order)?;
    let capture = capture_sorted(config, labels, &order)?;
    let gini = 2.0 * auc_w - 1.0;
    Ok(MetricReport {
        gini,
        capture,
        score: 0.5 * (gini + capture),
        auc_w,
        n_rows: labels.len(),
        n_pos: labels.iter().filter(|&&y| y == 1).count(),
        total_weight: labels.iter().map(|&y| config.weight_of(y)).sum(),
    })
}

/// Shorthand for the `M` value alone.
pub fn score(labels: &[u8], preds: &[f64]) -> Result<f64, MetricError> {
    amex_metric(labels, preds).map(|r| r.score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(P*N) pairwise definition, used as the oracle for the sweep.
    fn pairwise_auc(labels: &[u8], preds: &[f64]) -> f64 {
        let (mut num, mut wp, mut wn) = (0.0, 0.0, 0.0);
        for (i, &yi) in labels.iter().enumerate() {
            if yi == 1 {
                wp += 1.0;
            } else {
                wn += 20.0;
            }
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                let s = if preds[i] > preds[j] {
                    1.0
                } else if preds[i] == preds[j] {
                    0.5
                } else {
                    0.0
                };
                num += 20.0 * s;
            }
        }
        num / (wp * wn)
    }

    #[test]
    fn weights() {
        assert_eq!(weight_of(0), 20.0);
        assert_eq!(weight_of(1), 1.0);
        assert_eq!(total_weight(&[1, 0, 0]), 41.0);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(weighted_auc(&[1, 0, 0], &[0.9, 0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(weighted_auc(&[1, 0, 1, 0], &[0.5; 4]).unwrap(), 0.5);
        let labels = [1, 0, 1, 0];
        let preds = [0.8, 0.7, 0.6, 0.5];
        assert_eq!(pairwise_auc(&labels, &preds), 0.75);
        assert_eq!(weighted_auc(&labels, &preds).unwrap(), 0.75);
        assert_eq!(normalized_weighted_gini(&labels, &preds).unwrap(), 0.5);
        assert_eq!(normalized_weighted_gini(&[1, 0, 0], &[0.1, 0.5, 0.9]).unwrap(), -1.0);
    }

    #[test]
    fn capture_cases() {
        // cutoff 0.04 * 41 = 1.64: only the positive fits.
        assert_eq!(default_rate_at_4pct(&[1, 0, 0], &[0.9, 0.2, 0.1]).unwrap(), 1.0);
        // first ranked row has weight 20 > 1.64.
        assert_eq!(default_rate_at_4pct(&[1, 0, 0], &[0.1, 0.2, 0.9]).unwrap(), 0.0);
        // cutoff 0.04 * 42 = 1.68.
        assert_eq!(
            default_rate_at_4pct(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.5]).unwrap(),
            0.5
        );
    }

    #[test]
    fn capture_ties_break_by_row_index() {
        // Two positives tied with a negative; rows taken in index order.
        let labels = [0, 1, 1, 0, 0, 0, 0, 0];
        let preds = [0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1];
        // total = 2 + 6*20 = 122, cutoff 4.88: row 0 (w 20) already exceeds.
        assert_eq!(default_rate_at_4pct(&labels, &preds).unwrap(), 0.0);
        let labels = [1, 0, 1, 0, 0, 0, 0, 0];
        assert_eq!(default_rate_at_4pct(&labels, &preds).unwrap(), 0.5);
    }

    #[test]
    fn composite_cases() {
        let r = amex_metric(&[1, 0, 0], &[0.9, 0.2, 0.1]).unwrap();
        assert_eq!((r.gini, r.capture, r.score), (1.0, 1.0, 1.0));
        let r = amex_metric(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.5]).unwrap();
        assert_eq!((r.gini, r.capture, r.score), (0.5, 0.5, 0.5));
        assert_eq!(r.n_rows, 4);
        assert_eq!(r.n_pos, 2);
        assert_eq!(r.total_weight, 42.0);
    }

    #[test]
    fn errors() {
        assert_eq!(weighted_auc(&[1, 1], &[0.1, 0.2]), Err(MetricError::SingleClass));
        assert_eq!(default_rate_at_4pct(&[0, 0], &[0.1, 0.2]), Err(MetricError::NoPositives));
        assert!(matches!(
            amex_metric(&[0, 1], &[0.1]),
            Err(MetricError::LengthMismatch { .. })
        ));
        assert_eq!(
            amex_metric(&[0, 1], &[0.1, f64::NAN]),
            Err(MetricError::NonFinitePrediction(1))
        );
        assert!(matches!(
            amex_metric(&[0, 2], &[0.1, 0.2]),
            Err(MetricError::NonBinaryLabel { row: 1, value: 2 })
        ));
    }

    #[test]
    fn report_json_uses_seventeen_digits() {
        let r = amex_metric(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.5]).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with(r#"{"G":5.0000000000000000e-1,"D":"#), "{json}");
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    fn instance() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u32..40, n),
            )
                .prop_map(|(mut y, p)| {
                    y[0] = 0;
                    y[1] = 1;
                    (y, p.into_iter().map(|v| f64::from(v) / 40.0).collect())
                })
        })
    }

    proptest! {
        #[test]
        fn sweep_matches_pairwise((labels, preds) in instance()) {
            let sweep = weighted_auc(&labels, &preds).unwrap();
            prop_assert!((sweep - pairwise_auc(&labels, &preds)).abs() <= 1e-12);
        }

        #[test]
        fn bounds_and_identities((labels, preds) in instance()) {
            let r = amex_metric(&labels, &preds).unwrap();
            prop_assert_eq!(r.score, 0.5 * (r.gini + r.capture));
            prop_assert_eq!(r.gini, 2.0 * r.auc_w - 1.0);
            prop_assert!((-0.5..=1.0).contains(&r.score));
            prop_assert!((0.0..=1.0).contains(&r.capture));
        }

        #[test]
        fn reversal_symmetry(labels in proptest::collection::vec(0u8..2, 2..100), seed in 0u64..1000) {
            let mut labels = labels;
            labels[0] = 0;
            labels[1] = 1;
            // Distinct predictions so there are no ties.
            let preds: Vec<f64> = (0..labels.len())
                .map(|i| ((i as u64 * 7919 + seed * 104729) % 100_003) as f64 + i as f64 * 1e-6)
                .collect();
            let neg: Vec<f64> = preds.iter().map(|p| -p).collect();
            let a = weighted_auc(&labels, &preds).unwrap();
            let b = weighted_auc(&labels, &neg).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn capture_monotone_in_positive_score((labels, preds) in instance(), bump in 0.0f64..1.0) {
            let d0 = default_rate_at_4pct(&labels, &preds).unwrap();
            let pos = labels.iter().position(|&y| y == 1).unwrap();
            let mut raised = preds.clone();
            raised[pos] += bump;
            let d1 = default_rate_at_4pct(&labels, &raised).unwrap();
            prop_assert!(d1 >= d0);
        }
    }
}
