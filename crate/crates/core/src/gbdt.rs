//! Histogram gradient-boosted decision trees for binary classification.
//!
//! Training minimises logistic loss with second-order (Newton) leaf values.
//! Features are quantile-binned once into at most 255 bins per column plus
//! one reserved missing bin; every split scans cumulative gradient/hessian
//! histograms and tries sending missing values to either side. Trees grow
//! best-first up to `max_leaves`. Optional gradient-based one-side sampling
//! (GOSS) keeps the largest-gradient rows and a uniform sample of the rest,
//! re-weighting the sampled rows by `(1 - a) / b`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::metric::{self, MetricError};
use crate::sig17::Sig17;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("training matrix needs at least 2 rows")]
    EmptyMatrix,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("{labels} labels for {rows} rows")]
    LabelLength { labels: usize, rows: usize },
    #[error("label {value} at row {row} is not 0 or 1")]
    NonBinaryLabel { row: usize, value: u8 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("GOSS with a < 1 needs b > 0")]
    DegenerateSampling,
    #[error("matrix has no column `{0}` used by the model")]
    MissingFeatureColumn(String),
    #[error("holdout evaluation: {0}")]
    Holdout(#[from] MetricError),
    #[error("model file: {0}")]
    Model(String),
}

/// Learner hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    /// Minimum hessian mass per child.
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    /// Fraction of rows kept by largest |gradient|; 1 disables GOSS.
    pub goss_a: f64,
    /// Fraction of rows sampled from the remainder.
    pub goss_b: f64,
    pub max_bins: usize,
    pub seed: u64,
    /// Stop when the holdout metric has not improved for this many rounds.
    pub early_stop_rounds: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            max_leaves: 31,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            goss_a: 1.0,
            goss_b: 0.0,
            max_bins: 255,
            seed: 0,
            early_stop_rounds: None,
        }
    }
}

impl TrainConfig {
    /// Enable GOSS with the usual 20% top / 10% random split.
    pub fn with_goss(mut self) -> Self {
        self.goss_a = 0.2;
        self.goss_b = 0.1;
        self
    }

    pub fn goss_enabled(&self) -> bool {
        self.goss_a < 1.0
    }

    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |msg: String| Err(GbdtError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.max_leaves < 2 {
            return bad(format!("max_leaves {} < 2", self.max_leaves));
        }
        if !(self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be >= 0".into());
        }
        if !(self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.goss_a) || !(0.0..=1.0).contains(&self.goss_b) {
            return bad("goss_a and goss_b must lie in [0, 1]".into());
        }
        if self.goss_a + self.goss_b > 1.0 + 1e-12 {
            return bad(format!("goss_a + goss_b = {} > 1", self.goss_a + self.goss_b));
        }
        if !(2..=255).contains(&self.max_bins) {
            return bad(format!("max_bins {} outside 2..=255", self.max_bins));
        }
        if self.early_stop_rounds == Some(0) {
            return bad("early_stop_rounds must be positive".into());
        }
        if self.goss_enabled() && self.goss_b == 0.0 {
            return Err(GbdtError::DegenerateSampling);
        }
        Ok(())
    }
}

/// Per-column quantile bin edges.
///
/// `edges[c][b]` is the inclusive upper bound of bin `b`; the last edge is
/// `+inf`. Missing values go to bin `edges[c].len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    columns: Vec<String>,
    edges: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit(matrix: &FeatureMatrix, max_bins: usize) -> Result<Self, GbdtError> {
        if matrix.n_rows() == 0 {
            return Err(GbdtError::EmptyMatrix);
        }
        if !(2..=255).contains(&max_bins) {
            return Err(GbdtError::InvalidConfig(format!("max_bins {max_bins} outside 2..=255")));
        }
        let edges = (0..matrix.n_cols())
            .into_par_iter()
            .map(|c| {
                let mut values: Vec<f64> = (0..matrix.n_rows())
                    .map(|r| f64::from(matrix.get(r, c)))
                    .filter(|v| !v.is_nan())
                    .collect();
                values.sort_by(f64::total_cmp);
                quantile_edges(&values, max_bins)
            })
            .collect();
        Ok(Self {
            columns: matrix.column_names().to_vec(),
            edges,
        })
    }

    pub fn n_bins(&self, col: usize) -> usize {
        self.edges[col].len()
    }

    pub fn missing_bin(&self, col: usize) -> u8 {
        self.edges[col].len() as u8
    }

    pub fn edges(&self, col: usize) -> &[f64] {
        &self.edges[col]
    }

    pub fn bin(&self, col: usize, value: f32) -> u8 {
        if value.is_nan() {
            return self.missing_bin(col);
        }
        let v = f64::from(value);
        self.edges[col].partition_point(|&e| e < v) as u8
    }

    /// Column-major bin codes for a matrix with the same column layout.
    fn bin_matrix(&self, matrix: &FeatureMatrix) -> Vec<Vec<u8>> {
        (0..self.columns.len())
            .into_par_iter()
            .map(|c| (0..matrix.n_rows()).map(|r| self.bin(c, matrix.get(r, c))).collect())
            .collect()
    }
}

/// `sorted` holds the non-missing values of one column in ascending order.
fn quantile_edges(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut distinct = sorted.to_vec();
    distinct.dedup();
    let mut edges = Vec::new();
    if distinct.len() <= max_bins {
        if let Some((_, init)) = distinct.split_last() {
            edges.extend_from_slice(init);
        }
    } else {
        let top = sorted[n - 1];
        for i in 1..max_bins {
            let rank = (i * n).div_ceil(max_bins);
            let e = sorted[rank - 1];
            if e < top && edges.last().is_none_or(|&last| e > last) {
                edges.push(e);
            }
        }
    }
    edges.push(f64::INFINITY);
    edges
}

/// First and second derivative of logistic loss for one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientPair {
    pub g: f64,
    pub h: f64,
}

pub fn sigmoid(score: f64) -> f64 {
    1.0 / (1.0 + (-score).exp())
}

pub fn logistic_grad_hess(labels: &[u8], scores: &[f64]) -> Vec<GradientPair> {
    labels
        .iter()
        .zip(scores)
        .map(|(&y, &s)| {
            let p = sigmoid(s);
            GradientPair {
                g: p - f64::from(y),
                h: p * (1.0 - p),
            }
        })
        .collect()
}

/// Mean logistic loss of raw scores.
pub fn log_loss(labels: &[u8], scores: &[f64]) -> f64 {
    let total: f64 = labels
        .iter()
        .zip(scores)
        .map(|(&y, &s)| {
            // softplus(s) - y * s, stable for large |s|
            let softplus = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            softplus - f64::from(y) * s
        })
        .sum();
    total / labels.len() as f64
}

/// Rows kept by one GOSS draw, ascending, with their gradient multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    pub rows: Vec<usize>,
    pub multipliers: Vec<f64>,
}

fn fraction_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

pub fn goss_sample(grads: &[GradientPair], a: f64, b: f64, seed: u64) -> Result<GossSample, GbdtError> {
    goss_sample_with(grads, a, b, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn goss_sample_with(
    grads: &[GradientPair],
    a: f64,
    b: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GossSample, GbdtError> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a + b > 1.0 + 1e-12 {
        return Err(GbdtError::InvalidConfig(format!("GOSS fractions a={a}, b={b}")));
    }
    let n = grads.len();
    if a >= 1.0 {
        return Ok(GossSample {
            rows: (0..n).collect(),
            multipliers: vec![1.0; n],
        });
    }
    if b <= 0.0 {
        return Err(GbdtError::DegenerateSampling);
    }
    let mut by_grad: Vec<usize> = (0..n).collect();
    by_grad.sort_by(|&i, &j| {
        grads[j]
            .g
            .abs()
            .total_cmp(&grads[i].g.abs())
            .then(i.cmp(&j))
    });
    let top_n = fraction_count(a, n);
    let rest = &by_grad[top_n..];
    let rand_n = fraction_count(b, n).min(rest.len());
    let amplify = (1.0 - a) / b;

    let mut chosen: Vec<(usize, f64)> = by_grad[..top_n].iter().map(|&r| (r, 1.0)).collect();
    chosen.extend(
        index::sample(rng, rest.len(), rand_n)
            .into_iter()
            .map(|k| (rest[k], amplify)),
    );
    chosen.sort_by_key(|&(r, _)| r);
    Ok(GossSample {
        rows: chosen.iter().map(|&(r, _)| r).collect(),
        multipliers: chosen.iter().map(|&(_, m)| m).collect(),
    })
}

/// One tree node as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        column: String,
        /// Rows whose bin is at most this index go left.
        bin: u8,
        /// Upper edge of `bin`; raw values `<= threshold` go left.
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceKind {
    AverageGain,
    TotalGain,
}

impl std::str::FromStr for ImportanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average_gain" | "average-gain" => Ok(ImportanceKind::AverageGain),
            "total_gain" | "total-gain" => Ok(ImportanceKind::TotalGain),
            other => Err(format!("unknown importance kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Log-odds of the training label mean.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    split_records: Vec<(String, Sig17)>,
    /// Training column names.
    pub features: Vec<String>,
}

/// Split gains are recorded on a 2^-24 grid so that importance totals
/// add up exactly in any summation order.
fn quantize_gain(gain: f64) -> f64 {
    const SCALE: f64 = (1u64 << 24) as f64;
    (gain * SCALE).round() / SCALE
}

enum Compiled {
    Split {
        col: usize,
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

impl BoostedModel {
    /// Constant model predicting the label mean.
    pub fn constant(base_score: f64, learning_rate: f64, features: Vec<String>) -> Self {
        Self {
            base_score,
            learning_rate,
            trees: Vec::new(),
            split_records: Vec::new(),
            features,
        }
    }

    /// (column, gain) of every split in training order.
    pub fn split_records(&self) -> impl Iterator<Item = (&str, f64)> {
        self.split_records.iter().map(|(c, g)| (c.as_str(), g.0))
    }

    fn compile(&self, matrix: &FeatureMatrix) -> Result<Vec<Vec<Compiled>>, GbdtError> {
        let lookup = |name: &str| {
            matrix
                .column_index(name)
                .ok_or_else(|| GbdtError::MissingFeatureColumn(name.to_string()))
        };
        self.trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .map(|n| match n {
                        Node::Split {
                            column,
                            threshold,
                            missing_left,
                            left,
                            right,
                            ..
                        } => Ok(Compiled::Split {
                            col: lookup(column)?,
                            threshold: *threshold,
                            missing_left: *missing_left,
                            left: *left,
                            right: *right,
                        }),
                        Node::Leaf { value, .. } => Ok(Compiled::Leaf(*value)),
                    })
                    .collect()
            })
            .collect()
    }

    /// Raw log-odds scores.
    pub fn predict_raw(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
        let trees = self.compile(matrix)?;
        Ok((0..matrix.n_rows())
            .into_par_iter()
            .map(|r| {
                let row = matrix.row(r);
                let mut score = self.base_score;
                for tree in &trees {
                    let mut i = 0;
                    loop {
                        match &tree[i] {
                            Compiled::Leaf(v) => {
                                score += v;
                                break;
                            }
                            Compiled::Split {
                                col,
                                threshold,
                                missing_left,
                                left,
                                right,
                            } => {
                                let v = row[*col];
                                let go_left = if v.is_nan() {
                                    *missing_left
                                } else {
                                    f64::from(v) <= *threshold
                                };
                                i = if go_left { *left } else { *right };
                            }
                        }
                    }
                }
                score
            })
            .collect())
    }

    /// Default probabilities, kept strictly inside (0, 1).
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
        Ok(self
            .predict_raw(matrix)?
            .into_iter()
            .map(|s| sigmoid(s.clamp(-MAX_SCORE, MAX_SCORE)))
            .collect())
    }

    /// Gain importance per column; columns never split on are absent.
    pub fn importance(&self, kind: ImportanceKind) -> BTreeMap<String, f64> {
        let mut totals: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (col, gain) in self.split_records() {
            let e = totals.entry(col.to_string()).or_insert((0.0, 0));
            e.0 += gain;
            e.1 += 1;
        }
        totals
            .into_iter()
            .map(|(c, (total, n))| {
                let v = match kind {
                    ImportanceKind::TotalGain => total,
                    ImportanceKind::AverageGain => total / n as f64,
                };
                (c, v)
            })
            .collect()
    }

    /// Importance divided by its grand total.
    pub fn normalized_importance(&self, kind: ImportanceKind) -> BTreeMap<String, f64> {
        normalize(self.importance(kind))
    }

    pub fn to_json(&self) -> Result<String, GbdtError> {
        serde_json::to_string_pretty(self).map_err(|e| GbdtError::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, GbdtError> {
        serde_json::from_str(text).map_err(|e| GbdtError::Model(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Self::from_json(&text)?)
    }
}

pub(crate) fn normalize(map: BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = map.values().sum();
    if total <= 0.0 {
        return map;
    }
    map.into_iter().map(|(c, v)| (c, v / total)).collect()
}

/// Scores are clamped here before the logistic transform.
const MAX_SCORE: f64 = 36.0;

/// Labelled validation rows for early stopping.
#[derive(Debug, Clone, Copy)]
pub struct Holdout<'a> {
    pub matrix: &'a FeatureMatrix,
    pub labels: &'a [u8],
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Training log-loss before any tree, then after each round.
    pub train_log_loss: Vec<f64>,
    /// Holdout metric after each round, when a holdout was given.
    pub holdout_score: Vec<f64>,
    /// Number of trees kept.
    pub best_rounds: usize,
}

pub fn train(
    matrix: &FeatureMatrix,
    labels: &[u8],
    config: &TrainConfig,
    valid: Option<Holdout<'_>>,
) -> Result<BoostedModel, GbdtError> {
    train_with_history(matrix, labels, config, valid).map(|(m, _)| m)
}

#[derive(Debug, Clone, Copy, Default)]
struct Gh {
    g: f64,
    h: f64,
    n: u32,
}

impl Gh {
    fn add(&mut self, o: Gh) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }

    fn minus(self, o: Gh) -> Gh {
        Gh {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

/// Gradient statistics per (feature, bin), features laid out back to back.
struct Histogram(Vec<Gh>);

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    bin: u8,
    missing_left: bool,
    gain: f64,
    left: Gh,
    right: Gh,
}

enum GrowNode {
    Split {
        feature: usize,
        bin: u8,
        missing_left: bool,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

struct OpenLeaf {
    node: usize,
    rows: Vec<u32>,
    hist: Histogram,
    best: SplitChoice,
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    mapper: &'a BinMapper,
    /// Start of each feature's slots in a histogram; one extra end entry.
    offsets: Vec<usize>,
    gw: &'a [f64],
    hw: &'a [f64],
    config: &'a TrainConfig,
}

impl<'a> Grower<'a> {
    fn new(bins: &'a [Vec<u8>], mapper: &'a BinMapper, gw: &'a [f64], hw: &'a [f64], config: &'a TrainConfig) -> Self {
        let mut offsets = vec![0];
        for f in 0..bins.len() {
            offsets.push(offsets[f] + mapper.n_bins(f) + 1);
        }
        Self {
            bins,
            mapper,
            offsets,
            gw,
            hw,
            config,
        }
    }

    fn feature_slices<'h, T>(&self, mut data: &'h mut [T]) -> Vec<&'h mut [T]> {
        let mut out = Vec::with_capacity(self.bins.len());
        for f in 0..self.bins.len() {
            let (head, tail) = data.split_at_mut(self.offsets[f + 1] - self.offsets[f]);
            out.push(head);
            data = tail;
        }
        out
    }

    fn histogram(&self, rows: &[u32]) -> Histogram {
        let mut data = vec![Gh::default(); self.offsets[self.bins.len()]];
        self.feature_slices(&mut data)
            .into_par_iter()
            .zip(self.bins.par_iter())
            .for_each(|(hist, col)| {
                for &r in rows {
                    let r = r as usize;
                    let slot = &mut hist[col[r] as usize];
                    slot.g += self.gw[r];
                    slot.h += self.hw[r];
                    slot.n += 1;
                }
            });
        Histogram(data)
    }

    /// Turn `parent` into the histogram of its larger child.
    fn subtract_into(&self, parent: &mut Histogram, small: &Histogram) {
        self.feature_slices(&mut parent.0)
            .into_par_iter()
            .enumerate()
            .for_each(|(f, p)| {
                let s = &small.0[self.offsets[f]..self.offsets[f + 1]];
                for (a, b) in p.iter_mut().zip(s) {
                    *a = a.minus(*b);
                }
            });
    }

    fn leaf_weight(&self, s: Gh) -> f64 {
        -s.g / (s.h + self.config.l2_lambda)
    }

    fn best_split(&self, hist: &Histogram) -> Option<SplitChoice> {
        let lambda = self.config.l2_lambda;
        let mcw = self.config.min_child_weight;
        let score = |s: Gh| s.g * s.g / (s.h + lambda);
        let candidates: Vec<Option<SplitChoice>> = (0..self.bins.len())
            .into_par_iter()
            .map(|f| {
                let h = &hist.0[self.offsets[f]..self.offsets[f + 1]];
                let nb = h.len() - 1;
                if nb < 2 {
                    return None;
                }
                let missing = h[nb];
                let mut total = missing;
                for b in &h[..nb] {
                    total.add(*b);
                }
                let parent = score(total);
                let mut best: Option<SplitChoice> = None;
                let mut acc = Gh::default();
                for t in 0..nb - 1 {
                    acc.add(h[t]);
                    // an empty bin repeats the partition of the bin before it
                    if t > 0 && h[t].n == 0 {
                        continue;
                    }
                    let sides: &[bool] = if missing.n > 0 { &[false, true] } else { &[false] };
                    for &missing_left in sides {
                        let left = if missing_left {
                            let mut l = acc;
                            l.add(missing);
                            l
                        } else {
                            acc
                        };
                        let right = total.minus(left);
                        if left.n == 0 || right.n == 0 || left.h < mcw || right.h < mcw {
                            continue;
                        }
                        let gain = 0.5 * (score(left) + score(right) - parent);
                        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                            best = Some(SplitChoice {
                                feature: f,
                                bin: t as u8,
                                missing_left,
                                gain,
                                left,
                                right,
                            });
                        }
                    }
                }
                best
            })
            .collect();
        // earliest feature wins ties
        candidates
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<SplitChoice>, c| match acc {
                Some(a) if a.gain >= c.gain => Some(a),
                _ => Some(c),
            })
    }

    fn goes_left(&self, split: &SplitChoice, row: usize) -> bool {
        let b = self.bins[split.feature][row];
        if b == self.mapper.missing_bin(split.feature) {
            split.missing_left
        } else {
            b <= split.bin
        }
    }

    /// Grow one tree over `rows`; returns nodes and (feature, gain) records.
    fn grow(&self, rows: Vec<u32>) -> (Vec<GrowNode>, Vec<(usize, f64)>) {
        let hist = self.histogram(&rows);
        let total = sum_hist(&hist.0[..self.offsets[1]]);
        let mut nodes = vec![GrowNode::Leaf {
            value: 0.0,
            cover: total.h,
        }];
        let mut sums = vec![total];
        let mut records = Vec::new();
        let mut open = Vec::new();
        if let Some(best) = self.best_split(&hist) {
            open.push(OpenLeaf {
                node: 0,
                rows,
                hist,
                best,
            });
        }
        let mut n_leaves = 1;

        while n_leaves < self.config.max_leaves && !open.is_empty() {
            let mut pick = 0;
            for (i, l) in open.iter().enumerate().skip(1) {
                let p = &open[pick];
                if l.best.gain > p.best.gain || (l.best.gain == p.best.gain && l.node < p.node) {
                    pick = i;
                }
            }
            let OpenLeaf {
                node,
                rows,
                mut hist,
                best: split,
            } = open.swap_remove(pick);

            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                rows.iter().partition(|&&r| self.goes_left(&split, r as usize));
            drop(rows);
            let (left_hist, right_hist) = if left_rows.len() <= right_rows.len() {
                let small = self.histogram(&left_rows);
                self.subtract_into(&mut hist, &small);
                (small, hist)
            } else {
                let small = self.histogram(&right_rows);
                self.subtract_into(&mut hist, &small);
                (hist, small)
            };

            let left_id = nodes.len();
            let right_id = left_id + 1;
            nodes.push(GrowNode::Leaf {
                value: 0.0,
                cover: split.left.h,
            });
            nodes.push(GrowNode::Leaf {
                value: 0.0,
                cover: split.right.h,
            });
            sums.push(split.left);
            sums.push(split.right);
            nodes[node] = GrowNode::Split {
                feature: split.feature,
                bin: split.bin,
                missing_left: split.missing_left,
                left: left_id,
                right: right_id,
                cover: sums[node].h,
            };
            records.push((split.feature, split.gain));
            n_leaves += 1;

            for (id, rows, hist) in [(left_id, left_rows, left_hist), (right_id, right_rows, right_hist)] {
                if let Some(best) = self.best_split(&hist) {
                    open.push(OpenLeaf {
                        node: id,
                        rows,
                        hist,
                        best,
                    });
                }
            }
        }

        let lr = self.config.learning_rate;
        for (id, node) in nodes.iter_mut().enumerate() {
            if let GrowNode::Leaf { value, .. } = node {
                *value = self.leaf_weight(sums[id]) * lr;
            }
        }
        (nodes, records)
    }
}

fn sum_hist(h: &[Gh]) -> Gh {
    let mut s = Gh::default();
    for b in h {
        s.add(*b);
    }
    s
}

fn walk_binned(nodes: &[GrowNode], bins: &[Vec<u8>], mapper: &BinMapper, row: usize) -> f64 {
    let mut i = 0;
    loop {
        match &nodes[i] {
            GrowNode::Leaf { value, .. } => return *value,
            GrowNode::Split {
                feature,
                bin,
                missing_left,
                left,
                right,
                ..
            } => {
                let b = bins[*feature][row];
                let go_left = if b == mapper.missing_bin(*feature) {
                    *missing_left
                } else {
                    b <= *bin
                };
                i = if go_left { *left } else { *right };
            }
        }
    }
}

fn validate_labels(labels: &[u8], rows: usize) -> Result<(), GbdtError> {
    if labels.len() != rows {
        return Err(GbdtError::LabelLength {
            labels: labels.len(),
            rows,
        });
    }
    if let Some(row) = labels.iter().position(|&y| y > 1) {
        return Err(GbdtError::NonBinaryLabel {
            row,
            value: labels[row],
        });
    }
    Ok(())
}

pub fn train_with_history(
    matrix: &FeatureMatrix,
    labels: &[u8],
    config: &TrainConfig,
    valid: Option<Holdout<'_>>,
) -> Result<(BoostedModel, TrainHistory), GbdtError> {
    config.validate()?;
    let n = matrix.n_rows();
    if n < 2 {
        return Err(GbdtError::EmptyMatrix);
    }
    validate_labels(labels, n)?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(GbdtError::SingleClass);
    }
    if let Some(v) = &valid {
        validate_labels(v.labels, v.matrix.n_rows())?;
    }

    let mean = positives as f64 / n as f64;
    let base_score = (mean / (1.0 - mean)).ln();
    let features = matrix.column_names().to_vec();
    let mut model = BoostedModel::constant(base_score, config.learning_rate, features);

    let mapper = BinMapper::fit(matrix, config.max_bins)?;
    let bins = mapper.bin_matrix(matrix);
    let mut scores = vec![base_score; n];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut history = TrainHistory {
        train_log_loss: vec![log_loss(labels, &scores)],
        ..TrainHistory::default()
    };

    let mut valid_state = match valid {
        Some(v) => {
            // route holdout rows through the training columns and bins
            let aligned = v
                .matrix
                .select_columns(matrix.column_names())
                .map_err(|e| match e {
                    crate::features::FeatureError::MissingColumn(c) => {
                        GbdtError::MissingFeatureColumn(c)
                    }
                    other => GbdtError::Model(other.to_string()),
                })?;
            let vb = mapper.bin_matrix(&aligned);
            Some((vb, vec![base_score; aligned.n_rows()], v.labels))
        }
        None => None,
    };
    let mut per_tree_records: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut grown: Vec<Vec<GrowNode>> = Vec::new();
    let mut best: Option<(f64, usize)> = None;

    for round in 0..config.rounds {
        let grads = logistic_grad_hess(labels, &scores);
        let sample = goss_sample_with(&grads, config.goss_a, config.goss_b, &mut rng)?;
        let mut gw = vec![0.0; n];
        let mut hw = vec![0.0; n];
        for (&r, &m) in sample.rows.iter().zip(&sample.multipliers) {
            gw[r] = grads[r].g * m;
            hw[r] = grads[r].h * m;
        }
        let grower = Grower::new(&bins, &mapper, &gw, &hw, config);
        let (nodes, records) = grower.grow(sample.rows.iter().map(|&r| r as u32).collect());

        scores
            .par_iter_mut()
            .enumerate()
            .for_each(|(r, s)| *s += walk_binned(&nodes, &bins, &mapper, r));
        history.train_log_loss.push(log_loss(labels, &scores));

        if let Some((vb, vscores, vlabels)) = valid_state.as_mut() {
            vscores
                .par_iter_mut()
                .enumerate()
                .for_each(|(r, s)| *s += walk_binned(&nodes, vb, &mapper, r));
            let m = metric::score(vlabels, vscores)?;
            history.holdout_score.push(m);
            if best.is_none_or(|(b, _)| m > b) {
                best = Some((m, round));
            }
        }
        grown.push(nodes);
        per_tree_records.push(records);

        if let (Some(patience), Some((_, best_round))) = (config.early_stop_rounds, best) {
            if round - best_round >= patience {
                break;
            }
        }
    }

    let keep = match (config.early_stop_rounds, best) {
        (Some(_), Some((_, best_round))) => best_round + 1,
        _ => grown.len(),
    };
    grown.truncate(keep);
    per_tree_records.truncate(keep);
    history.best_rounds = keep;

    let name = |f: usize| model.features[f].clone();
    let trees: Vec<Tree> = grown
        .into_iter()
        .map(|nodes| Tree {
            nodes: nodes
                .into_iter()
                .map(|n| match n {
                    GrowNode::Split {
                        feature,
                        bin,
                        missing_left,
                        left,
                        right,
                        cover,
                    } => Node::Split {
                        column: name(feature),
                        bin,
                        threshold: mapper.edges(feature)[bin as usize],
                        missing_left,
                        left,
                        right,
                        cover,
                    },
                    GrowNode::Leaf { value, cover } => Node::Leaf { value, cover },
                })
                .collect(),
        })
        .collect();
    let records = per_tree_records
        .into_iter()
        .flatten()
        .map(|(f, g)| (name(f), Sig17(quantize_gain(g))))
        .collect();
    model.trees = trees;
    model.split_records = records;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::weighted_auc;
    use proptest::prelude::*;

    fn matrix(cols: Vec<(&str, Vec<f32>)>) -> FeatureMatrix {
        let n = cols[0].1.len();
        FeatureMatrix::from_columns(
            (0..n).map(|i| format!("r{i}")).collect(),
            cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        )
        .unwrap()
    }

    /// Deterministic pseudo-random values in [0, 1).
    fn noise(n: usize, salt: u64) -> Vec<f32> {
        (0..n as u64)
            .map(|i| {
                let x = (i.wrapping_mul(6364136223846793005).wrapping_add(salt.wrapping_mul(1442695040888963407)))
                    >> 40;
                (x as f32) / (1u64 << 24) as f32
            })
            .collect()
    }

    #[test]
    fn constant_column_single_bin() {
        let m = matrix(vec![("a", vec![1.0, 1.0, 1.0])]);
        let b = BinMapper::fit(&m, 255).unwrap();
        assert_eq!(b.n_bins(0), 1);
        assert_eq!(b.bin(0, 1.0), 0);
        assert_eq!(b.bin(0, f32::NAN), b.missing_bin(0));
        assert_eq!(b.missing_bin(0), 1);
    }

    #[test]
    fn quantile_bins_match_direct_count() {
        let values: Vec<f32> = (1..=1000).map(|v| v as f32).collect();
        let m = matrix(vec![("a", values.clone())]);
        let b = BinMapper::fit(&m, 4).unwrap();
        assert_eq!(b.n_bins(0), 4);
        let mut counts = [0usize; 4];
        for v in &values {
            counts[b.bin(0, *v) as usize] += 1;
        }
        // oracle: the k-th quartile holds ranks (250k, 250(k+1)]
        let oracle: Vec<usize> = (0..4)
            .map(|k| values.iter().filter(|&&v| v > 250.0 * k as f32 && v <= 250.0 * (k + 1) as f32).count())
            .collect();
        assert_eq!(counts.to_vec(), oracle);
        assert_eq!(counts, [250; 4]);
    }

    #[test]
    fn bin_edges_strictly_increase() {
        let mut v: Vec<f32> = (0..500).map(|i| (i % 7) as f32).collect();
        v.extend((0..500).map(|i| i as f32 / 3.0));
        let m = matrix(vec![("a", v.clone())]);
        let b = BinMapper::fit(&m, 16).unwrap();
        assert!(b.edges(0).windows(2).all(|w| w[0] < w[1]));
        assert!(b.n_bins(0) <= 16);
        for x in v {
            let bin = b.bin(0, x) as usize;
            assert!(f64::from(x) <= b.edges(0)[bin]);
            assert!(bin == 0 || f64::from(x) > b.edges(0)[bin - 1]);
        }
    }

    #[test]
    fn gradients() {
        let g = logistic_grad_hess(&[1, 0], &[0.0, 0.0]);
        assert_eq!(g[0], GradientPair { g: -0.5, h: 0.25 });
        assert_eq!(g[1], GradientPair { g: 0.5, h: 0.25 });
        let sat = logistic_grad_hess(&[1], &[50.0])[0];
        assert!(sat.g.abs() < 1e-20 && sat.h < 1e-20 && sat.h >= 0.0);
    }

    #[test]
    fn goss_worked_example() {
        let grads: Vec<GradientPair> = [0.9, 0.5, 0.4, 0.1, 0.05]
            .iter()
            .map(|&g| GradientPair { g, h: 0.25 })
            .collect();
        let s = goss_sample(&grads, 0.2, 0.2, 7).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0], 0);
        assert_eq!(s.multipliers[0], 1.0);
        assert!((s.multipliers[1] - 4.0).abs() < 1e-12);
        assert!(s.rows[1] > 0);

        let all = goss_sample(&grads, 1.0, 0.0, 7).unwrap();
        assert_eq!(all.rows, vec![0, 1, 2, 3, 4]);
        assert!(all.multipliers.iter().all(|&m| m == 1.0));
        assert!(matches!(goss_sample(&grads, 0.5, 0.0, 7), Err(GbdtError::DegenerateSampling)));
        assert!(goss_sample(&grads, 0.7, 0.5, 7).is_err());
    }

    #[test]
    fn goss_is_seeded() {
        let grads: Vec<GradientPair> = noise(200, 3)
            .iter()
            .map(|&g| GradientPair { g: f64::from(g) - 0.5, h: 0.2 })
            .collect();
        let a = goss_sample(&grads, 0.2, 0.1, 11).unwrap();
        let b = goss_sample(&grads, 0.2, 0.1, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 40 + 20);
    }

    #[test]
    fn separable_training_auc() {
        let x: Vec<f32> = noise(200, 1).iter().map(|v| v - 0.5).collect();
        let labels: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.0)).collect();
        let m = matrix(vec![("feature_0", x), ("noise", noise(200, 2))]);
        let cfg = TrainConfig {
            rounds: 50,
            ..TrainConfig::default()
        };
        let model = train(&m, &labels, &cfg, None).unwrap();
        let p = model.predict(&m).unwrap();
        assert!(weighted_auc(&labels, &p).unwrap() >= 0.99);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_rounds_predicts_label_mean() {
        let m = matrix(vec![("a", vec![1.0, 2.0, 3.0, 4.0])]);
        let labels = [1, 0, 0, 0];
        let cfg = TrainConfig {
            rounds: 0,
            ..TrainConfig::default()
        };
        let model = train(&m, &labels, &cfg, None).unwrap();
        assert!(model.trees.is_empty());
        for p in model.predict(&m).unwrap() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn training_errors() {
        let m = matrix(vec![("a", vec![1.0, 2.0])]);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&m, &[1, 1], &cfg, None), Err(GbdtError::SingleClass)));
        let one = matrix(vec![("a", vec![1.0])]);
        assert!(matches!(train(&one, &[1], &cfg, None), Err(GbdtError::EmptyMatrix)));
        assert!(matches!(
            train(&m, &[1], &cfg, None),
            Err(GbdtError::LabelLength { .. })
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &[0, 1], &bad, None), Err(GbdtError::InvalidConfig(_))));
    }

    #[test]
    fn missing_rows_route_somewhere() {
        let mut x: Vec<f32> = noise(100, 5);
        let labels: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.5)).collect();
        x[3] = f32::NAN;
        let m = matrix(vec![("x", x), ("z", noise(100, 9))]);
        let model = train(&m, &labels, &TrainConfig { rounds: 5, ..TrainConfig::default() }, None).unwrap();
        let all_missing = matrix(vec![("x", vec![f32::NAN]), ("z", vec![f32::NAN])]);
        let p = model.predict(&all_missing).unwrap()[0];
        assert!(p.is_finite() && p > 0.0 && p < 1.0);
    }

    #[test]
    fn predict_needs_split_columns_only() {
        let x = noise(100, 4);
        let labels: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.5)).collect();
        let m = matrix(vec![("x", x.clone())]);
        let model = train(&m, &labels, &TrainConfig { rounds: 5, ..TrainConfig::default() }, None).unwrap();
        let wider = matrix(vec![("junk", noise(100, 8)), ("x", x), ("more", noise(100, 9))]);
        assert_eq!(model.predict(&m).unwrap(), model.predict(&wider).unwrap());
        let other = matrix(vec![("y", noise(100, 1))]);
        assert!(matches!(model.predict(&other), Err(GbdtError::MissingFeatureColumn(c)) if c == "x"));
    }

    #[test]
    fn single_split_is_monotone_in_feature() {
        let x: Vec<f32> = (0..40).map(|i| i as f32).collect();
        let labels: Vec<u8> = x.iter().map(|&v| u8::from(v >= 20.0)).collect();
        let m = matrix(vec![("x", x.clone())]);
        let cfg = TrainConfig {
            rounds: 1,
            max_leaves: 2,
            ..TrainConfig::default()
        };
        let model = train(&m, &labels, &cfg, None).unwrap();
        assert_eq!(model.trees[0].nodes.len(), 3);
        let Node::Split { threshold, .. } = &model.trees[0].nodes[0] else {
            panic!("root should split")
        };
        assert_eq!(*threshold, 19.0);
        let p = model.predict(&m).unwrap();
        // direct tree-walk oracle: constant on each side, higher on the right
        assert!(p[..20].iter().all(|&v| v == p[0]));
        assert!(p[20..].iter().all(|&v| v == p[20]));
        assert!(p[20] > p[0]);
    }

    #[test]
    fn importance_accounting() {
        let x = noise(300, 21);
        let labels: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.3)).collect();
        let m = matrix(vec![("x", x), ("n1", noise(300, 22)), ("n2", noise(300, 23))]);
        let model = train(&m, &labels, &TrainConfig { rounds: 10, ..TrainConfig::default() }, None).unwrap();
        let total = model.importance(ImportanceKind::TotalGain);
        let by_records: f64 = model.split_records().map(|(_, g)| g).sum();
        assert_eq!(total.values().sum::<f64>(), by_records);
        let norm = model.normalized_importance(ImportanceKind::TotalGain);
        assert!((norm.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let best = total.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, "x");
        let avg = model.importance(ImportanceKind::AverageGain);
        for (c, t) in &total {
            let n = model.split_records().filter(|(col, _)| col == c).count() as f64;
            assert_eq!(avg[c], t / n);
        }
    }

    #[test]
    fn single_record_importance() {
        let model = BoostedModel {
            base_score: 0.0,
            learning_rate: 0.1,
            trees: vec![],
            split_records: vec![("f".into(), Sig17(12.3))],
            features: vec!["f".into()],
        };
        assert_eq!(model.importance(ImportanceKind::TotalGain)["f"], 12.3);
        assert_eq!(model.importance(ImportanceKind::AverageGain)["f"], 12.3);
    }

    #[test]
    fn model_json_round_trip() {
        let x = noise(120, 31);
        let labels: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.6)).collect();
        let m = matrix(vec![("x", x), ("z", noise(120, 32))]);
        let model = train(&m, &labels, &TrainConfig { rounds: 4, ..TrainConfig::default() }, None).unwrap();
        let json = model.to_json().unwrap();
        let keys: Vec<usize> = ["\"base_score\"", "\"learning_rate\"", "\"trees\"", "\"split_records\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back = BoostedModel::from_json(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&m).unwrap(), model.predict(&m).unwrap());
    }

    #[test]
    fn early_stopping_truncates() {
        let x = noise(400, 41);
        let labels: Vec<u8> = x.iter().zip(noise(400, 42)).map(|(&a, b)| u8::from(a + 0.6 * b > 0.8)).collect();
        let m = matrix(vec![("x", x), ("z", noise(400, 43))]);
        let (train_m, valid_m) = (m.select_rows(&(0..300).collect::<Vec<_>>()), m.select_rows(&(300..400).collect::<Vec<_>>()));
        let cfg = TrainConfig {
            rounds: 200,
            early_stop_rounds: Some(5),
            ..TrainConfig::default()
        };
        let (model, hist) = train_with_history(
            &train_m,
            &labels[..300],
            &cfg,
            Some(Holdout {
                matrix: &valid_m,
                labels: &labels[300..],
            }),
        )
        .unwrap();
        assert_eq!(model.trees.len(), hist.best_rounds);
        assert!(hist.holdout_score.len() < 200);
        let best = hist.holdout_score.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(hist.holdout_score[hist.best_rounds - 1], best);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn loss_non_increasing_and_leaf_mass(seed in 0u64..1000, lr in 0.05f64..0.3, leaves in 2usize..16) {
            let n = 150;
            let x = noise(n, seed);
            let z = noise(n, seed + 17);
            let labels: Vec<u8> = x.iter().zip(&z).map(|(&a, &b)| u8::from(a + 0.5 * b > 0.7)).collect();
            prop_assume!(labels.iter().any(|&y| y == 1) && labels.iter().any(|&y| y == 0));
            let m = matrix(vec![("x", x), ("z", z)]);
            let cfg = TrainConfig { rounds: 15, learning_rate: lr, max_leaves: leaves, seed, ..TrainConfig::default() };
            let (model, hist) = train_with_history(&m, &labels, &cfg, None).unwrap();
            for w in hist.train_log_loss.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-6, "{:?}", hist.train_log_loss);
            }
            for t in &model.trees {
                prop_assert!(t.nodes.len() % 2 == 1);
                if t.nodes.len() == 1 { continue; }
                for node in &t.nodes {
                    if let Node::Leaf { cover, .. } = node {
                        prop_assert!(*cover >= cfg.min_child_weight);
                    }
                }
            }
        }
    }
}
