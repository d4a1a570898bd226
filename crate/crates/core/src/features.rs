//! Per-customer feature engineering.
//!
//! Each customer's statement series collapses into one row: summary
//! statistics per continuous column, count / last / distinct-count per
//! categorical column, `last - mean` lag columns and an ordinal or one-hot
//! encoding of the last categorical code. Missing cells are skipped when
//! aggregating and engineered cells without data stay missing (NaN) unless
//! a fill value is configured.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::num::NonZeroUsize;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ColumnKind, LabeledTable, StatementTable};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("aggregation spec selects no statistics")]
    EmptySpec,
    #[error("invalid aggregation spec: {0}")]
    InvalidSpec(String),
    #[error("column `{0}` is not a continuous or categorical column of the table")]
    UnknownColumn(String),
    #[error("one-hot encoding of unseen data needs the training vocabulary")]
    VocabularyMissing,
    #[error("duplicate feature column `{0}`")]
    DuplicateColumn(String),
    #[error("duplicate row id `{0}`")]
    DuplicateRow(String),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("matrix has no column `{0}`")]
    MissingColumn(String),
    #[error("feature container: {0}")]
    Container(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContinuousStat {
    Mean,
    Std,
    Min,
    Max,
    Last,
    Median,
}

impl ContinuousStat {
    pub const ALL: [ContinuousStat; 6] = [
        ContinuousStat::Mean,
        ContinuousStat::Std,
        ContinuousStat::Min,
        ContinuousStat::Max,
        ContinuousStat::Last,
        ContinuousStat::Median,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContinuousStat::Mean => "mean",
            ContinuousStat::Std => "std",
            ContinuousStat::Min => "min",
            ContinuousStat::Max => "max",
            ContinuousStat::Last => "last",
            ContinuousStat::Median => "median",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoricalStat {
    Count,
    Last,
    Nunique,
}

impl CategoricalStat {
    pub const ALL: [CategoricalStat; 3] =
        [CategoricalStat::Count, CategoricalStat::Last, CategoricalStat::Nunique];

    pub fn name(self) -> &'static str {
        match self {
            CategoricalStat::Count => "count",
            CategoricalStat::Last => "last",
            CategoricalStat::Nunique => "nunique",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    #[serde(rename = "ordinal")]
    Ordinal,
    #[serde(rename = "one-hot")]
    OneHot,
}

impl std::str::FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordinal" => Ok(Encoding::Ordinal),
            "one-hot" | "onehot" => Ok(Encoding::OneHot),
            other => Err(format!("unknown encoding `{other}` (expected ordinal or one-hot)")),
        }
    }
}

/// Omitted fields take the values of `AggregationSpec::default()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationSpec {
    pub continuous_stats: Vec<ContinuousStat>,
    pub categorical_stats: Vec<CategoricalStat>,
    pub lag_enabled: bool,
    /// Keep only each customer's last `k` statements.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recent_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Encoding>,
    /// Raw columns to use; all continuous and categorical columns when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    /// Replace missing engineered cells with this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill_missing: Option<f32>,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        Self {
            continuous_stats: ContinuousStat::ALL.to_vec(),
            categorical_stats: CategoricalStat::ALL.to_vec(),
            lag_enabled: true,
            recent_window: None,
            encoding: None,
            columns: None,
            fill_missing: None,
        }
    }
}

impl AggregationSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.continuous_stats.is_empty() && self.categorical_stats.is_empty() {
            return Err(FeatureError::EmptySpec);
        }
        if self.recent_window == Some(0) {
            return Err(FeatureError::InvalidSpec("recent_window must be at least 1".into()));
        }
        let unique: HashSet<_> = self.continuous_stats.iter().collect();
        if unique.len() != self.continuous_stats.len() {
            return Err(FeatureError::InvalidSpec("repeated continuous stat".into()));
        }
        let unique: HashSet<_> = self.categorical_stats.iter().collect();
        if unique.len() != self.categorical_stats.len() {
            return Err(FeatureError::InvalidSpec("repeated categorical stat".into()));
        }
        Ok(())
    }
}

/// Summary statistics of one customer's non-missing values in one column.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContinuousAggregates {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub last: Option<f64>,
    pub median: Option<f64>,
}

impl ContinuousAggregates {
    pub fn get(&self, stat: ContinuousStat) -> Option<f64> {
        match stat {
            ContinuousStat::Mean => self.mean,
            ContinuousStat::Std => self.std,
            ContinuousStat::Min => self.min,
            ContinuousStat::Max => self.max,
            ContinuousStat::Last => self.last,
            ContinuousStat::Median => self.median,
        }
    }
}

/// `series` is in statement order with missing values already removed.
pub fn aggregate_continuous(series: &[f64]) -> ContinuousAggregates {
    let n = series.len();
    if n == 0 {
        return ContinuousAggregates::default();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| {
        // shifted by the first value so a constant series gives exactly 0
        let d: Vec<f64> = series.iter().map(|x| x - series[0]).collect();
        let dm = d.iter().sum::<f64>() / n as f64;
        let ss: f64 = d.iter().map(|x| (x - dm) * (x - dm)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    ContinuousAggregates {
        mean: Some(mean),
        std,
        min: Some(sorted[0]),
        max: Some(sorted[n - 1]),
        last: Some(series[n - 1]),
        median: Some(median),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CategoricalAggregates {
    pub count: usize,
    pub last: Option<u32>,
    pub nunique: usize,
}

impl CategoricalAggregates {
    pub fn get(&self, stat: CategoricalStat) -> Option<f64> {
        match stat {
            CategoricalStat::Count => Some(self.count as f64),
            CategoricalStat::Last => self.last.map(f64::from),
            CategoricalStat::Nunique => Some(self.nunique as f64),
        }
    }
}

/// `series` is in statement order and may contain missing codes.
pub fn aggregate_categorical(series: &[Option<u32>]) -> CategoricalAggregates {
    let present: Vec<u32> = series.iter().flatten().copied().collect();
    CategoricalAggregates {
        count: present.len(),
        last: present.last().copied(),
        nunique: present.iter().collect::<BTreeSet<_>>().len(),
    }
}

/// `last - mean` in 32-bit arithmetic; NaN (missing) operands propagate.
pub fn lag_value(last: f32, mean: f32) -> f32 {
    last - mean
}

/// Keep each customer's `k` most recent statements.
pub fn select_recent_window(table: &StatementTable, k: NonZeroUsize) -> StatementTable {
    let ranges: Vec<_> = (0..table.n_customers())
        .map(|c| {
            let r = table.statements(c);
            r.end.saturating_sub(k.get()).max(r.start)..r.end
        })
        .collect();
    table.select_rows(&ranges)
}

/// Codes seen in the training split per categorical column, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub codes: BTreeMap<String, Vec<u32>>,
}

impl Vocabulary {
    /// Distinct `last` codes per categorical column of `table`.
    pub fn fit(table: &StatementTable, spec: &AggregationSpec) -> Result<Self, FeatureError> {
        let mut codes = BTreeMap::new();
        for col in selected_columns(table, spec)? {
            let column = &table.columns()[col];
            if column.kind != ColumnKind::Categorical {
                continue;
            }
            let seen: BTreeSet<u32> = (0..table.n_customers())
                .filter_map(|c| table.statements(c).rev().find_map(|r| column.data.code(r)))
                .collect();
            codes.insert(column.name.clone(), seen.into_iter().collect());
        }
        Ok(Self { codes })
    }
}

/// One row per customer of 32-bit features; NaN marks a missing cell.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    customer_ids: Vec<String>,
    column_names: Vec<String>,
    values: Vec<f32>,
}

impl PartialEq for FeatureMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.customer_ids == other.customer_ids
            && self.column_names == other.column_names
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl FeatureMatrix {
    pub fn new(
        customer_ids: Vec<String>,
        column_names: Vec<String>,
        values: Vec<f32>,
    ) -> Result<Self, FeatureError> {
        if values.len() != customer_ids.len() * column_names.len() {
            return Err(FeatureError::Shape(format!(
                "{} values for {} rows x {} columns",
                values.len(),
                customer_ids.len(),
                column_names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = column_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(FeatureError::DuplicateColumn(dup.clone()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = customer_ids.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(FeatureError::DuplicateRow(dup.clone()));
        }
        Ok(Self {
            customer_ids,
            column_names,
            values,
        })
    }

    /// Build from column vectors.
    pub fn from_columns(
        customer_ids: Vec<String>,
        columns: Vec<(String, Vec<f32>)>,
    ) -> Result<Self, FeatureError> {
        let n = customer_ids.len();
        if let Some((name, _)) = columns.iter().find(|(_, v)| v.len() != n) {
            return Err(FeatureError::Shape(format!("column `{name}` length differs from {n} rows")));
        }
        let m = columns.len();
        let mut values = vec![0.0; n * m];
        for (j, (_, col)) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * m + j] = v;
            }
        }
        Self::new(customer_ids, columns.into_iter().map(|(n, _)| n).collect(), values)
    }

    pub fn n_rows(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn customer_ids(&self) -> &[String] {
        &self.customer_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let m = self.n_cols();
        &self.values[row * m..(row + 1) * m]
    }

    pub fn column(&self, col: usize) -> Vec<f32> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            customer_ids: rows.iter().map(|&r| self.customer_ids[r].clone()).collect(),
            column_names: self.column_names.clone(),
            values,
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix, FeatureError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| FeatureError::MissingColumn(n.as_ref().to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut values = Vec::with_capacity(self.n_rows() * idx.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(idx.iter().map(|&c| row[c]));
        }
        FeatureMatrix::new(
            self.customer_ids.clone(),
            names.iter().map(|n| n.as_ref().to_string()).collect(),
            values,
        )
    }

    /// Append whole columns to the right.
    pub fn append_columns(&self, columns: Vec<(String, Vec<f32>)>) -> Result<FeatureMatrix, FeatureError> {
        let n = self.n_rows();
        if let Some((name, v)) = columns.iter().find(|(_, v)| v.len() != n) {
            return Err(FeatureError::Shape(format!(
                "column `{name}` has {} values for {n} rows",
                v.len()
            )));
        }
        let m = self.n_cols() + columns.len();
        let mut values = Vec::with_capacity(n * m);
        for r in 0..n {
            values.extend_from_slice(self.row(r));
            values.extend(columns.iter().map(|(_, v)| v[r]));
        }
        let mut names = self.column_names.clone();
        names.extend(columns.into_iter().map(|(n, _)| n));
        FeatureMatrix::new(self.customer_ids.clone(), names, values)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FeatureError> {
        w.write_all(CSFM_MAGIC)?;
        w.write_all(&CSFM_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.n_cols() as u64).to_le_bytes())?;
        for s in self.column_names.iter().chain(&self.customer_ids) {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        let mut payload = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            let bits = if v.is_nan() { CANONICAL_NAN } else { v.to_bits() };
            payload.extend_from_slice(&bits.to_le_bytes());
        }
        w.write_all(&payload)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<FeatureMatrix, FeatureError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CSFM_MAGIC {
            return Err(FeatureError::Container("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CSFM_VERSION {
            return Err(FeatureError::Container(format!("unsupported version {version}")));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut read_strings = |count: usize| -> Result<Vec<String>, FeatureError> {
            (0..count)
                .map(|_| {
                    let len = read_u32(&mut r)? as usize;
                    let mut buf = vec![0u8; len];
                    r.read_exact(&mut buf)?;
                    String::from_utf8(buf).map_err(|e| FeatureError::Container(e.to_string()))
                })
                .collect()
        };
        let column_names = read_strings(cols)?;
        let customer_ids = read_strings(rows)?;
        let mut payload = vec![0u8; rows * cols * 4];
        r.read_exact(&mut payload)?;
        let values = payload
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        FeatureMatrix::new(customer_ids, column_names, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<FeatureMatrix> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Self::read_from(std::io::BufReader::new(file))?)
    }
}

pub const CSFM_MAGIC: &[u8; 4] = b"CSFM";
pub const CSFM_VERSION: u32 = 1;
const CANONICAL_NAN: u32 = 0x7FC0_0000;

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FeatureError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FeatureError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Indices into `table.columns()` that the spec uses.
fn selected_columns(table: &StatementTable, spec: &AggregationSpec) -> Result<Vec<usize>, FeatureError> {
    match &spec.columns {
        None => Ok((0..table.columns().len()).collect()),
        Some(names) => {
            // keep table order so column layout does not depend on list order
            for n in names {
                if table.column(n).is_none() {
                    return Err(FeatureError::UnknownColumn(n.clone()));
                }
            }
            Ok((0..table.columns().len())
                .filter(|&i| names.iter().any(|n| *n == table.columns()[i].name))
                .collect())
        }
    }
}

enum Block {
    Continuous {
        col: usize,
        stats: Vec<ContinuousStat>,
        lag: bool,
    },
    Categorical {
        col: usize,
        stats: Vec<CategoricalStat>,
        encoding: Option<(Encoding, Vec<u32>)>,
    },
}

impl Block {
    fn names(&self, table: &StatementTable, out: &mut Vec<String>) {
        match self {
            Block::Continuous { col, stats, lag } => {
                let raw = &table.columns()[*col].name;
                out.extend(stats.iter().map(|s| format!("{raw}_{}", s.name())));
                if *lag {
                    out.push(format!("{raw}_lag"));
                }
            }
            Block::Categorical {
                col,
                stats,
                encoding,
            } => {
                let raw = &table.columns()[*col].name;
                out.extend(stats.iter().map(|s| format!("{raw}_{}", s.name())));
                match encoding {
                    Some((Encoding::Ordinal, _)) => out.push(format!("{raw}_code")),
                    Some((Encoding::OneHot, vocab)) => {
                        out.extend(vocab.iter().map(|v| format!("{raw}_is_{v}")))
                    }
                    None => {}
                }
            }
        }
    }

    fn fill(&self, table: &StatementTable, customer: usize, out: &mut Vec<f32>) {
        let rows = table.statements(customer);
        match self {
            Block::Continuous { col, stats, lag } => {
                let data = &table.columns()[*col].data;
                let series: Vec<f64> = rows.filter_map(|r| data.get(r)).collect();
                let agg = aggregate_continuous(&series);
                let cast = |v: Option<f64>| v.map_or(f32::NAN, |x| x as f32);
                out.extend(stats.iter().map(|&s| cast(agg.get(s))));
                if *lag {
                    out.push(lag_value(cast(agg.last), cast(agg.mean)));
                }
            }
            Block::Categorical {
                col,
                stats,
                encoding,
            } => {
                let data = &table.columns()[*col].data;
                let series: Vec<Option<u32>> = rows.map(|r| data.code(r)).collect();
                let agg = aggregate_categorical(&series);
                out.extend(
                    stats
                        .iter()
                        .map(|&s| agg.get(s).map_or(f32::NAN, |x| x as f32)),
                );
                match encoding {
                    Some((Encoding::Ordinal, _)) => {
                        out.push(agg.last.map_or(f32::NAN, |c| c as f32))
                    }
                    Some((Encoding::OneHot, vocab)) => out.extend(
                        vocab
                            .iter()
                            .map(|&v| if agg.last == Some(v) { 1.0 } else { 0.0 }),
                    ),
                    None => {}
                }
            }
        }
    }
}

/// Feature rows for every customer of `table`.
///
/// One-hot encoding reads its indicator set from `vocabulary`; pass the
/// vocabulary fitted on the training split when transforming other splits.
pub fn transform(
    table: &StatementTable,
    spec: &AggregationSpec,
    vocabulary: Option<&Vocabulary>,
) -> Result<FeatureMatrix, FeatureError> {
    spec.validate()?;
    let windowed;
    let table = match spec.recent_window.and_then(NonZeroUsize::new) {
        Some(k) => {
            windowed = select_recent_window(table, k);
            &windowed
        }
        None => table,
    };

    let mut blocks = Vec::new();
    for col in selected_columns(table, spec)? {
        let column = &table.columns()[col];
        match column.kind {
            ColumnKind::Continuous => {
                if spec.continuous_stats.is_empty() && !spec.lag_enabled {
                    continue;
                }
                blocks.push(Block::Continuous {
                    col,
                    stats: spec.continuous_stats.clone(),
                    lag: spec.lag_enabled,
                });
            }
            ColumnKind::Categorical => {
                let encoding = match spec.encoding {
                    None => None,
                    Some(Encoding::Ordinal) => Some((Encoding::Ordinal, Vec::new())),
                    Some(Encoding::OneHot) => {
                        let vocab = vocabulary.ok_or(FeatureError::VocabularyMissing)?;
                        let codes = vocab
                            .codes
                            .get(&column.name)
                            .ok_or(FeatureError::VocabularyMissing)?;
                        Some((Encoding::OneHot, codes.clone()))
                    }
                };
                if spec.categorical_stats.is_empty() && encoding.is_none() {
                    continue;
                }
                blocks.push(Block::Categorical {
                    col,
                    stats: spec.categorical_stats.clone(),
                    encoding,
                });
            }
            _ => {}
        }
    }

    let mut names = Vec::new();
    for b in &blocks {
        b.names(table, &mut names);
    }
    let width = names.len();
    let rows: Vec<Vec<f32>> = (0..table.n_customers())
        .into_par_iter()
        .map(|c| {
            let mut row = Vec::with_capacity(width);
            for b in &blocks {
                b.fill(table, c, &mut row);
            }
            if let Some(fill) = spec.fill_missing {
                row.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = fill);
            }
            row
        })
        .collect();
    FeatureMatrix::new(table.customer_ids().to_vec(), names, rows.concat())
}

/// Engineered features with labels aligned to row order and the fitted vocabulary.
#[derive(Debug, Clone)]
pub struct BuiltFeatures {
    pub matrix: FeatureMatrix,
    pub labels: Vec<u8>,
    pub vocabulary: Vocabulary,
}

/// Fit the vocabulary on `labeled` and build its feature matrix.
pub fn build_matrix(labeled: &LabeledTable, spec: &AggregationSpec) -> Result<BuiltFeatures, FeatureError> {
    spec.validate()?;
    if labeled.table.n_customers() == 0 {
        return Err(FeatureError::Shape("labeled table has no customers".into()));
    }
    let vocabulary = match spec.recent_window.and_then(NonZeroUsize::new) {
        Some(k) => Vocabulary::fit(&select_recent_window(&labeled.table, k), spec)?,
        None => Vocabulary::fit(&labeled.table, spec)?,
    };
    let matrix = transform(&labeled.table, spec, Some(&vocabulary))?;
    Ok(BuiltFeatures {
        matrix,
        labels: labeled.labels.clone(),
        vocabulary,
    })
}
