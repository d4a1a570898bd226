//! Statement-level CSV ingestion and cleaning.
//!
//! A [`StatementTable`] holds one row per (customer, statement). Rows are
//! grouped by customer in first-appearance order and sorted by statement
//! date within each customer, so the statement index of a row is its
//! 1-based position inside its customer block.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest statement history a customer may have.
pub const MAX_STATEMENTS: usize = 13;
/// Sentinel stored in integer columns for a missing categorical code.
pub const MISSING_CODE: i32 = -1;
/// Largest code representable once compacted.
pub const MAX_CODE: i32 = i16::MAX as i32;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("column `{0}` is missing from the header")]
    MissingColumn(String),
    #[error("header column `{0}` is not in the schema")]
    UnexpectedColumn(String),
    #[error("input has no data rows")]
    EmptyFile,
    #[error("customer `{customer}` has two statements dated {date}")]
    DuplicateStatement { customer: String, date: String },
    #[error("customer `{customer}` has {count} statements (at most {MAX_STATEMENTS} allowed)")]
    TooManyStatements { customer: String, count: usize },
    #[error("line {line}: invalid {what} `{value}`")]
    InvalidKey {
        line: u64,
        what: &'static str,
        value: String,
    },
    #[error("precision must be positive, got {0}")]
    NonPositivePrecision(f64),
    #[error("categorical column `{column}` holds code {code}, beyond the 16-bit range")]
    CodeOverflow { column: String, code: i64 },
    #[error("customer `{0}` has no label")]
    MissingLabel(String),
    #[error("label for customer `{customer}` is {value}, expected 0 or 1")]
    InvalidLabel { customer: String, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Identifier,
    Date,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    Int8,
    Int16,
    #[default]
    Float32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_range: Option<[f64; 2]>,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind, storage: Storage) -> Self {
        Self {
            name: name.into(),
            kind,
            storage,
            valid_range: None,
        }
    }

    pub fn with_range(mut self, low: f64, high: f64) -> Self {
        self.valid_range = Some([low, high]);
        self
    }
}

pub fn validate_schema(schema: &[ColumnSchema]) -> Result<(), IngestError> {
    let ids = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Identifier)
        .count();
    if ids != 1 {
        return Err(IngestError::Schema(format!(
            "exactly one identifier column required, found {ids}"
        )));
    }
    if schema.iter().filter(|c| c.kind == ColumnKind::Date).count() > 1 {
        return Err(IngestError::Schema("at most one date column allowed".into()));
    }
    let mut seen = HashSet::new();
    for col in schema {
        if !seen.insert(col.name.as_str()) {
            return Err(IngestError::Schema(format!("duplicate column `{}`", col.name)));
        }
        if let Some([low, high]) = col.valid_range {
            if !(low <= high) {
                return Err(IngestError::Schema(format!(
                    "column `{}` has valid_range [{low}, {high}] with low > high",
                    col.name
                )));
            }
        }
    }
    Ok(())
}

pub fn read_schema(path: impl AsRef<Path>) -> crate::Result<Vec<ColumnSchema>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    let schema: Vec<ColumnSchema> =
        serde_json::from_str(&text).map_err(|e| crate::Error::format(path, e))?;
    validate_schema(&schema)?;
    Ok(schema)
}

/// Values of one continuous or categorical column.
///
/// Floats mark missing cells with NaN; integer widths use [`MISSING_CODE`].
/// Equality compares floats bitwise so missing cells compare equal.
#[derive(Debug, Clone)]
pub enum ColumnData {
    Float64(Vec<f64>),
    Float32(Vec<f32>),
    Int32(Vec<i32>),
    Int16(Vec<i16>),
    Int8(Vec<i8>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float64(v) => v.len(),
            ColumnData::Float32(v) => v.len(),
            ColumnData::Int32(v) => v.len(),
            ColumnData::Int16(v) => v.len(),
            ColumnData::Int8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell as a float, `None` when missing.
    pub fn get(&self, row: usize) -> Option<f64> {
        let v = match self {
            ColumnData::Float64(v) => v[row],
            ColumnData::Float32(v) => f64::from(v[row]),
            ColumnData::Int32(v) => return code(v[row]).map(f64::from),
            ColumnData::Int16(v) => return code(i32::from(v[row])).map(f64::from),
            ColumnData::Int8(v) => return code(i32::from(v[row])).map(f64::from),
        };
        (!v.is_nan()).then_some(v)
    }

    /// Cell as a categorical code, `None` when missing or not an integer column.
    pub fn code(&self, row: usize) -> Option<u32> {
        match self {
            ColumnData::Int32(v) => code(v[row]),
            ColumnData::Int16(v) => code(i32::from(v[row])),
            ColumnData::Int8(v) => code(i32::from(v[row])),
            _ => None,
        }
    }

    pub fn storage_name(&self) -> &'static str {
        match self {
            ColumnData::Float64(_) => "float64",
            ColumnData::Float32(_) => "float32",
            ColumnData::Int32(_) => "int32",
            ColumnData::Int16(_) => "int16",
            ColumnData::Int8(_) => "int8",
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Float64(v) => ColumnData::Float64(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Float32(v) => ColumnData::Float32(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Int32(v) => ColumnData::Int32(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Int16(v) => ColumnData::Int16(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Int8(v) => ColumnData::Int8(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

impl PartialEq for ColumnData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ColumnData::Float64(a), ColumnData::Float64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ColumnData::Float32(a), ColumnData::Float32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ColumnData::Int32(a), ColumnData::Int32(b)) => a == b,
            (ColumnData::Int16(a), ColumnData::Int16(b)) => a == b,
            (ColumnData::Int8(a), ColumnData::Int8(b)) => a == b,
            _ => false,
        }
    }
}

fn code(v: i32) -> Option<u32> {
    (v >= 0).then_some(v as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatementTable {
    schema: Vec<ColumnSchema>,
    customer_ids: Vec<String>,
    offsets: Vec<usize>,
    dates: Option<Vec<NaiveDate>>,
    columns: Vec<Column>,
}

impl StatementTable {
    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn n_customers(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn n_rows(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn customer_ids(&self) -> &[String] {
        &self.customer_ids
    }

    /// Row range holding customer `c`'s statements, oldest first.
    pub fn statements(&self, c: usize) -> Range<usize> {
        self.offsets[c]..self.offsets[c + 1]
    }

    /// 1-based statement index of every row.
    pub fn statement_indices(&self) -> Vec<usize> {
        (0..self.n_customers())
            .flat_map(|c| 1..=self.statements(c).len())
            .collect()
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    /// Continuous and categorical columns in schema order.
    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Keep the given rows, which must be listed customer by customer in order.
    pub(crate) fn select_rows(&self, per_customer: &[Range<usize>]) -> StatementTable {
        let mut rows = Vec::new();
        let mut offsets = vec![0];
        for r in per_customer {
            rows.extend(r.clone());
            offsets.push(rows.len());
        }
        StatementTable {
            schema: self.schema.clone(),
            customer_ids: self.customer_ids.clone(),
            offsets,
            dates: self
                .dates
                .as_ref()
                .map(|d| rows.iter().map(|&r| d[r]).collect()),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    data: c.data.select(&rows),
                })
                .collect(),
        }
    }

    /// Keep only the listed customers (by position), in the given order.
    pub fn select_customers(&self, customers: &[usize]) -> StatementTable {
        let mut rows = Vec::new();
        let mut offsets = vec![0];
        for &c in customers {
            rows.extend(self.statements(c));
            offsets.push(rows.len());
        }
        StatementTable {
            schema: self.schema.clone(),
            customer_ids: customers.iter().map(|&c| self.customer_ids[c].clone()).collect(),
            offsets,
            dates: self
                .dates
                .as_ref()
                .map(|d| rows.iter().map(|&r| d[r]).collect()),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    data: c.data.select(&rows),
                })
                .collect(),
        }
    }

    /// Write the table back out in the input CSV dialect.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        let by_name: HashMap<&str, &Column> =
            self.columns.iter().map(|c| (c.name.as_str(), c)).collect();
        let mut record: Vec<String> = Vec::with_capacity(self.schema.len());
        for c in 0..self.n_customers() {
            for row in self.statements(c) {
                record.clear();
                for col in &self.schema {
                    let cell = match col.kind {
                        ColumnKind::Identifier => self.customer_ids[c].clone(),
                        ColumnKind::Date => self
                            .dates
                            .as_ref()
                            .map(|d| d[row].format("%Y-%m-%d").to_string())
                            .unwrap_or_default(),
                        _ => format_cell(&by_name[col.name.as_str()].data, row),
                    };
                    record.push(cell);
                }
                out.write_record(&record)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    }
}

fn format_cell(data: &ColumnData, row: usize) -> String {
    match data {
        ColumnData::Float64(v) if !v[row].is_nan() => v[row].to_string(),
        ColumnData::Float32(v) if !v[row].is_nan() => v[row].to_string(),
        ColumnData::Int32(_) | ColumnData::Int16(_) | ColumnData::Int8(_) => {
            data.code(row).map(|c| c.to_string()).unwrap_or_default()
        }
        _ => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub table: StatementTable,
    /// One label per customer, aligned with `table.customer_ids()`.
    pub labels: Vec<u8>,
    /// Labels whose customer does not appear in the table.
    pub unmatched_labels: usize,
}

pub fn parse_csv(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<StatementTable, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_reader(std::io::BufReader::new(file), schema)
}

fn parse_continuous(cell: &str) -> f64 {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => v,
        _ => f64::NAN,
    }
}

fn parse_code(cell: &str, column: &str) -> Result<i32, IngestError> {
    let cell = cell.trim();
    let value = match cell.parse::<i64>() {
        Ok(v) => v,
        Err(_) => match cell.parse::<f64>() {
            Ok(f) if f.is_finite() && f.fract() == 0.0 => f as i64,
            _ => return Ok(MISSING_CODE),
        },
    };
    if value < 0 {
        return Ok(MISSING_CODE);
    }
    i32::try_from(value).map_err(|_| IngestError::CodeOverflow {
        column: column.to_string(),
        code: value,
    })
}

struct RawRow {
    date: Option<NaiveDate>,
    line: u64,
    source: usize,
}

pub fn parse_reader<R: Read>(reader: R, schema: &[ColumnSchema]) -> Result<StatementTable, IngestError> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    let mut position = Vec::with_capacity(schema.len());
    for col in schema {
        match headers.iter().position(|h| h == col.name) {
            Some(p) => position.push(p),
            None => return Err(IngestError::MissingColumn(col.name.clone())),
        }
    }
    if let Some(extra) = headers.iter().find(|h| !schema.iter().any(|c| c.name == *h)) {
        return Err(IngestError::UnexpectedColumn(extra.to_string()));
    }

    let id_col = schema
        .iter()
        .position(|c| c.kind == ColumnKind::Identifier)
        .expect("validated");
    let date_col = schema.iter().position(|c| c.kind == ColumnKind::Date);
    let value_cols: Vec<usize> = (0..schema.len())
        .filter(|&i| matches!(schema[i].kind, ColumnKind::Continuous | ColumnKind::Categorical))
        .collect();

    let mut customer_index: HashMap<String, usize> = HashMap::new();
    let mut customer_ids: Vec<String> = Vec::new();
    let mut per_customer: Vec<Vec<RawRow>> = Vec::new();
    let mut floats: Vec<Vec<f64>> = vec![Vec::new(); value_cols.len()];
    let mut codes: Vec<Vec<i32>> = vec![Vec::new(); value_cols.len()];

    let mut record = csv::StringRecord::new();
    let mut source = 0usize;
    while rdr.read_record(&mut record)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = &record[position[id_col]];
        if id.is_empty() {
            return Err(IngestError::InvalidKey {
                line,
                what: "customer id",
                value: String::new(),
            });
        }
        let date = match date_col {
            Some(d) => {
                let raw = record[position[d]].trim();
                Some(NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| {
                    IngestError::InvalidKey {
                        line,
                        what: "date",
                        value: raw.to_string(),
                    }
                })?)
            }
            None => None,
        };
        let c = *customer_index.entry(id.to_string()).or_insert_with(|| {
            customer_ids.push(id.to_string());
            per_customer.push(Vec::new());
            customer_ids.len() - 1
        });
        per_customer[c].push(RawRow { date, line, source });
        for (slot, &col) in value_cols.iter().enumerate() {
            let cell = &record[position[col]];
            match schema[col].kind {
                ColumnKind::Continuous => floats[slot].push(parse_continuous(cell)),
                _ => codes[slot].push(parse_code(cell, &schema[col].name)?),
            }
        }
        source += 1;
    }
    if source == 0 {
        return Err(IngestError::EmptyFile);
    }

    let mut order = Vec::with_capacity(source);
    let mut offsets = Vec::with_capacity(customer_ids.len() + 1);
    offsets.push(0);
    let mut dates = date_col.map(|_| Vec::with_capacity(source));
    for (c, rows) in per_customer.iter_mut().enumerate() {
        if rows.len() > MAX_STATEMENTS {
            return Err(IngestError::TooManyStatements {
                customer: customer_ids[c].clone(),
                count: rows.len(),
            });
        }
        if date_col.is_some() {
            rows.sort_by_key(|r| (r.date, r.line));
            if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
                return Err(IngestError::DuplicateStatement {
                    customer: customer_ids[c].clone(),
                    date: w[0].date.map(|d| d.to_string()).unwrap_or_default(),
                });
            }
        }
        for r in rows.iter() {
            order.push(r.source);
            if let (Some(ds), Some(d)) = (dates.as_mut(), r.date) {
                ds.push(d);
            }
        }
        offsets.push(order.len());
    }

    let columns = value_cols
        .iter()
        .enumerate()
        .map(|(slot, &col)| {
            let data = match schema[col].kind {
                ColumnKind::Continuous => {
                    ColumnData::Float64(order.iter().map(|&r| floats[slot][r]).collect())
                }
                _ => ColumnData::Int32(order.iter().map(|&r| codes[slot][r]).collect()),
            };
            Column {
                name: schema[col].name.clone(),
                kind: schema[col].kind,
                data,
            }
        })
        .collect();

    Ok(StatementTable {
        schema: schema.to_vec(),
        customer_ids,
        offsets,
        dates,
        columns,
    })
}

/// Round `value` to the nearest multiple of `precision`, ties away from zero.
pub fn round_to(value: f64, precision: f64) -> f64 {
    let inv = 1.0 / precision;
    let scale = inv.round();
    let rounded = if scale >= 1.0 && (inv - scale).abs() <= 1e-9 * scale {
        // Decimal steps like 0.01 divide by an exact integer so the result
        // is the correctly rounded decimal.
        (value * scale).round() / scale
    } else {
        (value / precision).round() * precision
    };
    // -0.004 rounds to 0, not -0
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}

pub fn denoise_round(mut table: StatementTable, precision: f64) -> Result<StatementTable, IngestError> {
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(IngestError::NonPositivePrecision(precision));
    }
    table.columns.par_iter_mut().for_each(|col| {
        if col.kind != ColumnKind::Continuous {
            return;
        }
        match &mut col.data {
            ColumnData::Float64(v) => v.iter_mut().filter(|x| !x.is_nan()).for_each(|x| {
                *x = round_to(*x, precision);
            }),
            ColumnData::Float32(v) => v.iter_mut().filter(|x| !x.is_nan()).for_each(|x| {
                *x = round_to(f64::from(*x), precision) as f32;
            }),
            _ => {}
        }
    });
    Ok(table)
}

/// Narrowest integer storage holding `max_code`, never narrower than `hint`.
pub fn code_storage(max_code: i32, hint: Storage) -> Option<Storage> {
    let needed = if max_code <= i32::from(i8::MAX) {
        Storage::Int8
    } else if max_code <= MAX_CODE {
        Storage::Int16
    } else {
        return None;
    };
    let hint = if hint == Storage::Float32 { Storage::Int8 } else { hint };
    Some(needed.max(hint))
}

pub fn compact_types(mut table: StatementTable) -> Result<StatementTable, IngestError> {
    let hints: HashMap<String, Storage> = table
        .schema
        .iter()
        .map(|c| (c.name.clone(), c.storage))
        .collect();
    let compacted: Result<Vec<Column>, IngestError> = std::mem::take(&mut table.columns)
        .into_par_iter()
        .map(|col| {
            let data = match col.data {
                ColumnData::Float64(v) => ColumnData::Float32(v.into_iter().map(|x| x as f32).collect()),
                ColumnData::Float32(v) => ColumnData::Float32(v),
                ColumnData::Int32(v) => {
                    let max = v.iter().copied().max().unwrap_or(MISSING_CODE);
                    let hint = hints.get(&col.name).copied().unwrap_or_default();
                    match code_storage(max, hint) {
                        Some(Storage::Int8) => ColumnData::Int8(v.into_iter().map(|x| x as i8).collect()),
                        Some(_) => ColumnData::Int16(v.into_iter().map(|x| x as i16).collect()),
                        None => {
                            return Err(IngestError::CodeOverflow {
                                column: col.name.clone(),
                                code: i64::from(max),
                            })
                        }
                    }
                }
                ColumnData::Int16(v) => {
                    let max = v.iter().copied().max().unwrap_or(-1);
                    if max <= i16::from(i8::MAX) && hints.get(&col.name) != Some(&Storage::Int16) {
                        ColumnData::Int8(v.into_iter().map(|x| x as i8).collect())
                    } else {
                        ColumnData::Int16(v)
                    }
                }
                ColumnData::Int8(v) => ColumnData::Int8(v),
            };
            Ok(Column { data, ..col })
        })
        .collect();
    table.columns = compacted?;
    Ok(table)
}

/// Count of cells masked per continuous column, in column order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MaskReport {
    pub masked: Vec<(String, usize)>,
}

impl MaskReport {
    pub fn total(&self) -> usize {
        self.masked.iter().map(|(_, n)| n).sum()
    }
}

pub fn mask_outliers(mut table: StatementTable) -> (StatementTable, MaskReport) {
    let ranges: HashMap<String, [f64; 2]> = table
        .schema
        .iter()
        .filter_map(|c| c.valid_range.map(|r| (c.name.clone(), r)))
        .collect();
    let masked = table
        .columns
        .par_iter_mut()
        .filter(|c| c.kind == ColumnKind::Continuous)
        .map(|col| {
            let Some(&[low, high]) = ranges.get(&col.name) else {
                return (col.name.clone(), 0);
            };
            let outside = |x: f64| !x.is_nan() && (x < low || x > high);
            let mut n = 0;
            match &mut col.data {
                ColumnData::Float64(v) => {
                    for x in v.iter_mut().filter(|x| outside(**x)) {
                        *x = f64::NAN;
                        n += 1;
                    }
                }
                ColumnData::Float32(v) => {
                    for x in v.iter_mut().filter(|x| outside(f64::from(**x))) {
                        *x = f32::NAN;
                        n += 1;
                    }
                }
                _ => {}
            }
            (col.name.clone(), n)
        })
        .collect();
    (table, MaskReport { masked })
}

pub fn join_labels(table: StatementTable, labels: &HashMap<String, u8>) -> Result<LabeledTable, IngestError> {
    let mut joined = Vec::with_capacity(table.n_customers());
    for id in &table.customer_ids {
        match labels.get(id) {
            Some(&y) if y <= 1 => joined.push(y),
            Some(&y) => {
                return Err(IngestError::InvalidLabel {
                    customer: id.clone(),
                    value: y.to_string(),
                })
            }
            None => return Err(IngestError::MissingLabel(id.clone())),
        }
    }
    let unmatched_labels = labels.len() - table.n_customers();
    if unmatched_labels > 0 {
        log::warn!("{unmatched_labels} labels have no matching customer");
    }
    Ok(LabeledTable {
        table,
        labels: joined,
        unmatched_labels,
    })
}

/// Run the standard cleaning chain: round, mask outliers, compact.
pub fn clean(table: StatementTable, precision: f64) -> Result<(StatementTable, MaskReport), IngestError> {
    let table = denoise_round(table, precision)?;
    let (table, report) = mask_outliers(table);
    Ok((compact_types(table)?, report))
}
