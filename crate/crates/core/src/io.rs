//! Label and prediction CSV files.
//!
//! Labels are `customer_ID,target`; predictions are `customer_ID,prediction`
//! with probabilities written to 17 significant digits.

use std::collections::HashMap;
use std::path::Path;

use crate::sig17;
use crate::{Error, Result};

/// Labels in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelFile {
    pub customer_ids: Vec<String>,
    pub labels: Vec<u8>,
}

impl LabelFile {
    pub fn to_map(&self) -> HashMap<String, u8> {
        self.customer_ids.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    /// Labels aligned to `ids`; every id must be present.
    pub fn aligned(&self, ids: &[String]) -> Result<Vec<u8>> {
        let map = self.to_map();
        ids.iter()
            .map(|id| {
                map.get(id)
                    .copied()
                    .ok_or_else(|| Error::Alignment(format!("no label for customer `{id}`")))
            })
            .collect()
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn open_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelFile> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let mut out = LabelFile::default();
    let mut seen = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let (Some(id), Some(target)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::format(path, format!("line {}: expected 2 fields", i + 2)));
        };
        let y: u8 = match target.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::format(
                    path,
                    format!("line {}: label `{other}` is not 0 or 1", i + 2),
                ))
            }
        };
        if seen.insert(id.to_string(), y).is_some() {
            return Err(Error::format(path, format!("duplicate label for `{id}`")));
        }
        out.customer_ids.push(id.to_string());
        out.labels.push(y);
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, ids: &[String], labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut w = open_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(["customer_ID", "target"]).map_err(err)?;
    for (id, y) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), if *y == 1 { "1" } else { "0" }])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Predictions in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionFile {
    pub customer_ids: Vec<String>,
    pub predictions: Vec<f64>,
}

impl PredictionFile {
    /// Predictions reordered to `ids`.
    pub fn aligned(&self, ids: &[String]) -> Result<Vec<f64>> {
        let map: HashMap<&str, f64> = self
            .customer_ids
            .iter()
            .map(String::as_str)
            .zip(self.predictions.iter().copied())
            .collect();
        ids.iter()
            .map(|id| {
                map.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Alignment(format!("no prediction for customer `{id}`")))
            })
            .collect()
    }
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictionFile> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let mut out = PredictionFile::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let (Some(id), Some(p)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::format(path, format!("line {}: expected 2 fields", i + 2)));
        };
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad probability `{p}`", i + 2)))?;
        out.customer_ids.push(id.to_string());
        out.predictions.push(p);
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, ids: &[String], predictions: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = open_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(["customer_ID", "prediction"]).map_err(err)?;
    for (id, p) in ids.iter().zip(predictions) {
        w.write_record([id.as_str(), &sig17::format(*p)]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serialize to pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}
