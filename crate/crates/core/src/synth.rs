//! Seeded synthetic statement data with a planted default signal.
//!
//! Each customer has a latent level per continuous column; statements add
//! per-statement noise around it. The default probability is a logistic
//! function of the customer's observed mean over the signal columns.
//! Negatives are subsampled by `neg_keep_rate`, positives are always kept.

use std::collections::HashSet;
use std::path::Path;

use chrono::{Months, NaiveDate};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, ColumnKind, ColumnSchema, IngestError, LabeledTable, StatementTable, Storage, MAX_STATEMENTS};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 10 customers, got {0}")]
    TooFewCustomers(usize),
    #[error("labels need at least one signal feature")]
    NoSignal,
    #[error("signal feature `{0}` is not a generated continuous column")]
    UnknownSignalFeature(String),
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

/// How labels follow from the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Bernoulli draw from the logistic default probability.
    #[default]
    Logistic,
    /// Default exactly when the signal mean exceeds `threshold`.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Customers in the output, after negative subsampling.
    pub n_customers: usize,
    /// Share of customers with a full 13-statement history.
    pub frac_full: f64,
    pub n_continuous: usize,
    pub n_categorical: usize,
    pub signal_features: Vec<String>,
    /// Half-width of the uniform noise added to 0.01-rounded values.
    pub noise_amplitude: f64,
    pub neg_keep_rate: f64,
    pub seed: u64,
    pub label_mode: LabelMode,
    pub intercept: f64,
    pub slope: f64,
    /// Signal mean above which a customer defaults in threshold mode.
    pub threshold: f64,
    /// Per-cell probability of an empty continuous or categorical cell.
    pub missing_rate: f64,
    /// Per-cell probability of an out-of-range continuous value.
    pub outlier_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_customers: 5000,
            frac_full: 0.8,
            n_continuous: 20,
            n_categorical: 3,
            signal_features: vec!["f_0".into()],
            noise_amplitude: 0.004,
            neg_keep_rate: 0.05,
            seed: 0,
            label_mode: LabelMode::Logistic,
            intercept: -7.0,
            slope: 3.0,
            threshold: 1.9,
            missing_rate: 0.01,
            outlier_rate: 0.001,
        }
    }
}

/// Bounds written into the schema; outliers land beyond them.
pub const VALID_RANGE: [f64; 2] = [-50.0, 50.0];
const OUTLIER_VALUE: f64 = 999.0;
const N_CODES: u32 = 7;
const STATEMENT_NOISE: f64 = 0.5;

impl SynthConfig {
    pub fn continuous_names(&self) -> Vec<String> {
        (0..self.n_continuous).map(|i| format!("f_{i}")).collect()
    }

    pub fn categorical_names(&self) -> Vec<String> {
        (0..self.n_categorical).map(|i| format!("c_{i}")).collect()
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        let mut schema = vec![
            ColumnSchema::new("customer_ID", ColumnKind::Identifier, Storage::Float32),
            ColumnSchema::new("S_2", ColumnKind::Date, Storage::Float32),
        ];
        schema.extend(self.continuous_names().into_iter().map(|n| {
            ColumnSchema::new(n, ColumnKind::Continuous, Storage::Float32).with_range(VALID_RANGE[0], VALID_RANGE[1])
        }));
        schema.extend(
            self.categorical_names()
                .into_iter()
                .map(|n| ColumnSchema::new(n, ColumnKind::Categorical, Storage::Int8)),
        );
        schema
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_customers < 10 {
            return Err(SynthError::TooFewCustomers(self.n_customers));
        }
        if self.signal_features.is_empty() {
            return Err(SynthError::NoSignal);
        }
        let names: HashSet<String> = self.continuous_names().into_iter().collect();
        if let Some(f) = self.signal_features.iter().find(|f| !names.contains(*f)) {
            return Err(SynthError::UnknownSignalFeature(f.clone()));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.frac_full) || !unit(self.missing_rate) || !unit(self.outlier_rate) {
            return Err(SynthError::InvalidConfig("frac_full, missing_rate and outlier_rate must lie in [0, 1]".into()));
        }
        if !(self.neg_keep_rate > 0.0 && self.neg_keep_rate <= 1.0) {
            return Err(SynthError::InvalidConfig(format!("neg_keep_rate {} outside (0, 1]", self.neg_keep_rate)));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude < 0.005) {
            return Err(SynthError::InvalidConfig(format!(
                "noise_amplitude {} outside [0, 0.005)",
                self.noise_amplitude
            )));
        }
        Ok(())
    }
}

/// Generated dataset: the CSV text plus its labels and schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub schema: Vec<ColumnSchema>,
    pub csv: String,
    pub customer_ids: Vec<String>,
    pub labels: Vec<u8>,
    /// Statement count per customer.
    pub statement_counts: Vec<usize>,
    /// Candidates drawn before subsampling.
    pub drawn: usize,
}

impl SynthData {
    pub fn table(&self) -> Result<StatementTable, IngestError> {
        ingest::parse_reader(self.csv.as_bytes(), &self.schema)
    }

    pub fn labeled(&self) -> Result<LabeledTable, IngestError> {
        let labels = self.customer_ids.iter().cloned().zip(self.labels.iter().copied()).collect();
        ingest::join_labels(self.table()?, &labels)
    }

    pub fn write_files(&self, data: impl AsRef<Path>, labels: impl AsRef<Path>) -> crate::Result<()> {
        let data = data.as_ref();
        std::fs::write(data, &self.csv).map_err(|e| crate::Error::io(data, e))?;
        crate::io::write_labels(labels, &self.customer_ids, &self.labels)
    }

    pub fn write_schema(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        crate::io::write_json(path, &self.schema)
    }
}

fn round_cent(x: f64) -> f64 {
    // adding 0.0 turns -0.0 into 0.0
    (x * 100.0).round() / 100.0 + 0.0
}

struct Statement {
    continuous: Vec<Option<f64>>,
    categorical: Vec<Option<u32>>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_customers;
    let n_full = (config.frac_full * n as f64).floor() as usize;
    let mut full = vec![false; n];
    for i in index::sample(&mut rng, n, n_full) {
        full[i] = true;
    }
    let signal_idx: Vec<usize> = config
        .signal_features
        .iter()
        .map(|f| config.continuous_names().iter().position(|c| c == f).expect("validated"))
        .collect();

    let cont_names = config.continuous_names();
    let cat_names = config.categorical_names();
    let mut csv = String::from("customer_ID,S_2");
    for name in cont_names.iter().chain(&cat_names) {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');

    // separate stream so the noise does not move customer draws
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05EE_D0F0_015E);
    let last_date = NaiveDate::from_ymd_opt(2018, 3, 15).expect("valid date");
    let mut customer_ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut statement_counts = Vec::with_capacity(n);
    let mut drawn = 0;

    for (slot, &is_full) in full.iter().enumerate() {
        let count = if is_full {
            MAX_STATEMENTS
        } else {
            rng.random_range(1..MAX_STATEMENTS)
        };
        let (statements, label) = loop {
            drawn += 1;
            let statements = draw_customer(config, count, &mut rng);
            let signal = signal_mean(&statements, &signal_idx);
            let label = match config.label_mode {
                LabelMode::Logistic => {
                    let p = 1.0 / (1.0 + (-(config.intercept + config.slope * signal)).exp());
                    u8::from(rng.random::<f64>() < p)
                }
                LabelMode::Threshold => u8::from(signal > config.threshold),
            };
            if label == 1 || rng.random::<f64>() < config.neg_keep_rate {
                break (statements, label);
            }
        };

        let id = format!("C{slot:07}");
        for (i, st) in statements.iter().enumerate() {
            let date = last_date - Months::new((count - 1 - i) as u32);
            csv.push_str(&id);
            csv.push(',');
            csv.push_str(&date.format("%Y-%m-%d").to_string());
            for v in &st.continuous {
                csv.push(',');
                if let Some(v) = v {
                    let noisy = if config.noise_amplitude > 0.0 {
                        v + noise_rng.random_range(-config.noise_amplitude..=config.noise_amplitude)
                    } else {
                        *v
                    };
                    csv.push_str(&noisy.to_string());
                }
            }
            for c in &st.categorical {
                csv.push(',');
                if let Some(c) = c {
                    csv.push_str(&c.to_string());
                }
            }
            csv.push('\n');
        }
        customer_ids.push(id);
        labels.push(label);
        statement_counts.push(count);
    }

    Ok(SynthData {
        schema: config.schema(),
        csv,
        customer_ids,
        labels,
        statement_counts,
        drawn,
    })
}

/// Statements of one candidate customer, values already rounded to 0.01.
fn draw_customer(config: &SynthConfig, count: usize, rng: &mut ChaCha8Rng) -> Vec<Statement> {
    let levels: Vec<f64> = (0..config.n_continuous).map(|_| rng.sample(StandardNormal)).collect();
    let favourite: Vec<u32> = (0..config.n_categorical).map(|_| rng.random_range(0..N_CODES)).collect();
    (0..count)
        .map(|_| {
            let continuous = levels
                .iter()
                .map(|&level| {
                    if rng.random::<f64>() < config.missing_rate {
                        return None;
                    }
                    if rng.random::<f64>() < config.outlier_rate {
                        return Some(OUTLIER_VALUE);
                    }
                    let e: f64 = rng.sample(StandardNormal);
                    Some(round_cent(level + STATEMENT_NOISE * e).clamp(VALID_RANGE[0], VALID_RANGE[1]))
                })
                .collect();
            let categorical = favourite
                .iter()
                .map(|&fav| {
                    if rng.random::<f64>() < config.missing_rate {
                        None
                    } else if rng.random::<f64>() < 0.7 {
                        Some(fav)
                    } else {
                        Some(rng.random_range(0..N_CODES))
                    }
                })
                .collect();
            Statement { continuous, categorical }
        })
        .collect()
}

/// Mean of the observed, in-range signal values over all statements.
fn signal_mean(statements: &[Statement], signal_idx: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for st in statements {
        for &j in signal_idx {
            if let Some(v) = st.continuous[j] {
                if (VALID_RANGE[0]..=VALID_RANGE[1]).contains(&v) {
                    sum += v;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
