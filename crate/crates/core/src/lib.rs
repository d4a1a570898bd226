//! Credit-default prediction pipeline.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ingest`]: statement-level CSV parsing and cleaning (rounding, type
//!   compaction, outlier masking, label join).
//! * [`features`]: per-customer aggregation, lag features, categorical
//!   encoding and the binary `CSFM` matrix container.
//! * [`gbdt`]: histogram gradient-boosted trees with logistic loss, GOSS
//!   sampling and gain importance.
//! * [`cv_stack`]: stratified folds, out-of-fold predictions and meta models.
//! * [`blend`]: convex weighted blending and simplex weight search.
//! * [`metric`]: the weighted normalized Gini / 4% default capture metric.
//! * [`synth`]: seeded synthetic statement data.
//! * [`report`]: per-fold importance aggregation and SVG box plots.
//! * [`pipeline`]: the config-driven end-to-end run.

pub mod blend;
pub mod cv_stack;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod ingest;
pub mod io;
pub mod metric;
pub mod pipeline;
pub mod report;
pub mod synth;

mod sig17;

pub use error::{Error, ErrorKind, Result};
