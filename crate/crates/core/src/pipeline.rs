//! Config-driven end-to-end run.
//!
//! Stages: prep, split, features (per feature set), member training
//! (out-of-fold, with optional meta members), blend, evaluate, importance.
//! Every file written is listed in `manifest.json` with its SHA-256 digest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blend::{self, EnsembleSpec};
use crate::cv_stack::{self, FoldPlan, OofResult};
use crate::features::{self, AggregationSpec, FeatureMatrix, Vocabulary};
use crate::gbdt::{BoostedModel, ImportanceKind, TrainConfig};
use crate::ingest::{self, StatementTable};
use crate::metric::{self, MetricReport};
use crate::report;
use crate::{io, Error, Result};

/// Grid step used for blend weights unless configured.
pub const DEFAULT_BLEND_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub name: String,
    /// Key into `feature_sets`.
    pub feature_set: String,
    #[serde(default)]
    pub learner: TrainConfig,
    /// Earlier members whose out-of-fold predictions become meta columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub meta_from: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestPath {
    /// Average the fold models.
    #[default]
    FoldMean,
    /// Train one extra model on all training rows.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendConfig {
    pub step: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_BLEND_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub importance: bool,
    pub kind: ImportanceKind,
    pub box_plot: bool,
    pub top_n: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            importance: true,
            kind: ImportanceKind::AverageGain,
            box_plot: true,
            top_n: 20,
        }
    }
}

fn default_precision() -> f64 {
    0.01
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub labels: PathBuf,
    pub schema: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_precision")]
    pub precision: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Holdout is fold 0 of a stratified plan with this many folds.
    #[serde(default = "default_folds")]
    pub holdout_folds: usize,
    #[serde(default)]
    pub seed: u64,
    pub feature_sets: BTreeMap<String, AggregationSpec>,
    pub members: Vec<MemberConfig>,
    #[serde(default)]
    pub test_path: TestPath,
    #[serde(default)]
    pub blend: BlendConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PipelineConfig {
    /// Read a config; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config: PipelineConfig = io::read_json(path).map_err(|e| match e {
            Error::Format { path, message } => Error::Config(format!("{path}: {message}")),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.data,
            &mut config.labels,
            &mut config.schema,
            &mut config.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.members.is_empty() {
            return bad("at least one member is required".into());
        }
        if self.folds < 2 || self.holdout_folds < 2 {
            return bad("folds and holdout_folds must be at least 2".into());
        }
        if !(self.precision > 0.0) {
            return bad(format!("precision {} must be positive", self.precision));
        }
        if self.report.top_n == 0 {
            return bad("report.top_n must be at least 1".into());
        }
        for (name, spec) in &self.feature_sets {
            if !valid_name(name) {
                return bad(format!("feature set name `{name}` must be alphanumeric, `_` or `-`"));
            }
            spec.validate().map_err(|e| Error::Config(format!("feature set `{name}`: {e}")))?;
        }
        let mut seen = BTreeSet::new();
        for m in &self.members {
            if !valid_name(&m.name) || m.name == "ensemble" {
                return bad(format!("member name `{}` is reserved or not alphanumeric", m.name));
            }
            if !self.feature_sets.contains_key(&m.feature_set) {
                return bad(format!("member `{}` uses unknown feature set `{}`", m.name, m.feature_set));
            }
            for src in &m.meta_from {
                if !seen.contains(src.as_str()) {
                    return bad(format!("member `{}` stacks on `{src}`, which is not an earlier member", m.name));
                }
            }
            if !seen.insert(m.name.as_str()) {
                return bad(format!("duplicate member name `{}`", m.name));
            }
            m.learner
                .validate()
                .map_err(|e| Error::Config(format!("member `{}`: {e}", m.name)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn predictions(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.files.iter().filter(|f| f.path.starts_with("predictions/"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub name: String,
    /// On out-of-fold predictions of the training split.
    pub oof: MetricReport,
    pub holdout: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub members: Vec<MemberMetrics>,
    pub ensemble: MemberMetrics,
    pub blend: EnsembleSpec,
    pub n_train: usize,
    pub n_holdout: usize,
}

/// Output directory that remembers what it wrote.
struct RunDir {
    root: PathBuf,
    written: BTreeSet<String>,
}

impl RunDir {
    fn file(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.written.insert(rel.to_string());
        Ok(path)
    }

    fn manifest(&self) -> Result<Manifest> {
        let files = self
            .written
            .iter()
            .map(|rel| {
                let path = self.root.join(rel);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(ManifestEntry {
                    path: rel.clone(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest { files })
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| Error::stage(name, e))
}

/// Vocabulary fitted the same way `transform` will see the table.
fn fit_vocabulary(table: &StatementTable, spec: &AggregationSpec) -> Result<Vocabulary> {
    Ok(match spec.recent_window.and_then(NonZeroUsize::new) {
        Some(k) => Vocabulary::fit(&features::select_recent_window(table, k), spec)?,
        None => Vocabulary::fit(table, spec)?,
    })
}

struct MemberOutput {
    oof: Vec<f64>,
    holdout: Vec<f64>,
    fit: OofResult,
}

/// Run every stage and write the run directory described by `config`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let mut out = RunDir {
        root: config.output_dir.clone(),
        written: BTreeSet::new(),
    };
    std::fs::create_dir_all(&out.root).map_err(|e| Error::io(&out.root, e))?;

    let labeled = stage("prep", || {
        let schema = ingest::read_schema(&config.schema)?;
        let raw = ingest::parse_csv(&config.data, &schema)?;
        let (table, mask) = ingest::clean(raw, config.precision)?;
        let labels = io::read_labels(&config.labels)?;
        let labeled = ingest::join_labels(table, &labels.to_map())?;
        labeled.table.write_csv_file(out.file("prep/cleaned.csv")?)?;
        io::write_json(out.file("prep/mask_report.json")?, &mask)?;
        Ok(labeled)
    })?;

    let (train_table, holdout_table, train_labels, holdout_labels, cv_plan) = stage("split", || {
        let ids = labeled.table.customer_ids();
        let outer = cv_stack::make_folds_keyed(ids, &labeled.labels, config.holdout_folds, config.seed)?;
        outer.write_csv(out.file("folds/holdout.csv")?)?;
        let (hold, train): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|&c| outer.assignment[c] == 0);
        let pick = |rows: &[usize]| rows.iter().map(|&r| labeled.labels[r]).collect::<Vec<u8>>();
        let train_labels = pick(&train);
        let train_table = labeled.table.select_customers(&train);
        let plan = cv_stack::make_folds_keyed(train_table.customer_ids(), &train_labels, config.folds, config.seed)?;
        plan.write_csv(out.file("folds/cv.csv")?)?;
        Ok((train_table, labeled.table.select_customers(&hold), train_labels, pick(&hold), plan))
    })?;

    let used_sets: BTreeSet<&str> = config.members.iter().map(|m| m.feature_set.as_str()).collect();
    let mut matrices: HashMap<&str, (FeatureMatrix, FeatureMatrix)> = HashMap::new();
    for set in used_sets {
        let pair = stage(&format!("features:{set}"), || {
            let spec = &config.feature_sets[set];
            let vocab = fit_vocabulary(&train_table, spec)?;
            let train = features::transform(&train_table, spec, Some(&vocab))?;
            let holdout = features::transform(&holdout_table, spec, Some(&vocab))?;
            io::write_json(out.file(&format!("features/{set}/vocabulary.json"))?, &vocab)?;
            train.save(out.file(&format!("features/{set}/train.csfm"))?)?;
            holdout.save(out.file(&format!("features/{set}/holdout.csfm"))?)?;
            Ok((train, holdout))
        })?;
        matrices.insert(set, pair);
    }

    let train_ids = train_table.customer_ids().to_vec();
    let holdout_ids = holdout_table.customer_ids().to_vec();
    let mut outputs: Vec<(String, MemberOutput)> = Vec::new();
    for member in &config.members {
        let result = stage(&format!("train:{}", member.name), || {
            let (base_train, base_holdout) = &matrices[member.feature_set.as_str()];
            let learner = TrainConfig {
                seed: config.seed.wrapping_add(member.learner.seed),
                ..member.learner.clone()
            };
            let (fit, holdout_matrix) = if member.meta_from.is_empty() {
                let fit = cv_stack::train_oof(base_train, &train_labels, &cv_plan, &learner)?;
                (fit, base_holdout.clone())
            } else {
                let source = |name: &String| &outputs.iter().find(|(n, _)| n == name).expect("validated").1;
                let oof: Vec<&[f64]> = member.meta_from.iter().map(|n| source(n).oof.as_slice()).collect();
                let held: Vec<&[f64]> = member.meta_from.iter().map(|n| source(n).holdout.as_slice()).collect();
                let train_aug = cv_stack::append_meta(base_train, &oof)?;
                let holdout_aug = cv_stack::append_meta(base_holdout, &held)?;
                let fit = cv_stack::train_meta(&train_aug, &train_labels, &cv_plan, &learner)?;
                (fit, holdout_aug)
            };
            for fm in &fit.models {
                fm.model.save(out.file(&format!("models/{}/fold_{}.json", member.name, fm.fold))?)?;
            }
            let holdout = match config.test_path {
                TestPath::FoldMean => cv_stack::predict_with_fold_models(&fit.boosted_models(), &holdout_matrix)?,
                TestPath::Refit => {
                    let train_matrix = if member.meta_from.is_empty() {
                        base_train.clone()
                    } else {
                        let oof: Vec<&[f64]> = member
                            .meta_from
                            .iter()
                            .map(|n| outputs.iter().find(|(m, _)| m == n).expect("validated").1.oof.as_slice())
                            .collect();
                        cv_stack::append_meta(base_train, &oof)?
                    };
                    let model = cv_stack::refit_full(&train_matrix, &train_labels, &learner)?;
                    model.save(out.file(&format!("models/{}/refit.json", member.name))?)?;
                    model.predict(&holdout_matrix)?
                }
            };
            let oof = fit.oof.predictions.clone();
            io::write_predictions(out.file(&format!("predictions/{}_oof.csv", member.name))?, &train_ids, &oof)?;
            io::write_predictions(
                out.file(&format!("predictions/{}_holdout.csv", member.name))?,
                &holdout_ids,
                &holdout,
            )?;
            Ok(MemberOutput { oof, holdout, fit })
        })?;
        outputs.push((member.name.clone(), result));
    }

    let (spec, ensemble_oof, ensemble_holdout) = stage("blend", || {
        let names: Vec<String> = outputs.iter().map(|(n, _)| n.clone()).collect();
        let oof: Vec<&[f64]> = outputs.iter().map(|(_, o)| o.oof.as_slice()).collect();
        let held: Vec<&[f64]> = outputs.iter().map(|(_, o)| o.holdout.as_slice()).collect();
        let weights = if outputs.len() == 1 {
            vec![1.0]
        } else {
            blend::optimize_weights(&oof, &train_labels, config.blend.step)?.weights
        };
        let spec = EnsembleSpec::new(names, weights)?;
        let ensemble_oof = blend::blend(&oof, &spec.weights)?;
        let ensemble_holdout = blend::blend(&held, &spec.weights)?;
        io::write_json(out.file("blend.json")?, &spec)?;
        io::write_predictions(out.file("predictions/ensemble_oof.csv")?, &train_ids, &ensemble_oof)?;
        io::write_predictions(out.file("predictions/ensemble_holdout.csv")?, &holdout_ids, &ensemble_holdout)?;
        Ok((spec, ensemble_oof, ensemble_holdout))
    })?;

    let summary = stage("evaluate", || {
        let score = |name: &str, oof: &[f64], holdout: &[f64]| -> Result<MemberMetrics> {
            Ok(MemberMetrics {
                name: name.to_string(),
                oof: metric::amex_metric(&train_labels, oof)?,
                holdout: metric::amex_metric(&holdout_labels, holdout)?,
            })
        };
        let members = outputs
            .iter()
            .map(|(n, o)| score(n, &o.oof, &o.holdout))
            .collect::<Result<Vec<_>>>()?;
        let summary = RunSummary {
            members,
            ensemble: score("ensemble", &ensemble_oof, &ensemble_holdout)?,
            blend: spec.clone(),
            n_train: train_ids.len(),
            n_holdout: holdout_ids.len(),
        };
        io::write_json(out.file("metrics.json")?, &summary)?;
        Ok(summary)
    })?;

    if config.report.importance {
        stage("importance", || {
            for (name, o) in &outputs {
                let models: Vec<BoostedModel> = o.fit.boosted_models();
                let rep = report::build_importance_report(&models, config.report.kind)?;
                rep.save_json(out.file(&format!("reports/{name}_importance.json"))?)?;
                let csv = out.file(&format!("reports/{name}_importance.csv"))?;
                std::fs::write(&csv, rep.summary_csv()).map_err(|e| Error::io(&csv, e))?;
                if config.report.box_plot {
                    let svg = out.file(&format!("reports/{name}_importance.svg"))?;
                    let doc = report::render_box_plot(&rep, config.report.top_n)?;
                    std::fs::write(&svg, doc).map_err(|e| Error::io(&svg, e))?;
                }
            }
            Ok(())
        })?;
    }

    stage("manifest", || {
        let manifest = out.manifest()?;
        io::write_json(config.output_dir.join("manifest.json"), &manifest)
    })?;
    Ok(summary)
}

/// Manifest written by a previous run.
pub fn read_manifest(output_dir: impl AsRef<Path>) -> Result<Manifest> {
    io::read_json(output_dir.as_ref().join("manifest.json"))
}

/// SHA-256 of a file as lowercase hex.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Fold plan re-read from a run directory.
pub fn read_cv_plan(output_dir: impl AsRef<Path>, seed: u64) -> Result<FoldPlan> {
    FoldPlan::read_csv(output_dir.as_ref().join("folds/cv.csv"), seed)
}
