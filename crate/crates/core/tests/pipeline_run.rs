use std::collections::BTreeSet;
use std::path::Path;

use credit_stack::gbdt::TrainConfig;
use credit_stack::pipeline::{self, PipelineConfig, TestPath};
use credit_stack::synth::{self, SynthConfig};
use credit_stack::ErrorKind;

fn files_under(root: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}

/// Writes a small dataset and a config file next to it; returns the config path.
fn setup(dir: &Path, test_path: &str) -> std::path::PathBuf {
    let data = synth::generate(&SynthConfig { n_customers: 600, seed: 3, ..SynthConfig::default() }).unwrap();
    std::fs::create_dir_all(dir.join("data")).unwrap();
    data.write_files(dir.join("data/statements.csv"), dir.join("data/labels.csv")).unwrap();
    data.write_schema(dir.join("data/schema.json")).unwrap();
    let config = format!(
        r#"{{
  "data": "data/statements.csv",
  "labels": "data/labels.csv",
  "schema": "data/schema.json",
  "output_dir": "out",
  "folds": 3,
  "seed": 5,
  "feature_sets": {{
    "full": {{ "continuous_stats": ["mean", "std", "min", "max", "last", "median"], "categorical_stats": ["count", "last", "nunique"], "lag_enabled": true }},
    "tail": {{ "continuous_stats": ["mean", "last"], "recent_window": 3, "encoding": "one-hot" }}
  }},
  "members": [
    {{ "name": "a", "feature_set": "full", "learner": {{ "rounds": 10, "max_bins": 32 }} }},
    {{ "name": "b", "feature_set": "tail", "learner": {{ "rounds": 10, "max_bins": 32, "goss_a": 0.2, "goss_b": 0.1 }} }},
    {{ "name": "m", "feature_set": "tail", "learner": {{ "rounds": 10, "max_bins": 32 }}, "meta_from": ["a", "b"] }}
  ],
  "test_path": "{test_path}",
  "report": {{ "top_n": 5 }}
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn manifest_lists_exactly_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(setup(dir.path(), "fold_mean")).unwrap();
    let summary = pipeline::run_pipeline(&cfg).unwrap();
    let out = dir.path().join("out");
    let manifest = pipeline::read_manifest(&out).unwrap();
    let listed: BTreeSet<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
    let mut on_disk = files_under(&out);
    on_disk.remove("manifest.json");
    assert_eq!(listed, on_disk);
    for f in &manifest.files {
        let path = out.join(&f.path);
        assert_eq!(pipeline::file_digest(&path).unwrap(), f.sha256);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), f.bytes);
    }
    // nothing was written next to the inputs
    assert_eq!(
        files_under(&dir.path().join("data")),
        ["labels.csv", "schema.json", "statements.csv"].iter().map(|s| s.to_string()).collect()
    );

    let names: Vec<&str> = summary.members.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["a", "b", "m"]);
    assert_eq!(summary.blend.members, ["a", "b", "m"]);
    assert!((summary.blend.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(summary.n_train + summary.n_holdout, 600);
    assert_eq!(manifest.predictions().count(), 8);
    assert!(listed.contains("models/m/fold_2.json"));
    assert!(listed.contains("reports/a_importance.svg"));

    // the cv plan covers exactly the training customers
    let plan = pipeline::read_cv_plan(&out, 5).unwrap();
    assert_eq!(plan.len(), summary.n_train);
}

#[test]
fn refit_path_adds_one_model_per_member() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(setup(dir.path(), "refit")).unwrap();
    assert_eq!(cfg.test_path, TestPath::Refit);
    pipeline::run_pipeline(&cfg).unwrap();
    let manifest = pipeline::read_manifest(dir.path().join("out")).unwrap();
    let models: Vec<&str> = manifest
        .files
        .iter()
        .map(|f| f.path.as_str())
        .filter(|p| p.starts_with("models/a/"))
        .collect();
    assert_eq!(models.len(), 4, "{models:?}");
}

#[test]
fn invalid_configs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = PipelineConfig::load(setup(dir.path(), "fold_mean")).unwrap();

    let mut c = good.clone();
    c.members[2].meta_from = vec!["m".into()];
    assert_eq!(c.validate().unwrap_err().kind(), ErrorKind::Config);

    let mut c = good.clone();
    c.members[0].name = "ensemble".into();
    assert_eq!(c.validate().unwrap_err().kind(), ErrorKind::Config);

    let mut c = good.clone();
    c.members[1].feature_set = "missing".into();
    assert_eq!(c.validate().unwrap_err().kind(), ErrorKind::Config);

    let mut c = good.clone();
    c.members[0].learner = TrainConfig { max_bins: 1, ..TrainConfig::default() };
    assert_eq!(c.validate().unwrap_err().kind(), ErrorKind::Config);

    let mut c = good;
    c.data = dir.path().join("nope.csv");
    assert_eq!(pipeline::run_pipeline(&c).unwrap_err().kind(), ErrorKind::Data);

    std::fs::write(dir.path().join("bad.json"), r#"{"data": "x", "surprise": 1}"#).unwrap();
    assert_eq!(PipelineConfig::load(dir.path().join("bad.json")).unwrap_err().kind(), ErrorKind::Config);
}
