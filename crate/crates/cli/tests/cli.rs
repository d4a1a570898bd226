use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_credit-stack"));
    c.arg("--quiet");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

/// Small synthetic dataset in `dir`: statements.csv, labels.csv, schema.json.
fn synth(dir: &Path, n: usize) {
    std::fs::write(dir.join("synth.json"), format!(r#"{{ "n_customers": {n}, "seed": 4 }}"#)).unwrap();
    ok(
        dir,
        &[
            "synth",
            "--config",
            "synth.json",
            "--out-data",
            "statements.csv",
            "--out-labels",
            "labels.csv",
            "--out-schema",
            "schema.json",
        ],
    );
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn step_by_step_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, 400);
    ok(d, &["prep", "--data", "statements.csv", "--schema", "schema.json", "--out", "clean.csv", "--mask-report", "mask.json"]);
    ok(
        d,
        &[
            "features", "--data", "clean.csv", "--schema", "schema.json", "--encoding", "one-hot", "--vocab-out",
            "vocab.json", "--out", "full.csfm",
        ],
    );
    ok(
        d,
        &[
            "features", "--data", "clean.csv", "--schema", "schema.json", "--window", "3", "--out", "recent.csfm",
        ],
    );
    std::fs::write(d.join("learner.json"), r#"{ "rounds": 15, "max_bins": 32 }"#).unwrap();
    ok(d, &["train", "--features", "full.csfm", "--labels", "labels.csv", "--config", "learner.json", "--model-out", "model.json"]);
    ok(
        d,
        &[
            "stack", "--features", "full.csfm", "--labels", "labels.csv", "--folds", "3", "--base-config",
            "learner.json", "--meta-config", "learner.json", "--out", "stack",
        ],
    );
    for f in ["folds.csv", "base_oof.csv", "base/fold_2.json", "augmented.csfm", "meta_oof.csv", "meta/fold_0.json", "metrics.json"] {
        assert!(d.join("stack").join(f).is_file(), "missing stack/{f}");
    }
    ok(
        d,
        &[
            "blend", "--pred", "stack/base_oof.csv", "--pred", "stack/meta_oof.csv", "--labels", "labels.csv",
            "--out", "blend.json", "--out-pred", "blended.csv",
        ],
    );
    let spec: serde_json::Value = serde_json::from_slice(&read(d, "blend.json")).unwrap();
    assert_eq!(spec["members"], serde_json::json!(["base_oof", "meta_oof"]));

    let out = ok(d, &["eval", "--labels", "labels.csv", "--pred", "blended.csv"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = report["M"].as_f64().unwrap();
    assert!((-0.5..=1.0).contains(&m));

    let out = ok(
        d,
        &[
            "importance", "--model", "stack/base/fold_0.json", "--model", "stack/base/fold_1.json", "--model",
            "stack/base/fold_2.json", "--kind", "total_gain", "--top-n", "3", "--out-svg", "imp.svg", "--out-csv",
            "imp.csv", "--out-json", "imp.json",
        ],
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
    let svg = String::from_utf8(read(d, "imp.svg")).unwrap();
    assert_eq!(svg.matches("<g class=\"box\"").count(), 3);
}

#[test]
fn run_is_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, 500);
    let config = |out: &str| {
        format!(
            r#"{{
  "data": "statements.csv", "labels": "labels.csv", "schema": "schema.json", "output_dir": "{out}",
  "folds": 3, "seed": 9,
  "feature_sets": {{ "all": {{ "continuous_stats": ["mean", "max", "last"], "categorical_stats": ["last"], "lag_enabled": true }} }},
  "members": [
    {{ "name": "one", "feature_set": "all", "learner": {{ "rounds": 12, "max_bins": 32 }} }},
    {{ "name": "two", "feature_set": "all", "learner": {{ "rounds": 12, "max_bins": 32, "goss_a": 0.2, "goss_b": 0.1 }}, "meta_from": ["one"] }}
  ]
}}"#
        )
    };
    let mut manifests = Vec::new();
    for (out, threads) in [("t1", "1"), ("t4", "4")] {
        std::fs::write(d.join(format!("{out}.json")), config(out)).unwrap();
        ok(d, &["--threads", threads, "run", "--config", &format!("{out}.json")]);
        manifests.push(read(d, &format!("{out}/manifest.json")));
    }
    assert_eq!(manifests[0], manifests[1]);
    let manifest: serde_json::Value = serde_json::from_slice(&manifests[0]).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"].as_str().unwrap().ends_with(".svg")));
    for f in files {
        let rel = f["path"].as_str().unwrap();
        assert_eq!(read(d, &format!("t1/{rel}")), read(d, &format!("t4/{rel}")), "{rel}");
    }

    // --seed overrides the config seed and changes the split
    ok(d, &["--seed", "10", "run", "--config", "t1.json"]);
    assert_ne!(read(d, "t1/folds/cv.csv"), read(d, "t4/folds/cv.csv"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, 300);

    // usage and config errors
    assert_eq!(code(d, &["synth"]), 2);
    std::fs::write(d.join("bad_synth.json"), r#"{ "n_customers": 0 }"#).unwrap();
    assert_eq!(code(d, &["synth", "--config", "bad_synth.json", "--out-data", "x.csv", "--out-labels", "y.csv"]), 2);
    std::fs::write(d.join("unknown.json"), r#"{ "rounds": 3, "depth": 2 }"#).unwrap();
    ok(d, &["prep", "--data", "statements.csv", "--schema", "schema.json", "--out", "clean.csv"]);
    ok(d, &["features", "--data", "clean.csv", "--schema", "schema.json", "--out", "f.csfm"]);
    assert_eq!(
        code(d, &["train", "--features", "f.csfm", "--labels", "labels.csv", "--config", "unknown.json", "--model-out", "m.json"]),
        2
    );
    std::fs::write(d.join("pipe.json"), r#"{ "data": "statements.csv" }"#).unwrap();
    assert_eq!(code(d, &["run", "--config", "pipe.json"]), 2);
    assert_eq!(code(d, &["prep", "--data", "statements.csv", "--schema", "schema.json", "--precision", "0", "--out", "z.csv"]), 2);

    // data errors
    assert_eq!(code(d, &["prep", "--data", "missing.csv", "--schema", "schema.json", "--out", "z.csv"]), 3);
    std::fs::write(d.join("short_labels.csv"), "customer_ID,target\nnobody,1\n").unwrap();
    assert_eq!(code(d, &["train", "--features", "f.csfm", "--labels", "short_labels.csv", "--model-out", "m.json"]), 3);
    std::fs::write(d.join("garbage.csfm"), b"not a matrix").unwrap();
    assert_eq!(code(d, &["train", "--features", "garbage.csfm", "--labels", "labels.csv", "--model-out", "m.json"]), 3);

    // training errors: one class only
    let labels = String::from_utf8(read(d, "labels.csv")).unwrap();
    let ones: String = labels
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{},1\n", l.split(',').next().unwrap()) })
        .collect();
    std::fs::write(d.join("ones.csv"), ones).unwrap();
    assert_eq!(code(d, &["train", "--features", "f.csfm", "--labels", "ones.csv", "--model-out", "m.json"]), 4);
    assert!(!d.join("m.json").exists());
}
