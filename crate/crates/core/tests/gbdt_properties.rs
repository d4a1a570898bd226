use credit_stack::features::FeatureMatrix;
use credit_stack::gbdt::{self, ImportanceKind, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy two-feature problem with a few missing cells.
fn problem(seed: u64, n: usize) -> (FeatureMatrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f32 = rng.random_range(-2.0..2.0);
        let z: f32 = rng.random_range(-1.0..1.0);
        let y = u8::from(x + 0.5 * z + rng.random_range(-0.8..0.8) > 0.0);
        cols[0].push(if rng.random_bool(0.05) { f32::NAN } else { x });
        cols[1].push(z);
        cols[2].push(rng.random_range(0.0..1.0));
        labels.push(y);
    }
    let ids = (0..n).map(|i| format!("r{i:05}")).collect();
    let named = ["x", "z", "noise"].iter().map(|s| s.to_string()).zip(cols).collect();
    (FeatureMatrix::from_columns(ids, named).unwrap(), labels)
}

#[test]
fn identical_models_for_any_worker_count() {
    let (m, y) = problem(1, 3000);
    for cfg in [TrainConfig::default(), TrainConfig::default().with_goss()] {
        let cfg = TrainConfig { rounds: 30, ..cfg };
        let json: Vec<String> = [1, 2, 4]
            .iter()
            .map(|&threads| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
                pool.install(|| gbdt::train(&m, &y, &cfg, None).unwrap().to_json().unwrap())
            })
            .collect();
        assert_eq!(json[0], json[1]);
        assert_eq!(json[0], json[2]);
    }
}

#[test]
fn saved_model_predicts_identically() {
    let (m, y) = problem(2, 800);
    let model = gbdt::train(&m, &y, &TrainConfig { rounds: 20, ..TrainConfig::default() }, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = gbdt::BoostedModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(loaded.predict_raw(&m).unwrap(), model.predict_raw(&m).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_ignore_appended_columns(seed in 0u64..1000, extra in 1usize..4) {
        let (m, y) = problem(seed, 300);
        let model = gbdt::train(&m, &y, &TrainConfig { rounds: 10, max_leaves: 8, ..TrainConfig::default() }, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let junk = (0..extra)
            .map(|i| (format!("junk_{i}"), (0..m.n_rows()).map(|_| rng.random::<f32>()).collect()))
            .collect();
        let wider = m.append_columns(junk).unwrap();
        prop_assert_eq!(model.predict_raw(&wider).unwrap(), model.predict_raw(&m).unwrap());
    }

    #[test]
    fn importance_sums_equal_split_gains(seed in 0u64..1000, goss: bool) {
        let (m, y) = problem(seed, 400);
        let base = TrainConfig { rounds: 15, max_leaves: 12, seed, ..TrainConfig::default() };
        let cfg = if goss { base.with_goss() } else { base };
        let model = gbdt::train(&m, &y, &cfg, None).unwrap();
        let per_column: f64 = model.importance(ImportanceKind::TotalGain).values().sum();
        let per_split: f64 = model.split_records().map(|(_, g)| g).sum();
        prop_assert_eq!(per_column, per_split);
        let normalized: f64 = model.normalized_importance(ImportanceKind::TotalGain).values().sum();
        prop_assert!((normalized - 1.0).abs() <= 1e-12);
    }
}
