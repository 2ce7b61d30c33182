use super::*;
use crate::dataset::{generate_synthetic, GeneratorParams};

fn small_dataset(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&GeneratorParams { n, seed, ..Default::default() }).unwrap()
}

fn stump_rows() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]],
        vec![0.0, 0.0, 1.0, 1.0],
    )
}

fn stump_model() -> FittedModel {
    let (rows, y) = stump_rows();
    let spec = RegressorSpec::new(
        Hyperparams::RandomForest(ForestParams {
            n_trees: 1,
            max_depth: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
        }),
        0,
    );
    fit_rows(&spec, &rows, &y).unwrap()
}

#[test]
fn stump_matches_hand_built_oracle() {
    // Hand-built: the only useful threshold is the midpoint 5 between the
    // clusters, and each leaf holds its cluster mean.
    let oracle = |x: f64| if x < 5.0 { 0.0 } else { 1.0 };
    let m = stump_model();
    for x in [-3.0, 0.0, 4.9, 5.0, 7.0, 10.0, 50.0] {
        assert_eq!(m.predict(&[x]).unwrap(), oracle(x), "x = {x}");
    }
    assert_eq!(m.predict(&[7.0]).unwrap(), 1.0);
}

#[test]
fn zero_learning_rate_returns_target_mean() {
    let ds = small_dataset(200, 3);
    let spec = RegressorSpec::new(
        Hyperparams::GradientBoosting(BoostingParams { learning_rate: 0.0, ..Default::default() }),
        0,
    );
    let m = fit(&spec, &ds).unwrap();
    let y = ds.targets();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    for row in small_dataset(20, 9).feature_rows() {
        assert_eq!(m.predict(&row).unwrap(), mean);
    }
}

#[test]
fn knn_k1_memorizes_training_points() {
    let ds = small_dataset(150, 4);
    let spec = RegressorSpec::new(Hyperparams::KNearestNeighbors(KnnParams { k: 1 }), 0);
    let m = fit(&spec, &ds).unwrap();
    for s in &ds.samples {
        assert_eq!(m.predict(&s.features()).unwrap(), s.throughput_mbps);
    }
}

#[test]
fn identical_trees_average_to_one_tree() {
    let (rows, y) = stump_rows();
    let spec = RegressorSpec::new(
        Hyperparams::RandomForest(ForestParams {
            n_trees: 7,
            max_depth: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
        }),
        11,
    );
    let forest = fit_rows(&spec, &rows, &y).unwrap();
    let single = stump_model();
    for x in [0.0, 3.0, 7.0] {
        assert_eq!(forest.predict(&[x]).unwrap(), single.predict(&[x]).unwrap());
    }
}

#[test]
fn fit_errors() {
    let spec = RegressorSpec::default_for(ModelKind::RandomForest, 0);
    assert!(matches!(
        fit_rows(&spec, &[vec![1.0]], &[1.0]),
        Err(RegressorError::TooFewSamples(1))
    ));
    let knn = RegressorSpec::new(Hyperparams::KNearestNeighbors(KnnParams { k: 5 }), 0);
    assert!(matches!(
        fit(&knn, &small_dataset(4, 0)),
        Err(RegressorError::KTooLarge { k: 5, n: 4 })
    ));
    let bad = RegressorSpec::new(
        Hyperparams::HistGradientBoosting(HistBoostingParams { max_bins: 256, ..Default::default() }),
        0,
    );
    assert!(matches!(
        fit(&bad, &small_dataset(10, 0)),
        Err(RegressorError::InvalidHyperparam { name: "max_bins", .. })
    ));
    let bad = RegressorSpec::new(
        Hyperparams::GradientBoosting(BoostingParams { learning_rate: 1.5, ..Default::default() }),
        0,
    );
    assert!(fit(&bad, &small_dataset(10, 0)).is_err());
    assert!(matches!(
        fit_rows(&spec, &[vec![1.0], vec![f64::NAN]], &[1.0, 2.0]),
        Err(RegressorError::NonFinite)
    ));
}

#[test]
fn constant_target_still_fits() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 1.0, 2.0]).collect();
    let y = vec![3.25; 30];
    for kind in ModelKind::ALL {
        let m = fit_rows(&RegressorSpec::default_for(kind, 1), &rows, &y).unwrap();
        assert_eq!(m.predict(&[4.5, 1.0, 2.0]).unwrap(), 3.25, "{kind}");
    }
}

#[test]
fn predict_errors() {
    let m = stump_model();
    assert!(matches!(m.predict(&[f64::INFINITY]), Err(RegressorError::NonFinite)));
    assert!(matches!(
        m.predict(&[1.0, 2.0]),
        Err(RegressorError::FeatureCount { expected: 1, got: 2 })
    ));
    assert!(m.predict_batch(&[vec![1.0], vec![f64::NAN]]).is_err());
}

#[test]
fn batch_matches_rowwise() {
    let m = stump_model();
    let b = m.predict_batch(&[vec![7.0]]).unwrap();
    assert_eq!(b.values, vec![m.predict(&[7.0]).unwrap()]);
    let empty = m.predict_batch(&[]).unwrap();
    assert!(empty.values.is_empty() && empty.predict_time_s >= 0.0);

    let ds = small_dataset(1000, 8);
    let probe = small_dataset(1800, 99).feature_rows();
    for kind in ModelKind::ALL {
        let spec = RegressorSpec::default_for(kind, 2);
        let spec = match spec.model {
            Hyperparams::RandomForest(p) => {
                RegressorSpec::new(Hyperparams::RandomForest(ForestParams { n_trees: 10, ..p }), 2)
            }
            Hyperparams::ExtraTrees(p) => {
                RegressorSpec::new(Hyperparams::ExtraTrees(ForestParams { n_trees: 10, ..p }), 2)
            }
            _ => spec,
        };
        let m = fit(&spec, &ds).unwrap();
        let batch = m.predict_batch(&probe).unwrap();
        let rowwise: Vec<f64> = probe.iter().map(|r| m.predict(r).unwrap()).collect();
        assert_eq!(batch.values, rowwise, "{kind}");
    }
}

#[test]
fn seed_changes_forest() {
    let ds = small_dataset(300, 1);
    let a = fit(&RegressorSpec::default_for(ModelKind::ExtraTrees, 1), &ds).unwrap();
    let b = fit(&RegressorSpec::default_for(ModelKind::ExtraTrees, 2), &ds).unwrap();
    assert_ne!(a.state, b.state);
}

#[test]
fn persisted_document_is_versioned() {
    let m = stump_model();
    let json = m.to_json();
    assert!(json.starts_with("{\"format_version\":1,"));
    let bumped = json.replacen("\"format_version\":1", "\"format_version\":2", 1);
    assert!(matches!(FittedModel::from_json(&bumped), Err(RegressorError::Format(_))));
    assert!(FittedModel::from_json("{").is_err());
}
