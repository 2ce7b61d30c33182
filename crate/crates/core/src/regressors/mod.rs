//! The five throughput regressors, trained deterministically from a seed.
//!
//! | kind | learner |
//! |------|---------|
//! | `GradientBoosting` | depth-limited exact trees fitted to residuals |
//! | `HistGradientBoosting` | binned features, leaf-wise growth (LightGBM-style) |
//! | `RandomForest` | bootstrap samples, `ceil(sqrt(d))` features per split |
//! | `ExtraTrees` | full sample, one random threshold per feature |
//! | `KNearestNeighbors` | brute force, standardized Euclidean distance |
//!
//! Every source of randomness comes from [`crate::rng::stream`] keyed by the
//! spec seed and the tree index, so results do not depend on thread count.

mod hist;
mod knn;
mod metrics;
mod tree;

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hist::{BinMapper, LeafWiseParams};
pub use knn::KnnState;
pub use metrics::{evaluate, RegressionMetrics};
pub use tree::{GrowParams, Splitter, Tree, TreeNode};

use crate::dataset::Dataset;
use crate::rng::{self, streams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("k = {k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparam { name: &'static str, reason: String },
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("length mismatch: {predictions} predictions vs {actuals} actuals")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("actuals have zero variance; R^2 is undefined")]
    ZeroVariance,
    #[error("model document: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    GradientBoosting,
    HistGradientBoosting,
    RandomForest,
    ExtraTrees,
    KNearestNeighbors,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::GradientBoosting,
        ModelKind::HistGradientBoosting,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::KNearestNeighbors,
    ];

    pub fn is_tree_ensemble(self) -> bool {
        !matches!(self, ModelKind::KNearestNeighbors)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::GradientBoosting => "Gradient Boosting",
            ModelKind::HistGradientBoosting => "Hist GB (LightGBM-style)",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::ExtraTrees => "Extra Trees",
            ModelKind::KNearestNeighbors => "K-Nearest Neighbors",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBoostingParams {
    pub n_trees: usize,
    pub max_leaves: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
}

impl Default for HistBoostingParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_leaves: 31,
            learning_rate: 0.1,
            max_bins: 255,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::Count(c) => c.min(n_features),
        }
        .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
}

impl ForestParams {
    pub fn random_forest() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
        }
    }

    pub fn extra_trees() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            bootstrap: false,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum Hyperparams {
    GradientBoosting(BoostingParams),
    HistGradientBoosting(HistBoostingParams),
    RandomForest(ForestParams),
    ExtraTrees(ForestParams),
    KNearestNeighbors(KnnParams),
}

impl Hyperparams {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::GradientBoosting => Hyperparams::GradientBoosting(BoostingParams::default()),
            ModelKind::HistGradientBoosting => {
                Hyperparams::HistGradientBoosting(HistBoostingParams::default())
            }
            ModelKind::RandomForest => Hyperparams::RandomForest(ForestParams::random_forest()),
            ModelKind::ExtraTrees => Hyperparams::ExtraTrees(ForestParams::extra_trees()),
            ModelKind::KNearestNeighbors => Hyperparams::KNearestNeighbors(KnnParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::GradientBoosting(_) => ModelKind::GradientBoosting,
            Hyperparams::HistGradientBoosting(_) => ModelKind::HistGradientBoosting,
            Hyperparams::RandomForest(_) => ModelKind::RandomForest,
            Hyperparams::ExtraTrees(_) => ModelKind::ExtraTrees,
            Hyperparams::KNearestNeighbors(_) => ModelKind::KNearestNeighbors,
        }
    }

    pub fn validate(&self) -> Result<(), RegressorError> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Result<(), RegressorError> {
            Err(RegressorError::InvalidHyperparam { name, reason: reason.into() })
        }
        // A zero learning rate is accepted: it freezes the model at its base score.
        let check_lr = |lr: f64| {
            if (0.0..=1.0).contains(&lr) {
                Ok(())
            } else {
                bad("learning_rate", format!("{lr} not in [0, 1]"))
            }
        };
        match *self {
            Hyperparams::GradientBoosting(p) => {
                if p.n_trees < 1 {
                    return bad("n_trees", "must be >= 1");
                }
                if p.max_depth < 1 {
                    return bad("max_depth", "must be >= 1");
                }
                check_lr(p.learning_rate)
            }
            Hyperparams::HistGradientBoosting(p) => {
                if p.n_trees < 1 {
                    return bad("n_trees", "must be >= 1");
                }
                if p.max_leaves < 2 {
                    return bad("max_leaves", "must be >= 2");
                }
                if !(2..=255).contains(&p.max_bins) {
                    return bad("max_bins", format!("{} not in [2, 255]", p.max_bins));
                }
                check_lr(p.learning_rate)
            }
            Hyperparams::RandomForest(p) | Hyperparams::ExtraTrees(p) => {
                if p.n_trees < 1 {
                    return bad("n_trees", "must be >= 1");
                }
                if p.max_depth < 1 {
                    return bad("max_depth", "must be >= 1");
                }
                if p.max_features == MaxFeatures::Count(0) {
                    return bad("max_features", "must be >= 1");
                }
                Ok(())
            }
            Hyperparams::KNearestNeighbors(p) => {
                if p.k < 1 {
                    return bad("k", "must be >= 1");
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub model: Hyperparams,
    pub seed: u64,
}

impl RegressorSpec {
    pub fn new(model: Hyperparams, seed: u64) -> Self {
        Self { model, seed }
    }

    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        Self::new(Hyperparams::default_for(kind), seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, RegressorError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(RegressorError::FeatureCount { expected: n_cols, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(RegressorError::NonFinite);
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, n_rows: rows.len(), n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelState {
    /// `predict(x) = base_score + learning_rate * sum(tree(x))`.
    Boosting {
        base_score: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
    /// `predict(x) = mean(tree(x))`.
    Forest { trees: Vec<Tree> },
    Knn(KnnState),
}

/// A trained regressor. Immutable after [`fit`]; prediction is a pure
/// function of the stored state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: RegressorSpec,
    pub n_features: usize,
    pub state: ModelState,
    pub train_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub values: Vec<f64>,
    pub predict_time_s: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: FittedModel,
}

/// Trains on a QoS dataset (features delay, jitter, loss; target throughput).
pub fn fit(spec: &RegressorSpec, train: &Dataset) -> Result<FittedModel, RegressorError> {
    fit_rows(spec, &train.feature_rows(), &train.targets())
}

pub fn fit_rows(
    spec: &RegressorSpec,
    rows: &[Vec<f64>],
    targets: &[f64],
) -> Result<FittedModel, RegressorError> {
    spec.model.validate()?;
    if rows.len() != targets.len() {
        return Err(RegressorError::LengthMismatch {
            predictions: rows.len(),
            actuals: targets.len(),
        });
    }
    if rows.len() < 2 {
        return Err(RegressorError::TooFewSamples(rows.len()));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(RegressorError::NonFinite);
    }
    let x = Matrix::from_rows(rows)?;
    if x.n_cols() == 0 {
        return Err(RegressorError::FeatureCount { expected: 1, got: 0 });
    }
    let start = Instant::now();
    let state = match spec.model {
        Hyperparams::GradientBoosting(p) => fit_boosting(&x, targets, &p),
        Hyperparams::HistGradientBoosting(p) => fit_hist_boosting(&x, targets, &p),
        Hyperparams::RandomForest(p) => fit_forest(&x, targets, &p, Splitter::Best, spec.seed),
        Hyperparams::ExtraTrees(p) => fit_forest(&x, targets, &p, Splitter::Random, spec.seed),
        Hyperparams::KNearestNeighbors(p) => {
            if p.k > x.n_rows() {
                return Err(RegressorError::KTooLarge { k: p.k, n: x.n_rows() });
            }
            ModelState::Knn(KnnState::fit(&x, targets, p.k))
        }
    };
    let train_time_s = start.elapsed().as_secs_f64();
    Ok(FittedModel {
        spec: *spec,
        n_features: x.n_cols(),
        state,
        train_time_s,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fit_boosting(x: &Matrix, y: &[f64], p: &BoostingParams) -> ModelState {
    let base_score = mean(y);
    let mut current = vec![base_score; y.len()];
    let grow = GrowParams {
        max_depth: p.max_depth,
        max_features: x.n_cols(),
        splitter: Splitter::Best,
    };
    // The Best splitter never draws from the rng.
    let mut unused = rng::stream(0, 0);
    let mut trees = Vec::with_capacity(p.n_trees);
    let mut residual = vec![0.0; y.len()];
    for _ in 0..p.n_trees {
        for i in 0..y.len() {
            residual[i] = y[i] - current[i];
        }
        let t = tree::grow(x, &residual, (0..y.len()).collect(), &grow, &mut unused);
        for (i, c) in current.iter_mut().enumerate() {
            *c += p.learning_rate * t.predict(x.row(i));
        }
        trees.push(t);
    }
    ModelState::Boosting {
        base_score,
        learning_rate: p.learning_rate,
        trees,
    }
}

fn fit_hist_boosting(x: &Matrix, y: &[f64], p: &HistBoostingParams) -> ModelState {
    let base_score = mean(y);
    let mapper = BinMapper::fit(x, p.max_bins);
    let binned = mapper.transform(x);
    let mut current = vec![base_score; y.len()];
    let mut residual = vec![0.0; y.len()];
    let params = LeafWiseParams { max_leaves: p.max_leaves };
    let mut trees = Vec::with_capacity(p.n_trees);
    for _ in 0..p.n_trees {
        for i in 0..y.len() {
            residual[i] = y[i] - current[i];
        }
        let t = hist::grow_leaf_wise(&mapper, &binned, &residual, &params);
        for (i, c) in current.iter_mut().enumerate() {
            *c += p.learning_rate * t.predict(x.row(i));
        }
        trees.push(t);
    }
    ModelState::Boosting {
        base_score,
        learning_rate: p.learning_rate,
        trees,
    }
}

fn fit_forest(x: &Matrix, y: &[f64], p: &ForestParams, splitter: Splitter, seed: u64) -> ModelState {
    let grow = GrowParams {
        max_depth: p.max_depth,
        max_features: p.max_features.resolve(x.n_cols()),
        splitter,
    };
    let n = x.n_rows();
    let trees = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, streams::TREE_BASE + t as u64);
            let rows: Vec<usize> = if p.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            tree::grow(x, y, rows, &grow, &mut rng)
        })
        .collect();
    ModelState::Forest { trees }
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64, RegressorError> {
        if features.len() != self.n_features {
            return Err(RegressorError::FeatureCount {
                expected: self.n_features,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(RegressorError::NonFinite);
        }
        let y = self.predict_unchecked(features);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(RegressorError::NonFinite)
        }
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match &self.state {
            ModelState::Boosting {
                base_score,
                learning_rate,
                trees,
            } => base_score + learning_rate * trees.iter().map(|t| t.predict(x)).sum::<f64>(),
            ModelState::Forest { trees } => {
                trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
            }
            ModelState::Knn(state) => state.predict(x),
        }
    }

    /// Row-wise [`FittedModel::predict`], timed over the whole batch.
    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<BatchPrediction, RegressorError> {
        let start = Instant::now();
        let values = rows
            .iter()
            .map(|r| self.predict(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BatchPrediction {
            values,
            predict_time_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RegressorError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| RegressorError::Format(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(RegressorError::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let m = doc.model;
        m.spec.model.validate()?;
        let trees_ok = |trees: &[Tree]| !trees.is_empty() && trees.iter().all(|t| t.is_well_formed(m.n_features));
        let ok = match (&m.state, m.kind()) {
            (ModelState::Boosting { trees, .. }, ModelKind::GradientBoosting)
            | (ModelState::Boosting { trees, .. }, ModelKind::HistGradientBoosting)
            | (ModelState::Forest { trees }, ModelKind::RandomForest)
            | (ModelState::Forest { trees }, ModelKind::ExtraTrees) => trees_ok(trees),
            (ModelState::Knn(s), ModelKind::KNearestNeighbors) => {
                s.n_features() == m.n_features
                    && s.train_x.len() == s.train_y.len() * m.n_features
                    && s.k >= 1
                    && s.k <= s.train_y.len()
            }
            _ => false,
        };
        if !ok {
            return Err(RegressorError::Format("state does not match model kind".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RegressorError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegressorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests;
