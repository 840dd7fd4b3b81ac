//! Similarity predictors over 100-dimensional feature deltas.
//!
//! Four model kinds share one serialized form, [`TrainedModel`]:
//!
//! - `euclidean`: L2 norm of the z-scored delta. This is a distance, so it
//!   correlates negatively with similarity judgments.
//! - `linear`: ridge regression on z-scored deltas.
//! - `knn`: unweighted mean judgment of the k nearest z-scored training deltas.
//! - `forest`: bagged CART regression trees on raw deltas.
//!
//! Training data is put in `pair_id` order before fitting, so a model does
//! not depend on the order examples were supplied in.

mod forest;
mod knn;
mod linear;

pub use forest::{fit_forest, fit_forest_on_dims, Forest, ForestConfig, Tree, TreeNode};
pub use knn::{fit_knn, KnnModel, DEFAULT_K};
pub use linear::{fit_linear, LinearModel, DEFAULT_RIDGE_LAMBDA};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_labels, DeltaMode, ExtractorConfig, FeatureVector, EXTRACTOR_VERSION, N_DIMS};
use crate::stats;

/// Z-scoring below this standard deviation maps the coordinate to 0.
pub const SD_FLOOR: f64 = 1e-8;

/// Deltas with their targets, keyed by pair id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub ids: Vec<String>,
    pub deltas: Vec<FeatureVector>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(ids: Vec<String>, deltas: Vec<FeatureVector>, targets: Vec<f64>) -> Result<Self> {
        if ids.len() != deltas.len() || ids.len() != targets.len() {
            return Err(Error::Model(format!(
                "training set lengths differ: {} ids, {} deltas, {} targets",
                ids.len(),
                deltas.len(),
                targets.len()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Model("non-finite training target".into()));
        }
        Ok(TrainingSet { ids, deltas, targets })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Copy sorted by id.
    pub fn canonical(&self) -> TrainingSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        TrainingSet {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            deltas: order.iter().map(|&i| self.deltas[i].clone()).collect(),
            targets: order.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Per-dimension mean and standard deviation of the training deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ZStats {
    pub fn from_deltas(deltas: &[FeatureVector]) -> Self {
        let mut mean = Vec::with_capacity(N_DIMS);
        let mut sd = Vec::with_capacity(N_DIMS);
        for d in 0..N_DIMS {
            let col: Vec<f64> = deltas.iter().map(|v| v[d]).collect();
            mean.push(stats::mean(&col));
            sd.push(stats::std_dev(&col));
        }
        ZStats { mean, sd }
    }

    pub fn zscore(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| if *s < SD_FLOOR { 0.0 } else { (v - m) / s })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Euclidean,
    Linear,
    Knn,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Euclidean, ModelKind::Linear, ModelKind::Knn, ModelKind::Forest];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Euclidean => "euclidean",
            ModelKind::Linear => "linear",
            ModelKind::Knn => "knn",
            ModelKind::Forest => "forest",
        }
    }

    /// Row label used in score tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Euclidean => "euclidean_distance",
            ModelKind::Linear => "linear_regression",
            ModelKind::Knn => "knn_regression",
            ModelKind::Forest => "random_forest_regression",
        }
    }

    /// Whether predictions are distances rather than similarity estimates.
    pub fn is_distance(self) -> bool {
        self == ModelKind::Euclidean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Euclidean,
    Linear(LinearModel),
    Knn(KnnModel),
    Forest(Forest),
}

/// A fitted predictor plus everything needed to apply it to new deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub extractor_version: String,
    pub feature_layout: Vec<String>,
    pub delta_mode: DeltaMode,
    /// Extraction constants the training deltas were computed with.
    #[serde(default)]
    pub extractor: ExtractorConfig,
    pub training_stats: ZStats,
    pub params: ModelParams,
}

impl TrainedModel {
    fn new(train: &TrainingSet, params: ModelParams) -> Self {
        TrainedModel {
            extractor_version: EXTRACTOR_VERSION.to_string(),
            feature_layout: feature_labels(),
            delta_mode: DeltaMode::Signed,
            extractor: ExtractorConfig::default(),
            training_stats: ZStats::from_deltas(&train.deltas),
            params,
        }
    }

    pub fn with_delta_mode(mut self, mode: DeltaMode) -> Self {
        self.delta_mode = mode;
        self
    }

    pub fn with_extractor(mut self, cfg: ExtractorConfig) -> Self {
        self.extractor = cfg;
        self
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Euclidean => ModelKind::Euclidean,
            ModelParams::Linear(_) => ModelKind::Linear,
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn predict(&self, delta: &FeatureVector) -> f64 {
        match &self.params {
            ModelParams::Euclidean => euclidean_score(delta, &self.training_stats),
            ModelParams::Linear(m) => m.predict(&self.training_stats.zscore(delta.as_slice())),
            ModelParams::Knn(m) => m.predict(&self.training_stats.zscore(delta.as_slice())),
            ModelParams::Forest(f) => f.predict(delta.as_slice()),
        }
    }

    pub fn predict_many(&self, deltas: &[FeatureVector]) -> Vec<f64> {
        deltas.iter().map(|d| self.predict(d)).collect()
    }

    /// Normalized impurity importances (forest models only).
    pub fn importances(&self) -> Option<&[f64]> {
        match &self.params {
            ModelParams::Forest(f) => Some(&f.importances),
            _ => None,
        }
    }

    /// Errors unless the model was trained on the current extractor's layout.
    pub fn check_compatible(&self) -> Result<()> {
        if self.extractor_version != EXTRACTOR_VERSION {
            return Err(Error::LayoutMismatch(format!(
                "model was trained with extractor {:?}, this build extracts {:?}; retrain the model",
                self.extractor_version, EXTRACTOR_VERSION
            )));
        }
        if self.feature_layout != feature_labels() {
            return Err(Error::LayoutMismatch(
                "model feature layout differs from the extractor's 100-column layout".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        // Deep trees nest further than serde_json's default limit.
        de.disable_recursion_limit();
        let model = TrainedModel::deserialize(&mut de)?;
        de.end()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// L2 norm of the z-scored delta.
pub fn euclidean_score(delta: &FeatureVector, stats: &ZStats) -> f64 {
    stats.zscore(delta.as_slice()).iter().map(|z| z * z).sum::<f64>().sqrt()
}

pub fn fit_euclidean(train: &TrainingSet) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::Model("euclidean baseline needs training deltas for z-scoring".into()));
    }
    Ok(TrainedModel::new(&train.canonical(), ModelParams::Euclidean))
}

/// Hyperparameters for all four model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub ridge_lambda: f64,
    pub knn_k: usize,
    pub forest: ForestConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            knn_k: DEFAULT_K,
            forest: ForestConfig::default(),
        }
    }
}

pub fn fit(kind: ModelKind, train: &TrainingSet, cfg: &ModelConfig) -> Result<TrainedModel> {
    match kind {
        ModelKind::Euclidean => fit_euclidean(train),
        ModelKind::Linear => fit_linear(train, cfg.ridge_lambda),
        ModelKind::Knn => fit_knn(train, cfg.knn_k),
        ModelKind::Forest => fit_forest(train, &cfg.forest),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `None` when predictions or targets are constant.
    pub pearson: Option<f64>,
    pub mse: f64,
    pub n: usize,
}

pub fn evaluate_predictions(predictions: &[f64], targets: &[f64]) -> Result<Evaluation> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::Model(format!(
            "evaluation needs equal, non-zero counts; got {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(Evaluation {
        pearson: stats::pearson(predictions, targets),
        mse: stats::mse(predictions, targets),
        n: predictions.len(),
    })
}

/// Pearson correlation and MSE of the model's outputs against `targets`.
/// Euclidean models are scored on the raw distance.
pub fn evaluate(model: &TrainedModel, deltas: &[FeatureVector], targets: &[f64]) -> Result<Evaluation> {
    evaluate_predictions(&model.predict_many(deltas), targets)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_set(n: usize, seed: u64, target: impl Fn(&[f64]) -> f64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = Vec::new();
        let mut deltas = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            let v: Vec<f64> = (0..N_DIMS).map(|_| rng.random_range(-2.0..2.0)).collect();
            targets.push(target(&v));
            deltas.push(FeatureVector::new(v).unwrap());
            ids.push(format!("pair{i:04}"));
        }
        TrainingSet::new(ids, deltas, targets).unwrap()
    }
}
