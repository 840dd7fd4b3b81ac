use serde::{Deserialize, Serialize};

use super::{ModelParams, TrainedModel, TrainingSet, ZStats};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 50;

/// Stores the z-scored training deltas in `pair_id` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub ids: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl KnnModel {
    /// Mean target of the k nearest points; equal distances resolve to the
    /// smaller `pair_id` (points are stored in id order).
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_distance);
        }
        let nearest = &mut dist[..k];
        nearest.sort_by(by_distance);
        nearest.iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / k as f64
    }
}

pub fn fit_knn(train: &TrainingSet, k: usize) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::Model("k-nearest-neighbors needs a non-empty training set".into()));
    }
    if k == 0 {
        return Err(Error::Model("k must be at least 1".into()));
    }
    let train = train.canonical();
    let stats = ZStats::from_deltas(&train.deltas);
    let params = KnnModel {
        k: k.min(train.len()),
        ids: train.ids.clone(),
        points: train.deltas.iter().map(|d| stats.zscore(d.as_slice())).collect(),
        targets: train.targets.clone(),
    };
    Ok(TrainedModel::new(&train, ModelParams::Knn(params)))
}
