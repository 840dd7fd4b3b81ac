use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelParams, TrainedModel, TrainingSet, ZStats};
use crate::error::{Error, Result};
use crate::features::N_DIMS;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

/// Ridge regression in z-scored delta space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub lambda: f64,
    pub intercept: f64,
    /// One weight per z-scored dimension.
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Weights converted back to raw delta units.
    pub fn raw_coefficients(&self, stats: &ZStats) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&stats.sd)
            .map(|(w, s)| if *s < super::SD_FLOOR { 0.0 } else { w / s })
            .collect()
    }
}

/// Fits `min ||y - b - Zw||^2 + lambda ||w||^2` with an unpenalized intercept.
pub fn fit_linear(train: &TrainingSet, lambda: f64) -> Result<TrainedModel> {
    if train.len() < 2 {
        return Err(Error::Model(format!("linear regression needs n >= 2, got {}", train.len())));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Model(format!("ridge penalty must be non-negative, got {lambda}")));
    }
    let train = train.canonical();
    let stats = ZStats::from_deltas(&train.deltas);
    let n = train.len();
    let y_mean = train.targets.iter().sum::<f64>() / n as f64;

    if train.targets.iter().all(|&t| t == train.targets[0]) {
        warn!("all training targets equal {}; fitting a constant model", train.targets[0]);
        let params = LinearModel {
            lambda,
            intercept: train.targets[0],
            weights: vec![0.0; N_DIMS],
        };
        return Ok(TrainedModel::new(&train, ModelParams::Linear(params)));
    }

    let z: Vec<Vec<f64>> = train.deltas.iter().map(|d| stats.zscore(d.as_slice())).collect();
    let zm = DMatrix::from_fn(n, N_DIMS, |i, j| z[i][j]);
    // Columns are centered up to rounding; center exactly so the intercept
    // stays unpenalized.
    let col_means: Vec<f64> = (0..N_DIMS).map(|j| zm.column(j).sum() / n as f64).collect();
    let zc = DMatrix::from_fn(n, N_DIMS, |i, j| zm[(i, j)] - col_means[j]);
    let yc = DVector::from_iterator(n, train.targets.iter().map(|t| t - y_mean));

    let mut gram = zc.transpose() * &zc;
    for j in 0..N_DIMS {
        gram[(j, j)] += lambda;
    }
    let rhs = zc.transpose() * yc;
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            // Only reachable with lambda = 0 and rank-deficient data.
            gram.svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::Model(format!("least squares solve failed: {e}")))?
        }
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - weights.iter().zip(&col_means).map(|(w, m)| w * m).sum::<f64>();
    let params = LinearModel {
        lambda,
        intercept,
        weights,
    };
    Ok(TrainedModel::new(&train, ModelParams::Linear(params)))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_set;
    use super::*;
    use crate::models::ModelParams;

    fn linear(model: &TrainedModel) -> &LinearModel {
        match &model.params {
            ModelParams::Linear(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn recovers_single_planted_coefficient() {
        let train = random_set(200, 11, |v| 2.5 + 0.8 * v[23]);
        let model = fit_linear(&train, DEFAULT_RIDGE_LAMBDA).unwrap();
        let coef = linear(&model).raw_coefficients(&model.training_stats);
        assert!((coef[23] - 0.8).abs() <= 1e-3, "{}", coef[23]);
        for (d, c) in coef.iter().enumerate() {
            if d != 23 {
                assert!(c.abs() <= 1e-3, "dim {d}: {c}");
            }
        }
        for (d, t) in train.deltas.iter().zip(&train.targets) {
            assert!((model.predict(d) - t).abs() <= 1e-3);
        }
    }

    #[test]
    fn constant_target_gives_constant_model() {
        let train = random_set(50, 12, |_| 4.2);
        let model = fit_linear(&train, DEFAULT_RIDGE_LAMBDA).unwrap();
        let lm = linear(&model);
        assert_eq!(lm.intercept, 4.2);
        assert!(lm.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn adding_a_constant_to_targets_shifts_predictions() {
        let train = random_set(150, 13, |v| v[0] * v[1] + v[2]);
        let mut shifted = train.clone();
        shifted.targets.iter_mut().for_each(|t| *t += 1.75);
        let a = fit_linear(&train, DEFAULT_RIDGE_LAMBDA).unwrap();
        let b = fit_linear(&shifted, DEFAULT_RIDGE_LAMBDA).unwrap();
        for q in random_set(20, 14, |_| 0.0).deltas {
            assert!((b.predict(&q) - a.predict(&q) - 1.75).abs() <= 1e-9);
        }
    }

    #[test]
    fn rejects_tiny_training_sets() {
        let train = random_set(1, 15, |_| 1.0);
        assert!(fit_linear(&train, DEFAULT_RIDGE_LAMBDA).is_err());
    }
}
