//! Which feature types and positions carry the similarity signal.
//!
//! Three views: per-dimension Pearson correlations with the judgments,
//! forest impurity importance averaged over folds, and forests retrained on
//! subsets of the dimensions (one type, all but one type, one window).

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Fold, SplitPlan};
use crate::error::{Error, Result};
use crate::features::{position_dims, FeatureType, FeatureVector, N_DIMS, N_WINDOWS};
use crate::models::{
    evaluate_predictions, fit, fit_forest_on_dims, Evaluation, ForestConfig, ModelConfig, ModelKind, TrainedModel,
    TrainingSet,
};
use crate::stats;

/// Out-of-fold results of one model kind over a split plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub per_fold: Vec<Evaluation>,
    /// Every fold's test predictions scored together.
    pub pooled: Evaluation,
    /// `(pair_id, prediction)` in fold order.
    pub predictions: Vec<(String, f64)>,
}

fn subset(data: &TrainingSet, index: &HashMap<&str, usize>, ids: &[String]) -> Result<TrainingSet> {
    let mut out = TrainingSet {
        ids: Vec::with_capacity(ids.len()),
        deltas: Vec::with_capacity(ids.len()),
        targets: Vec::with_capacity(ids.len()),
    };
    for id in ids {
        let &i = index
            .get(id.as_str())
            .ok_or_else(|| Error::Split(format!("split refers to unknown pair {id:?}")))?;
        out.ids.push(id.clone());
        out.deltas.push(data.deltas[i].clone());
        out.targets.push(data.targets[i]);
    }
    Ok(out)
}

fn fold_sets(data: &TrainingSet, fold: &Fold) -> Result<(TrainingSet, TrainingSet)> {
    let index: HashMap<&str, usize> = data.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if fold.train.is_empty() || fold.test.is_empty() {
        return Err(Error::Split("every fold needs training and test pairs".into()));
    }
    Ok((subset(data, &index, &fold.train)?, subset(data, &index, &fold.test)?))
}

/// Trains `train_fn` on each fold and scores it on that fold's test pairs.
pub fn evaluate_with<F>(data: &TrainingSet, plan: &SplitPlan, train_fn: F) -> Result<SplitEvaluation>
where
    F: Fn(&TrainingSet) -> Result<TrainedModel> + Sync,
{
    let folds: Vec<(Evaluation, Vec<(String, f64)>)> = plan
        .folds
        .par_iter()
        .map(|fold| {
            let (train, test) = fold_sets(data, fold)?;
            let model = train_fn(&train)?;
            let preds = model.predict_many(&test.deltas);
            let eval = evaluate_predictions(&preds, &test.targets)?;
            Ok((eval, test.ids.into_iter().zip(preds).collect()))
        })
        .collect::<Result<_>>()?;
    let target_of: HashMap<&str, f64> = data.ids.iter().map(String::as_str).zip(data.targets.iter().copied()).collect();
    let mut per_fold = Vec::new();
    let mut predictions = Vec::new();
    for (eval, preds) in folds {
        per_fold.push(eval);
        predictions.extend(preds);
    }
    let (p, t): (Vec<f64>, Vec<f64>) = predictions.iter().map(|(id, p)| (*p, target_of[id.as_str()])).unzip();
    Ok(SplitEvaluation {
        per_fold,
        pooled: evaluate_predictions(&p, &t)?,
        predictions,
    })
}

pub fn evaluate_on_split(data: &TrainingSet, plan: &SplitPlan, kind: ModelKind, cfg: &ModelConfig) -> Result<SplitEvaluation> {
    evaluate_with(data, plan, |train| fit(kind, train, cfg))
}

/// Forest restricted to `dims`, evaluated over the split.
pub fn forest_on_split(data: &TrainingSet, plan: &SplitPlan, cfg: &ForestConfig, dims: &[usize]) -> Result<SplitEvaluation> {
    evaluate_with(data, plan, |train| fit_forest_on_dims(train, cfg, dims))
}

/// Pearson correlation of every dimension with the judgments; `None` where
/// the dimension (or the judgments) is constant.
pub fn per_dimension_correlations(deltas: &[FeatureVector], judgments: &[f64]) -> Result<Vec<Option<f64>>> {
    if deltas.len() < 2 || deltas.len() != judgments.len() {
        return Err(Error::InvalidArgument(format!(
            "per-dimension correlation needs >= 2 aligned pairs, got {} deltas and {} judgments",
            deltas.len(),
            judgments.len()
        )));
    }
    Ok((0..N_DIMS)
        .map(|d| {
            let col: Vec<f64> = deltas.iter().map(|v| v[d]).collect();
            stats::pearson(&col, judgments)
        })
        .collect())
}

/// Mean of the per-fold forest importance vectors, renormalized to sum 1.
pub fn fold_averaged_forest_importance(data: &TrainingSet, plan: &SplitPlan, cfg: &ForestConfig) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..N_DIMS).collect();
    fold_averaged_importance_on(data, plan, cfg, &all)
}

fn fold_averaged_importance_on(data: &TrainingSet, plan: &SplitPlan, cfg: &ForestConfig, dims: &[usize]) -> Result<Vec<f64>> {
    if plan.folds.is_empty() {
        return Err(Error::Split("split plan has no folds".into()));
    }
    let per_fold: Vec<Vec<f64>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            let (train, _) = fold_sets(data, fold)?;
            let model = fit_forest_on_dims(&train, cfg, dims)?;
            Ok(model.importances().expect("forest model").to_vec())
        })
        .collect::<Result<_>>()?;
    let mut avg = vec![0.0; N_DIMS];
    for imp in &per_fold {
        for (a, v) in avg.iter_mut().zip(imp) {
            *a += v;
        }
    }
    let total: f64 = avg.iter().sum();
    Ok(avg.into_iter().map(|a| a / total).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", content = "values", rename_all = "snake_case")]
pub enum Selector {
    Types(Vec<FeatureType>),
    /// Window indices 0..10.
    Positions(Vec<usize>),
}

impl Selector {
    pub fn pitch() -> Self {
        Selector::Types(FeatureType::PITCH.to_vec())
    }

    fn dims(&self) -> Result<Vec<usize>> {
        let mut dims: Vec<usize> = match self {
            Selector::Types(types) => types.iter().flat_map(|t| t.dims()).collect(),
            Selector::Positions(ws) => {
                if let Some(w) = ws.iter().find(|&&w| w >= N_WINDOWS) {
                    return Err(Error::InvalidArgument(format!("window {w} out of range 0..{N_WINDOWS}")));
                }
                ws.iter().flat_map(|&w| position_dims(w)).collect()
            }
        };
        dims.sort_unstable();
        dims.dedup();
        Ok(dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    Only,
    Exclude,
}

/// Dimensions a subset run trains on.
pub fn subset_dims(selector: &Selector, mode: SubsetMode) -> Result<Vec<usize>> {
    let chosen = selector.dims()?;
    if chosen.is_empty() {
        return Err(Error::InvalidArgument("subset selector is empty".into()));
    }
    let dims: Vec<usize> = match mode {
        SubsetMode::Only => chosen,
        SubsetMode::Exclude => (0..N_DIMS).filter(|d| chosen.binary_search(d).is_err()).collect(),
    };
    if dims.is_empty() {
        return Err(Error::InvalidArgument("subset selection leaves no dimensions".into()));
    }
    Ok(dims)
}

/// Pooled test correlation of a forest retrained on the selected dimensions.
pub fn subset_experiment(
    data: &TrainingSet,
    plan: &SplitPlan,
    cfg: &ForestConfig,
    selector: &Selector,
    mode: SubsetMode,
) -> Result<Option<f64>> {
    let dims = subset_dims(selector, mode)?;
    Ok(forest_on_split(data, plan, cfg, &dims)?.pooled.pearson)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub window: usize,
    pub correlation: Option<f64>,
    pub summed_importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub feature: FeatureType,
    pub importance: f64,
    pub type_only_correlation: Option<f64>,
    pub ablation_correlation: Option<f64>,
}

fn position_rows(data: &TrainingSet, plan: &SplitPlan, cfg: &ForestConfig, importance: &[f64]) -> Result<Vec<PositionRow>> {
    (0..N_WINDOWS)
        .map(|w| {
            let dims: Vec<usize> = position_dims(w).collect();
            Ok(PositionRow {
                window: w,
                correlation: forest_on_split(data, plan, cfg, &dims)?.pooled.pearson,
                summed_importance: dims.iter().map(|&d| importance[d]).sum(),
            })
        })
        .collect()
}

/// Per window: correlation of a forest trained on that window's 10
/// dimensions, and the summed fold-averaged full-model importance there.
pub fn per_position_analysis(data: &TrainingSet, plan: &SplitPlan, cfg: &ForestConfig) -> Result<Vec<PositionRow>> {
    let importance = fold_averaged_forest_importance(data, plan, cfg)?;
    position_rows(data, plan, cfg, &importance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub per_dimension_correlation: Vec<Option<f64>>,
    pub per_dimension_forest_importance: Vec<f64>,
    /// Sorted by descending importance.
    pub per_type: Vec<TypeRow>,
    pub per_position: Vec<PositionRow>,
    pub all_types_correlation: Option<f64>,
    pub pitch_only_correlation: Option<f64>,
}

pub fn importance_report(data: &TrainingSet, plan: &SplitPlan, cfg: &ForestConfig) -> Result<ImportanceReport> {
    let per_dimension_correlation = per_dimension_correlations(&data.deltas, &data.targets)?;
    let importance = fold_averaged_forest_importance(data, plan, cfg)?;
    let mut per_type = FeatureType::ALL
        .iter()
        .map(|&t| {
            let sel = Selector::Types(vec![t]);
            Ok(TypeRow {
                feature: t,
                importance: t.dims().map(|d| importance[d]).sum(),
                type_only_correlation: subset_experiment(data, plan, cfg, &sel, SubsetMode::Only)?,
                ablation_correlation: subset_experiment(data, plan, cfg, &sel, SubsetMode::Exclude)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    per_type.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.feature.index().cmp(&b.feature.index())));
    let per_position = position_rows(data, plan, cfg, &importance)?;
    let all_types = Selector::Types(FeatureType::ALL.to_vec());
    Ok(ImportanceReport {
        per_dimension_correlation,
        per_dimension_forest_importance: importance,
        per_type,
        per_position,
        all_types_correlation: subset_experiment(data, plan, cfg, &all_types, SubsetMode::Only)?,
        pitch_only_correlation: subset_experiment(data, plan, cfg, &Selector::pitch(), SubsetMode::Only)?,
    })
}
