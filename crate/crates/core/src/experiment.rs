//! End-to-end runs: manifest in, report directory out.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_manifest_with, make_split, PairRecord, SplitPlan, SplitSpec};
use crate::error::{Error, Result};
use crate::features::{dim_parts, feature_labels, window_label, DeltaMode, FeatureType, EXTRACTOR_VERSION, N_DIMS, N_WINDOWS};
use crate::importance::{
    evaluate_on_split, importance_report, subset_experiment, ImportanceReport, Selector, SplitEvaluation, SubsetMode,
};
use crate::models::{fit, ModelConfig, ModelKind};
use crate::pipeline::{extract, write_if_changed, write_vectors, ExtractOptions, PairFailure};
use crate::svg::{LineChart, Series};

pub const MODEL_SCORES: &str = "model_scores.csv";
pub const TYPE_IMPORTANCE: &str = "type_importance.csv";
pub const DIMENSION_CORRELATIONS: &str = "dimension_correlations.csv";
pub const POSITION_ANALYSIS: &str = "position_analysis.csv";
pub const FIG_CORRELATION: &str = "fig_correlation_by_position.svg";
pub const FIG_IMPORTANCE: &str = "fig_importance_by_position.svg";
pub const RUN_METADATA: &str = "run_metadata.json";
pub const VECTORS: &str = "vectors.csv";
pub const CACHE_DIR: &str = "cache";
pub const MODELS_DIR: &str = "models";

/// Number of feature types drawn in the correlation-by-position figure.
const FIGURE_TYPES: usize = 5;

/// An additional forest retrained on part of the feature set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetRequest {
    pub selector: Selector,
    pub mode: SubsetMode,
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    pub split: SplitSpec,
    pub split_seed: u64,
    pub models: ModelConfig,
    pub delta_mode: DeltaMode,
    pub extraction: ExtractOptions,
    pub subsets: Vec<SubsetRequest>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest_path: PathBuf::from("manifest.csv"),
            output_dir: PathBuf::from("pragsim-out"),
            split: SplitSpec::KFold { k: 10 },
            split_seed: 0,
            models: ModelConfig::default(),
            delta_mode: DeltaMode::Signed,
            extraction: ExtractOptions::default(),
            subsets: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.manifest_path.as_os_str().is_empty() {
            return Err(Error::Config("manifest_path is empty".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is empty".into()));
        }
        if let SplitSpec::KFold { k } = self.split {
            if k < 2 {
                return Err(Error::Config(format!("k-fold split needs k >= 2, got {k}")));
            }
        }
        let m = &self.models;
        if m.ridge_lambda.is_nan() || m.ridge_lambda < 0.0 {
            return Err(Error::Config(format!("ridge_lambda must be >= 0, got {}", m.ridge_lambda)));
        }
        if m.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        let f = &m.forest;
        if f.n_trees == 0 || f.min_leaf == 0 || f.features_per_split == Some(0) {
            return Err(Error::Config("forest needs n_trees, min_leaf and features_per_split >= 1".into()));
        }
        Ok(())
    }

    /// Reads either a bare config or a previous run's `run_metadata.json`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("config") {
            Some(c) if value.get("extractor_version").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub evaluation: SplitEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub request: SubsetRequest,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub plan: SplitPlan,
    pub models: Vec<ModelResult>,
    pub importance: ImportanceReport,
    pub subsets: Vec<SubsetResult>,
    pub failures: Vec<PairFailure>,
    pub n_pairs_total: usize,
}

#[derive(Serialize)]
struct Metadata<'a> {
    extractor_version: &'a str,
    config: &'a RunConfig,
    n_pairs_total: usize,
    n_pairs_used: usize,
    failures: &'a [PairFailure],
    split_plan: &'a SplitPlan,
    model_results: Vec<MetaModel<'a>>,
    all_types_correlation: Option<f64>,
    pitch_only_correlation: Option<f64>,
    subset_results: &'a [SubsetResult],
}

#[derive(Serialize)]
struct MetaModel<'a> {
    model: ModelKind,
    pooled: &'a crate::models::Evaluation,
    per_fold: &'a [crate::models::Evaluation],
}

/// Fixed six-decimal rendering; undefined values are blank.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn fmt(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Runs extraction, the four models, and the importance battery, then
/// writes the report directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let records = load_manifest_with(&cfg.manifest_path, false)?;
    if records.is_empty() {
        return Err(Error::Config(format!("{} lists no pairs", cfg.manifest_path.display())));
    }
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ex = extract(&records, &cfg.extraction, Some(&out.join(CACHE_DIR)));
    write_vectors(&out.join(VECTORS), &ex.utterances)?;
    let data = ex.training_set(&records, cfg.delta_mode);
    if data.len() < 2 {
        return Err(Error::Model(format!(
            "only {} of {} pairs could be extracted; nothing to train on",
            data.len(),
            records.len()
        )));
    }
    let usable: Vec<PairRecord> = records.iter().filter(|r| data.ids.contains(&r.pair_id)).cloned().collect();
    let plan = make_split(&usable, &cfg.split, cfg.split_seed)?;
    info!("{} pairs, {} folds", data.len(), plan.folds.len());

    let models = ModelKind::ALL
        .iter()
        .map(|&kind| {
            Ok(ModelResult {
                model: kind,
                evaluation: evaluate_on_split(&data, &plan, kind, &cfg.models)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let importance = importance_report(&data, &plan, &cfg.models.forest)?;
    let subsets = cfg
        .subsets
        .iter()
        .map(|req| {
            Ok(SubsetResult {
                request: req.clone(),
                correlation: subset_experiment(&data, &plan, &cfg.models.forest, &req.selector, req.mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let models_dir = out.join(MODELS_DIR);
    std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    for kind in ModelKind::ALL {
        let model = fit(kind, &data, &cfg.models)?
            .with_delta_mode(cfg.delta_mode)
            .with_extractor(cfg.extraction.extractor.clone());
        write_if_changed(&models_dir.join(format!("{}.json", kind.name())), model.to_json()?.as_bytes())?;
    }

    let outcome = ExperimentOutcome {
        plan,
        models,
        importance,
        subsets,
        failures: ex.failures,
        n_pairs_total: records.len(),
    };
    write_report(out, cfg, &outcome, data.len())?;
    Ok(outcome)
}

fn write_report(dir: &Path, cfg: &RunConfig, o: &ExperimentOutcome, n_used: usize) -> Result<()> {
    let rep = &o.importance;
    let scores = o
        .models
        .iter()
        .map(|m| {
            vec![
                m.model.display_name().to_string(),
                fmt_opt(m.evaluation.pooled.pearson),
                fmt(m.evaluation.pooled.mse),
                m.evaluation.pooled.n.to_string(),
            ]
        })
        .collect();
    write_if_changed(&dir.join(MODEL_SCORES), &csv_bytes(&["model", "pearson", "mse", "n_test"], scores)?)?;

    let types = rep
        .per_type
        .iter()
        .map(|r| {
            vec![
                r.feature.name().to_string(),
                fmt(r.importance),
                fmt_opt(r.type_only_correlation),
                fmt_opt(r.ablation_correlation),
            ]
        })
        .collect();
    write_if_changed(
        &dir.join(TYPE_IMPORTANCE),
        &csv_bytes(&["feature_type", "importance", "type_only_correlation", "ablation_correlation"], types)?,
    )?;

    let labels = feature_labels();
    let dims = (0..N_DIMS)
        .map(|d| {
            let (t, w) = dim_parts(d);
            vec![
                labels[d].clone(),
                t.name().to_string(),
                window_label(w),
                fmt_opt(rep.per_dimension_correlation[d]),
                fmt(rep.per_dimension_forest_importance[d]),
            ]
        })
        .collect();
    write_if_changed(
        &dir.join(DIMENSION_CORRELATIONS),
        &csv_bytes(&["dimension", "feature_type", "window", "correlation", "forest_importance"], dims)?,
    )?;

    let positions = rep
        .per_position
        .iter()
        .map(|r| {
            vec![
                r.window.to_string(),
                window_label(r.window),
                fmt_opt(r.correlation),
                fmt(r.summed_importance),
            ]
        })
        .collect();
    write_if_changed(
        &dir.join(POSITION_ANALYSIS),
        &csv_bytes(&["window", "span_percent", "position_only_correlation", "summed_importance"], positions)?,
    )?;

    let x_labels: Vec<String> = (0..N_WINDOWS).map(window_label).collect();
    let top: Vec<FeatureType> = rep.per_type.iter().take(FIGURE_TYPES).map(|r| r.feature).collect();
    let fig1 = LineChart {
        title: "Correlation with judgments by position".into(),
        x_title: "position in utterance".into(),
        x_labels: x_labels.clone(),
        left_title: "Pearson r".into(),
        right_title: None,
        series: top
            .iter()
            .map(|t| Series {
                name: t.name().to_string(),
                values: t.dims().map(|d| rep.per_dimension_correlation[d]).collect(),
                right_axis: false,
            })
            .collect(),
    };
    write_if_changed(&dir.join(FIG_CORRELATION), fig1.render().as_bytes())?;
    let fig2 = LineChart {
        title: "Importance by position".into(),
        x_title: "position in utterance".into(),
        x_labels,
        left_title: "position-only model r".into(),
        right_title: Some("summed forest importance".into()),
        series: vec![
            Series {
                name: "position-only correlation".into(),
                values: rep.per_position.iter().map(|r| r.correlation).collect(),
                right_axis: false,
            },
            Series {
                name: "summed importance".into(),
                values: rep.per_position.iter().map(|r| Some(r.summed_importance)).collect(),
                right_axis: true,
            },
        ],
    };
    write_if_changed(&dir.join(FIG_IMPORTANCE), fig2.render().as_bytes())?;

    let meta = Metadata {
        extractor_version: EXTRACTOR_VERSION,
        config: cfg,
        n_pairs_total: o.n_pairs_total,
        n_pairs_used: n_used,
        failures: &o.failures,
        split_plan: &o.plan,
        model_results: o
            .models
            .iter()
            .map(|m| MetaModel {
                model: m.model,
                pooled: &m.evaluation.pooled,
                per_fold: &m.evaluation.per_fold,
            })
            .collect(),
        all_types_correlation: rep.all_types_correlation,
        pitch_only_correlation: rep.pitch_only_correlation,
        subset_results: &o.subsets,
    };
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    write_if_changed(&dir.join(RUN_METADATA), json.as_bytes())?;
    Ok(())
}
