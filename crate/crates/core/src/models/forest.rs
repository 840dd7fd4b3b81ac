use log::warn;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelParams, TrainedModel, TrainingSet};
use crate::error::{Error, Result};
use crate::features::N_DIMS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves hit `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means a third of the active dimensions, rounded up.
    pub features_per_split: Option<usize>,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_leaf: 5,
            features_per_split: None,
            rng_seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Model("forest needs at least one tree".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Model("min_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::Model("features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    pub fn candidates_per_split(&self, active: usize) -> usize {
        self.features_per_split.unwrap_or(active.div_ceil(3)).clamp(1, active.max(1))
    }
}

/// `x[dim] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        dim: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => node = if x[*dim] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

pub type Tree = TreeNode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    /// Dimensions the trees were allowed to split on.
    pub dims: Vec<usize>,
    pub trees: Vec<TreeNode>,
    /// One entry per dimension, summing to 1; inactive dimensions are 0.
    pub importances: Vec<f64>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest(train: &TrainingSet, cfg: &ForestConfig) -> Result<TrainedModel> {
    let all: Vec<usize> = (0..N_DIMS).collect();
    fit_forest_on_dims(train, cfg, &all)
}

/// Forest restricted to splitting on `dims`.
pub fn fit_forest_on_dims(train: &TrainingSet, cfg: &ForestConfig, dims: &[usize]) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Model("random forest needs a non-empty training set".into()));
    }
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    if dims.is_empty() || dims.iter().any(|&d| d >= N_DIMS) {
        return Err(Error::Model(format!("invalid forest dimension set {dims:?}")));
    }
    let train = train.canonical();
    let columns: Vec<Vec<f64>> = (0..N_DIMS)
        .map(|d| train.deltas.iter().map(|v| v[d]).collect())
        .collect();

    let grown: Vec<(TreeNode, Vec<f64>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(t as u64);
            grow_tree(&columns, &train.targets, &dims, cfg, &mut rng)
        })
        .collect();

    let mut raw = vec![0.0; N_DIMS];
    for (_, gains) in &grown {
        for (r, g) in raw.iter_mut().zip(gains) {
            *r += g;
        }
    }
    let total: f64 = raw.iter().sum();
    let importances = if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        warn!("forest found no informative split; importance is uniform over {} dims", dims.len());
        let mut u = vec![0.0; N_DIMS];
        for &d in &dims {
            u[d] = 1.0 / dims.len() as f64;
        }
        u
    };
    let forest = Forest {
        config: cfg.clone(),
        dims,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        importances,
    };
    Ok(TrainedModel::new(&train, ModelParams::Forest(forest)))
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    dims: &'a [usize],
    cfg: &'a ForestConfig,
    mtry: usize,
    gains: Vec<f64>,
}

fn grow_tree(
    columns: &[Vec<f64>],
    y: &[f64],
    dims: &[usize],
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> (TreeNode, Vec<f64>) {
    let n = y.len();
    let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    rows.sort_unstable();
    let mut g = Grower {
        columns,
        y,
        dims,
        cfg,
        mtry: cfg.candidates_per_split(dims.len()),
        gains: vec![0.0; N_DIMS],
    };
    let root = g.grow(&mut rows, 0, rng);
    (root, g.gains)
}

struct BestSplit {
    dim: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let leaf = TreeNode::Leaf { value: mean };
        if n < 2 * self.cfg.min_leaf || self.cfg.max_depth.is_some_and(|d| depth >= d) || sse <= 0.0 {
            return leaf;
        }
        let Some(best) = self.best_split(rows, sse, rng) else {
            return leaf;
        };
        self.gains[best.dim] += best.gain;
        let col = &self.columns[best.dim];
        rows.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let cut = rows.partition_point(|&i| col[i] <= best.threshold);
        let (l, r) = rows.split_at_mut(cut);
        // Children take rows in index order so growth does not depend on
        // the sort above.
        l.sort_unstable();
        r.sort_unstable();
        TreeNode::Split {
            dim: best.dim,
            threshold: best.threshold,
            left: Box::new(self.grow(l, depth + 1, rng)),
            right: Box::new(self.grow(r, depth + 1, rng)),
        }
    }

    fn best_split(&self, rows: &[usize], sse: f64, rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.cfg.min_leaf;
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for c in sample(rng, self.dims.len(), self.mtry) {
            let dim = self.dims[c];
            let col = &self.columns[dim];
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (col[i], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
            let (mut s, mut s2) = (0.0, 0.0);
            for k in 1..n {
                s += pairs[k - 1].1;
                s2 += pairs[k - 1].1 * pairs[k - 1].1;
                if k < min_leaf || n - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let sr = total - s;
                let sse_children = (s2 - s * s / nl) + (total_sq - s2 - sr * sr / nr);
                let gain = sse - sse_children;
                if gain > 1e-12 * sse && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(BestSplit {
                        dim,
                        threshold: if mid < hi { mid } else { lo },
                        gain,
                    });
                }
            }
        }
        best
    }
}
