//! Second-order gradient boosting with exact greedy splits.

pub mod loss;
pub mod split;
pub mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Instance;
pub use loss::{logistic_gradients, sigmoid, GradientPair, LogisticLoss, Loss};
pub use split::{find_best_split, split_gain, Direction, FeatureIndex, GainError, SplitCandidate};
pub use tree::{grow_tree, leaf_weight, train_tree, tree_objective, Node, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("model i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model version {0}")]
    Version(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub min_child_instances: usize,
    pub base_score: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            num_trees: 500,
            max_depth: 8,
            lambda: 1.0,
            gamma: 0.0,
            learning_rate: 0.1,
            min_child_instances: 1,
            base_score: 0.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::Params(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite value >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a finite value >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.min_child_instances == 0 {
            return bad("min_child_instances must be >= 1");
        }
        if self.max_depth > 30 {
            return bad("max_depth above 30 is not supported");
        }
        if !self.base_score.is_finite() {
            return bad("base_score must be finite");
        }
        Ok(())
    }
}

/// Additive tree ensemble: `raw(x) = base_score + learning_rate * sum_t f_t(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn new(base_score: f64, learning_rate: f64) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            base_score,
            learning_rate,
            trees: Vec::new(),
        }
    }

    pub fn predict(&self, x: &Instance) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    /// 1 iff `sigmoid(raw) >= 0.5`, i.e. `raw >= 0`.
    pub fn predict_class(&self, x: &Instance) -> u8 {
        u8::from(self.predict(x) >= 0.0)
    }

    pub fn to_json(&self) -> Result<String, GbdtError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, GbdtError> {
        let model: GbdtModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(GbdtError::Version(model.format_version));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GbdtError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GbdtError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Adds `learning_rate * tree(x)` to each raw score.
pub fn apply_tree(raw_scores: &mut [f64], instances: &[Instance], tree: &Tree, learning_rate: f64) {
    for (raw, x) in raw_scores.iter_mut().zip(instances) {
        *raw += learning_rate * tree.predict(x);
    }
}

pub fn compute_gradients(
    raw_scores: &[f64],
    instances: &[Instance],
    loss: &dyn Loss,
) -> Vec<GradientPair> {
    raw_scores
        .iter()
        .zip(instances)
        .map(|(&raw, x)| loss.gradient(raw, x.label))
        .collect()
}

/// Vanilla boosting on a single instance set.
pub fn train_gbdt(
    instances: &[Instance],
    dimension: usize,
    params: &GbdtParams,
    loss: &dyn Loss,
) -> Result<GbdtModel, GbdtError> {
    params.validate()?;
    let index = FeatureIndex::build(instances, dimension);
    let mut raw = vec![params.base_score; instances.len()];
    let mut model = GbdtModel::new(params.base_score, params.learning_rate);
    for _ in 0..params.num_trees {
        let grads = compute_gradients(&raw, instances, loss);
        let tree = grow_tree(&index, &grads, params);
        apply_tree(&mut raw, instances, &tree, params.learning_rate);
        model.trees.push(tree);
    }
    Ok(model)
}
