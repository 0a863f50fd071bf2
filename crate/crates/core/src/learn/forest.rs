//! Random forest of Gini CART trees over bootstrap samples.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_classification_tree, majority, CartParams, ClassificationTree};
use crate::domain::WeedClass;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Defaults to the rounded square root of the feature count.
    pub features_per_split: Option<usize>,
    /// Disabling bootstrap trains every tree on the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidHyperparameter("n_trees must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidHyperparameter("min_leaf must be positive".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidHyperparameter("features_per_split must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<ClassificationTree>,
}

impl Forest {
    pub fn fit(x: &[&[f64]], y: &[WeedClass], params: &ForestParams, seed: u64) -> Result<Forest> {
        if x.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        params.validate()?;
        let n = x.len();
        let n_features = x[0].len();
        let cart = CartParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            features_per_split: params
                .features_per_split
                .unwrap_or_else(|| ((n_features as f64).sqrt().round() as usize).max(1))
                .min(n_features.max(1)),
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, "rf-tree", t as u64);
                let sample: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                fit_classification_tree(x, y, sample, cart, &mut rng)
            })
            .collect();
        Ok(Forest { trees })
    }

    /// Majority vote over trees; ties go to the lower class ordinal.
    pub fn predict(&self, x: &[f64]) -> WeedClass {
        let mut votes = [0usize; WeedClass::COUNT];
        for t in &self.trees {
            votes[t.predict(x).ordinal()] += 1;
        }
        majority(&votes)
    }

    pub fn trees(&self) -> &[ClassificationTree] {
        &self.trees
    }

    pub fn from_trees(trees: Vec<ClassificationTree>) -> Forest {
        Forest { trees }
    }
}
