//! Dataset splitting and rebalancing, the three classifiers, and
//! cross-validated hyperparameter search.

pub mod boost;
pub mod cv;
pub mod dataset;
pub mod forest;
pub mod knn;
pub mod model;
pub mod tree;

pub use boost::{Booster, BoostingParams};
pub use cv::{cross_validate, default_grid, stratified_folds, CvResult, DEFAULT_FOLDS};
pub use dataset::{stratified_split, undersample_majority, ClassCounts, Dataset, SplitSpec};
pub use forest::{Forest, ForestParams};
pub use knn::{Distance, Knn, KnnParams, Standardizer};
pub use model::{
    predict, train, train_gradient_boosting, train_knn, train_random_forest, Hyperparams,
    LearnedState, ModelArtifact, ModelKind, MODEL_FORMAT_VERSION,
};

/// Default fraction of majority-class training rows removed before fitting.
pub const DEFAULT_UNDERSAMPLE_FRACTION: f64 = 0.006;
