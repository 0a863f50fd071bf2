//! Stratified k-fold grid search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::BoostingParams;
use super::dataset::Dataset;
use super::forest::ForestParams;
use super::knn::{Distance, KnnParams};
use super::model::{predict, train, Hyperparams, ModelKind};
use crate::domain::WeedClass;
use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::rng::derive_seed;

pub const DEFAULT_FOLDS: usize = 5;

pub fn default_grid(kind: ModelKind) -> Vec<Hyperparams> {
    match kind {
        ModelKind::Rf => {
            let mut grid = Vec::new();
            for n_trees in [100, 300, 500] {
                for max_depth in [Some(8), None] {
                    grid.push(Hyperparams::Rf(ForestParams {
                        n_trees,
                        max_depth,
                        ..Default::default()
                    }));
                }
            }
            grid
        }
        ModelKind::Gbt => {
            let mut grid = Vec::new();
            for n_rounds in [100, 300] {
                for learning_rate in [0.05, 0.1] {
                    for max_depth in [3, 5] {
                        grid.push(Hyperparams::Gbt(BoostingParams {
                            n_rounds,
                            learning_rate,
                            max_depth,
                            min_leaf: 1,
                        }));
                    }
                }
            }
            grid
        }
        ModelKind::Knn => {
            let mut grid = Vec::new();
            for k in [3, 5, 7, 11] {
                for distance in [Distance::Euclidean, Distance::Manhattan] {
                    grid.push(Hyperparams::Knn(KnnParams {
                        k,
                        distance,
                        standardize: true,
                    }));
                }
            }
            grid
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Hyperparams,
    pub best_index: usize,
    /// Mean held-out weighted F1 per grid candidate, in grid order.
    pub mean_weighted_f1: Vec<f64>,
    pub folds: usize,
}

/// Fold index of every row: within each class, rows are ranked by a
/// seed-keyed hash of their parcel id and dealt round-robin.
pub fn stratified_folds(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidHyperparameter("folds must be at least 2".into()));
    }
    let counts = data.class_counts();
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 && n < folds {
            return Err(Error::ClassSmallerThanFolds {
                class: WeedClass::ALL[c].to_string(),
                count: n,
                folds,
            });
        }
    }
    let mut assignment = vec![0; data.len()];
    for ranked in data.ranked_by_class(seed, "folds") {
        for (rank, i) in ranked.into_iter().enumerate() {
            assignment[i] = rank % folds;
        }
    }
    Ok(assignment)
}

/// Mean held-out weighted F1 of every candidate; the best is the highest
/// mean, earliest grid position on ties.
pub fn cross_validate(
    train_set: &Dataset,
    kind: ModelKind,
    grid: &[Hyperparams],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidHyperparameter("empty hyperparameter grid".into()));
    }
    if let Some(hp) = grid.iter().find(|h| h.kind() != kind) {
        return Err(Error::InvalidHyperparameter(format!(
            "grid for {kind} contains a {} candidate",
            hp.kind()
        )));
    }
    let assignment = stratified_folds(train_set, folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let (held, fit): (Vec<usize>, Vec<usize>) =
                (0..train_set.len()).partition(|&i| assignment[i] == f);
            (train_set.subset(&fit), train_set.subset(&held))
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (fit, held) = &splits[f];
            let model = train(fit, &grid[c], derive_seed(seed, "cv-fit", f as u64))?;
            let pred = predict(&model, held.rows())?;
            let report = EvaluationReport::from_predictions(held.labels(), &pred, Default::default())?;
            Ok(report.weighted_f1)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean_weighted_f1: Vec<f64> = scores
        .chunks(folds)
        .map(|s| s.iter().sum::<f64>() / folds as f64)
        .collect();
    let mut best_index = 0;
    for (i, &m) in mean_weighted_f1.iter().enumerate() {
        if m > mean_weighted_f1[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        best: grid[best_index].clone(),
        best_index,
        mean_weighted_f1,
        folds,
    })
}
