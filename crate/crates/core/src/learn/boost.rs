//! Multiclass gradient-boosted trees with a softmax cross-entropy objective.
//!
//! Each round fits one least-squares regression tree per class to the
//! negative gradient `onehot(y) - softmax(F)` and adds it, scaled by the
//! learning rate, to that class's score. Leaves hold the mean residual, so
//! there is no second-order leaf weighting and no regularization term.

use serde::{Deserialize, Serialize};

use super::tree::{fit_regression_tree, RegressionParams, RegressionTree, SortedColumns};
use crate::domain::WeedClass;
use crate::error::{Error, Result};

const K: usize = WeedClass::COUNT;
const PRIOR_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
        }
    }
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidHyperparameter("learning_rate must be positive".into()));
        }
        if self.n_rounds == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidHyperparameter(
                "n_rounds, max_depth and min_leaf must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    initial: [f64; K],
    learning_rate: f64,
    /// `rounds[r][k]` is round r's tree for class k.
    rounds: Vec<[RegressionTree; K]>,
    /// Mean training cross-entropy after each round.
    loss_history: Vec<f64>,
}

fn softmax(scores: &[f64; K]) -> [f64; K] {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = scores.map(|s| (s - max).exp());
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// `-log softmax(scores)[class]`, computed stably.
fn cross_entropy(scores: &[f64; K], class: usize) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[class]
}

fn mean_loss(scores: &[[f64; K]], y: &[WeedClass]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(s, c)| cross_entropy(s, c.ordinal()))
        .sum::<f64>()
        / y.len() as f64
}

impl Booster {
    pub fn fit(x: &[&[f64]], y: &[WeedClass], params: &BoostingParams) -> Result<Booster> {
        if x.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        params.validate()?;
        let n = x.len();
        let mut counts = [0usize; K];
        for c in y {
            counts[c.ordinal()] += 1;
        }
        let initial = counts.map(|c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln());
        let mut scores = vec![initial; n];
        let sorted = SortedColumns::new(x);
        let tree_params = RegressionParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
        };

        let mut rounds = Vec::with_capacity(params.n_rounds);
        let mut loss_history = Vec::with_capacity(params.n_rounds);
        let mut residual = vec![0.0; n];
        for _ in 0..params.n_rounds {
            let probs: Vec<[f64; K]> = scores.iter().map(softmax).collect();
            let trees: [RegressionTree; K] = std::array::from_fn(|k| {
                for i in 0..n {
                    let target = if y[i].ordinal() == k { 1.0 } else { 0.0 };
                    residual[i] = target - probs[i][k];
                }
                fit_regression_tree(x, &sorted, &residual, tree_params)
            });
            for (s, row) in scores.iter_mut().zip(x) {
                for k in 0..K {
                    s[k] += params.learning_rate * trees[k].predict(row);
                }
            }
            loss_history.push(mean_loss(&scores, y));
            rounds.push(trees);
        }
        Ok(Booster {
            initial,
            learning_rate: params.learning_rate,
            rounds,
            loss_history,
        })
    }

    pub fn scores(&self, x: &[f64]) -> [f64; K] {
        let mut s = self.initial;
        for trees in &self.rounds {
            for k in 0..K {
                s[k] += self.learning_rate * trees[k].predict(x);
            }
        }
        s
    }

    /// Highest-scoring class; ties go to the lower ordinal.
    pub fn predict(&self, x: &[f64]) -> WeedClass {
        let s = self.scores(x);
        let mut best = 0;
        for k in 1..K {
            if s[k] > s[best] {
                best = k;
            }
        }
        WeedClass::ALL[best]
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_and_loss_are_stable() {
        let p = softmax(&[1000.0, 0.0, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        let ce = cross_entropy(&[0.0; 4], 2);
        assert!((ce - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_learning_rate() {
        let x: Vec<&[f64]> = vec![&[1.0]];
        let params = BoostingParams {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            Booster::fit(&x, &[WeedClass::Mowing], &params),
            Err(Error::InvalidHyperparameter(_))
        ));
    }
}
