//! Brute-force k-nearest-neighbour classifier.

use serde::{Deserialize, Serialize};

use super::tree::majority;
use crate::domain::WeedClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Manhattan,
}

impl Distance {
    /// Squared for Euclidean; the ordering is the same.
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Distance::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Manhattan => "manhattan",
        }
    }
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Distance::Euclidean),
            "manhattan" | "l1" => Ok(Distance::Manhattan),
            _ => Err(Error::InvalidHyperparameter(format!("distance `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub distance: Distance,
    pub standardize: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 5,
            distance: Distance::Euclidean,
            standardize: true,
        }
    }
}

/// Per-feature z-score parameters; constant features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[&[f64]]) -> Standardizer {
        let n = x.len() as f64;
        let d = x.first().map_or(0, |r| r.len());
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for j in 0..d {
                let dv = row[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    distance: Distance,
    standardizer: Option<Standardizer>,
    x: Vec<Vec<f64>>,
    y: Vec<WeedClass>,
}

impl Knn {
    pub fn fit(x: &[&[f64]], y: &[WeedClass], params: &KnnParams) -> Result<Knn> {
        if x.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if params.k == 0 {
            return Err(Error::InvalidHyperparameter("k must be at least 1".into()));
        }
        if params.k > x.len() {
            return Err(Error::KTooLarge {
                k: params.k,
                n: x.len(),
            });
        }
        let standardizer = params.standardize.then(|| Standardizer::fit(x));
        let stored = x
            .iter()
            .map(|r| match &standardizer {
                Some(s) => s.transform(r),
                None => r.to_vec(),
            })
            .collect();
        Ok(Knn {
            k: params.k,
            distance: params.distance,
            standardizer,
            x: stored,
            y: y.to_vec(),
        })
    }

    /// Majority label of the k nearest rows. Equal distances rank the
    /// earlier training row first; vote ties go to the lower class ordinal.
    pub fn predict(&self, row: &[f64]) -> WeedClass {
        let query = match &self.standardizer {
            Some(s) => s.transform(row),
            None => row.to_vec(),
        };
        let mut ranked: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (self.distance.eval(&query, r), i))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = [0usize; WeedClass::COUNT];
        for &(_, i) in &ranked[..self.k] {
            votes[self.y[i].ordinal()] += 1;
        }
        majority(&votes)
    }
}
