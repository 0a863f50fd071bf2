use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::boost::{Booster, BoostingParams};
use super::dataset::Dataset;
use super::forest::{Forest, ForestParams};
use super::knn::{Knn, KnnParams};
use crate::domain::WeedClass;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, ParcelFeatureVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Gbt,
    Knn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Knn => "knn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" | "random_forest" | "random-forest" => Ok(ModelKind::Rf),
            "gbt" | "xgb" | "gradient_boosting" | "gradient-boosting" => Ok(ModelKind::Gbt),
            "knn" => Ok(ModelKind::Knn),
            _ => Err(Error::InvalidHyperparameter(format!("model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Rf(ForestParams),
    Gbt(BoostingParams),
    Knn(KnnParams),
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::Rf(_) => ModelKind::Rf,
            Hyperparams::Gbt(_) => ModelKind::Gbt,
            Hyperparams::Knn(_) => ModelKind::Knn,
        }
    }

    /// Flat name/value view for reports.
    pub fn named(&self) -> BTreeMap<String, String> {
        let value = serde_json::to_value(self).expect("hyperparameters serialize");
        value
            .as_object()
            .into_iter()
            .flatten()
            .filter(|(k, _)| k.as_str() != "kind")
            .map(|(k, v)| {
                let v = match v {
                    serde_json::Value::Null => "none".to_string(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), v)
            })
            .collect()
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.named().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{} {}", self.kind(), parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnedState {
    Forest(Forest),
    Booster(Booster),
    Knn(Knn),
}

/// A trained model plus everything needed to check and reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub schema_fingerprint: String,
    pub schema: FeatureSchema,
    pub state: LearnedState,
}

fn artifact(train: &Dataset, hyperparams: Hyperparams, seed: u64, state: LearnedState) -> ModelArtifact {
    ModelArtifact {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: hyperparams.kind(),
        hyperparams,
        seed,
        schema_fingerprint: train.schema().fingerprint(),
        schema: (**train.schema()).clone(),
        state,
    }
}

pub fn train_random_forest(train: &Dataset, hp: &ForestParams, seed: u64) -> Result<ModelArtifact> {
    let forest = Forest::fit(&train.matrix(), train.labels(), hp, seed)?;
    Ok(artifact(train, Hyperparams::Rf(hp.clone()), seed, LearnedState::Forest(forest)))
}

/// Deterministic; the seed is recorded but not consumed.
pub fn train_gradient_boosting(train: &Dataset, hp: &BoostingParams, seed: u64) -> Result<ModelArtifact> {
    let booster = Booster::fit(&train.matrix(), train.labels(), hp)?;
    Ok(artifact(train, Hyperparams::Gbt(hp.clone()), seed, LearnedState::Booster(booster)))
}

pub fn train_knn(train: &Dataset, hp: &KnnParams) -> Result<ModelArtifact> {
    let knn = Knn::fit(&train.matrix(), train.labels(), hp)?;
    Ok(artifact(train, Hyperparams::Knn(hp.clone()), 0, LearnedState::Knn(knn)))
}

pub fn train(train_set: &Dataset, hp: &Hyperparams, seed: u64) -> Result<ModelArtifact> {
    match hp {
        Hyperparams::Rf(p) => train_random_forest(train_set, p, seed),
        Hyperparams::Gbt(p) => train_gradient_boosting(train_set, p, seed),
        Hyperparams::Knn(p) => {
            let mut m = train_knn(train_set, p)?;
            m.seed = seed;
            Ok(m)
        }
    }
}

impl ModelArtifact {
    pub fn predict_row(&self, x: &[f64]) -> WeedClass {
        match &self.state {
            LearnedState::Forest(f) => f.predict(x),
            LearnedState::Booster(b) => b.predict(x),
            LearnedState::Knn(k) => k.predict(x),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a serialized model, rejecting unknown format versions.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedModelVersion(header.format_version));
        }
        let model: ModelArtifact = serde_json::from_str(text)?;
        if model.schema.fingerprint() != model.schema_fingerprint {
            return Err(Error::SchemaMismatch("stored fingerprint does not match stored schema".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One label per row; rows must carry the model's feature schema.
pub fn predict(model: &ModelArtifact, rows: &[ParcelFeatureVector]) -> Result<Vec<WeedClass>> {
    let mut checked: Option<&Arc<FeatureSchema>> = None;
    rows.iter()
        .map(|row| {
            if !checked.is_some_and(|s| Arc::ptr_eq(s, &row.schema)) {
                let fp = row.schema.fingerprint();
                if fp != model.schema_fingerprint {
                    return Err(Error::SchemaMismatch(format!(
                        "parcel {} has schema {} but the model expects {}",
                        row.parcel_id,
                        &fp[..12],
                        &model.schema_fingerprint[..12.min(model.schema_fingerprint.len())]
                    )));
                }
                checked = Some(&row.schema);
            }
            Ok(model.predict_row(&row.values))
        })
        .collect()
}
