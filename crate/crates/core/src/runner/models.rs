//! Persisted, self-contained trained pipelines. Each one maps a raw masked
//! feature vector to the probability its cell was evaluated on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Classifier, GbtModel, HoeffdingTree, IsotonicCalibrator, StandardScaler, StreamingScaler};
use crate::metrics::DecisionRule;
use crate::mitigation::EgEnsemble;

pub const MODEL_SCHEMA: &str = "biassim-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Gbt { scaler: StandardScaler, model: GbtModel, calibrator: IsotonicCalibrator },
    Hoeffding { scaler: StreamingScaler, model: HoeffdingTree, calibrator: IsotonicCalibrator },
    EgOffline { scaler: StandardScaler, ensemble: EgEnsemble<GbtModel> },
    EgOnline { scaler: StreamingScaler, ensemble: Option<EgEnsemble<GbtModel>> },
}

impl TrainedModel {
    /// Randomized ensembles are scored by their expected decision.
    pub fn decision_rule(&self) -> DecisionRule {
        match self {
            TrainedModel::Gbt { .. } | TrainedModel::Hoeffding { .. } => DecisionRule::default(),
            TrainedModel::EgOffline { .. } | TrainedModel::EgOnline { .. } => DecisionRule::Expected,
        }
    }
}

impl Classifier for TrainedModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            TrainedModel::Gbt { scaler, model, calibrator } => calibrator.transform(model.predict_proba(&scaler.transform_row(x))),
            TrainedModel::Hoeffding { scaler, model, calibrator } => {
                calibrator.transform(model.predict_proba(&scaler.transform_one(x)))
            }
            TrainedModel::EgOffline { scaler, ensemble } => ensemble.predict_proba(&scaler.transform_row(x)),
            TrainedModel::EgOnline { scaler, ensemble } => {
                ensemble.as_ref().map_or(0.5, |e| e.predict_proba(&scaler.transform_one(x)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedModel {
    pub schema: String,
    /// Visible feature names, in input order.
    pub features: Vec<String>,
    pub model: TrainedModel,
}

impl PersistedModel {
    pub fn new(features: Vec<String>, model: TrainedModel) -> Self {
        Self { schema: MODEL_SCHEMA.to_string(), features, model }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: PersistedModel = serde_json::from_str(&text)?;
        if m.schema != MODEL_SCHEMA {
            return Err(Error::Schema(format!("model schema {:?}, expected {MODEL_SCHEMA:?}", m.schema)));
        }
        Ok(m)
    }
}
