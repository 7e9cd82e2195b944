//! Whole-pipeline configuration file.

use serde::{Deserialize, Serialize};

use crate::ablation::AblationConfig;
use crate::predictor::PredictConfig;
use crate::scenario_gen::GenConfig;
use crate::trainer::TrainConfig;

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Mode counts for the best-of-K metrics.
    pub ks: Vec<usize>,
    /// Fraction of scenes used for training when splitting a corpus.
    pub train_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 6],
            train_fraction: 0.8,
        }
    }
}

/// One JSON document holding every module's parameters. Missing sections
/// and keys fall back to defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generate: GenConfig,
    pub train: TrainConfig,
    /// Inference settings including the sampler keys.
    pub predict: PredictConfig,
    pub eval: EvalConfig,
    pub ablate: AblationConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
