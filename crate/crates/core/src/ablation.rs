//! Evaluation over scene sets and the decoder ablation table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{evaluate, EvalSample, MetricsError, MetricsReport};
use crate::model::{DecoderKind, ModelParams};
use crate::predictor::{predict, PredictConfig, PredictError, PredictionSet};
use crate::scene::Scene;
use crate::trainer::{train, LossReport, TrainConfig, TrainError};

pub const ABLATION_HEADER: &str = "decoder,min_fde_1,mr_1,min_fde_6,mr_6,offroad_rate,lane_dev";
pub const OFFROAD_HEADER: &str = "horizon_step,offroad_rate";
pub const LOSS_HEADER: &str = "epoch,cls,reg_s,reg_d,selector,path_free,total";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ablation needs at least one decoder")]
    NoDecoders,
    #[error("scene {0} has no ground-truth future for its focal agent")]
    MissingFuture(usize),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Predict the focal agent of every scene.
pub fn predict_scenes(
    params: &ModelParams,
    scenes: &[Scene],
    config: &PredictConfig,
) -> Result<Vec<PredictionSet>, PredictError> {
    scenes
        .iter()
        .map(|s| predict(params, s, s.focal_agent_id, config))
        .collect()
}

/// Metrics for precomputed predictions of each scene's focal agent.
pub fn evaluate_predictions(
    scenes: &[Scene],
    predictions: &[PredictionSet],
    ks: &[usize],
) -> Result<MetricsReport, EvalError> {
    let mut samples = Vec::with_capacity(scenes.len());
    for (i, (scene, pred)) in scenes.iter().zip(predictions).enumerate() {
        let gt = scene
            .focal_agent()
            .future
            .as_deref()
            .ok_or(EvalError::MissingFuture(i))?;
        samples.push(EvalSample {
            prediction: pred,
            ground_truth: gt,
            map: &scene.map,
        });
    }
    Ok(evaluate(&samples, ks)?)
}

/// Predict and evaluate the focal agent of every scene.
pub fn evaluate_model(
    params: &ModelParams,
    scenes: &[Scene],
    config: &PredictConfig,
    ks: &[usize],
) -> Result<(MetricsReport, Vec<PredictionSet>), EvalError> {
    let preds = predict_scenes(params, scenes, config)?;
    let report = evaluate_predictions(scenes, &preds, ks)?;
    Ok((report, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub decoders: Vec<DecoderKind>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            decoders: DecoderKind::ALL.to_vec(),
        }
    }
}

/// One trained and evaluated decoder.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub decoder: DecoderKind,
    pub report: MetricsReport,
    pub history: Vec<LossReport>,
    pub params: ModelParams,
}

/// Train every decoder on identical data and seed, then evaluate each on
/// the validation scenes.
pub fn run_ablation(
    train_scenes: &[Scene],
    val_scenes: &[Scene],
    ablation: &AblationConfig,
    train_config: &TrainConfig,
    predict_config: &PredictConfig,
) -> Result<Vec<AblationRow>, EvalError> {
    if ablation.decoders.is_empty() {
        return Err(EvalError::NoDecoders);
    }
    let mut rows = Vec::with_capacity(ablation.decoders.len());
    for &decoder in &ablation.decoders {
        let cfg = TrainConfig {
            decoder,
            ..train_config.clone()
        };
        let outcome = train(train_scenes, &predict_config.sampler, &cfg)?;
        let (report, _) = evaluate_model(&outcome.params, val_scenes, predict_config, &[1, 6])?;
        rows.push(AblationRow {
            decoder,
            report,
            history: outcome.history,
            params: outcome.params,
        });
    }
    Ok(rows)
}

fn metric(map: &std::collections::BTreeMap<usize, f64>, k: usize) -> f64 {
    map.get(&k).copied().unwrap_or(f64::NAN)
}

/// Table rows under [`ABLATION_HEADER`].
pub fn ablation_csv(rows: &[(DecoderKind, &MetricsReport)]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for (d, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            d.name(),
            metric(&r.min_fde, 1),
            metric(&r.miss_rate, 1),
            metric(&r.min_fde, 6),
            metric(&r.miss_rate, 6),
            r.offroad_rate,
            r.lane_deviation
        ));
    }
    out
}

/// Per-step offroad rates under [`OFFROAD_HEADER`]; steps count from 1.
pub fn offroad_csv(report: &MetricsReport) -> String {
    let mut out = String::from(OFFROAD_HEADER);
    out.push('\n');
    for (t, r) in report.offroad_by_horizon.iter().enumerate() {
        out.push_str(&format!("{},{}\n", t + 1, r));
    }
    out
}

/// Per-epoch losses under [`LOSS_HEADER`].
pub fn loss_csv(history: &[LossReport]) -> String {
    let mut out = String::from(LOSS_HEADER);
    out.push('\n');
    for (e, r) in history.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e + 1,
            r.cls_loss,
            r.reg_loss_s,
            r.reg_loss_d,
            r.selector_loss,
            r.path_free_loss,
            r.total
        ));
    }
    out
}
