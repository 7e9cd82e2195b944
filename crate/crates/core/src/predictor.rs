//! Inference: path classification, NMS path selection, trajectory decoding
//! and the path-free fallback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    agent_goal_raw_features, agent_path_raw_features, encode_agent_in_map, frenet_history,
    goal_raw_features, path_raw_features, AgentFeature, AgentFrame, FeatureError, FrenetHistory,
    POSITION_SCALE,
};
use crate::frenet::{frenet_to_cartesian, FrenetState, FrenetTrajectory, GeometryError};
use crate::geometry::Vec2;
use crate::model::{DecoderKind, ModelParams};
use crate::path_sampler::{candidates_for_agent, CandidateSet, ReferencePath, SamplerConfig};
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("agent {0} not found in scene")]
    UnknownAgent(i64),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Inference settings; names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    #[serde(flatten)]
    pub sampler: SamplerConfig,
    /// Number of output modes K.
    pub k: usize,
    pub nms_radius_m: f64,
    pub selector_threshold: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            k: 6,
            nms_radius_m: 2.0,
            selector_threshold: 0.5,
        }
    }
}

/// K trajectories with probabilities for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub agent_id: i64,
    pub trajectories: Vec<Vec<Vec2>>,
    pub probabilities: Vec<f64>,
    /// Reference path of each mode; `None` for path-free output.
    pub mode_paths: Vec<Option<ReferencePath>>,
    /// Set when the path-free decoder produced this prediction.
    pub path_free: bool,
}

impl PredictionSet {
    pub fn num_modes(&self) -> usize {
        self.trajectories.len()
    }

    /// Mode indices ordered by descending probability (ties by index).
    pub fn ranked_modes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.num_modes()).collect();
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Goal candidates: unique path endpoints with their lane direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pub goals: Vec<(Vec2, Vec2)>,
    /// Goal index of every path.
    pub path_goal: Vec<usize>,
    /// First path ending at each goal.
    pub representative: Vec<usize>,
}

pub fn goal_set(paths: &[ReferencePath]) -> GoalSet {
    let mut goals: Vec<(Vec2, Vec2)> = Vec::new();
    let mut path_goal = Vec::with_capacity(paths.len());
    let mut representative = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let end = p.end();
        match goals.iter().position(|(g, _)| g.distance(end) < 1e-6) {
            Some(j) => path_goal.push(j),
            None => {
                path_goal.push(goals.len());
                goals.push((end, p.end_direction()));
                representative.push(i);
            }
        }
    }
    GoalSet {
        goals,
        path_goal,
        representative,
    }
}

/// Raw per-candidate inputs for the two encoders.
pub(crate) fn candidate_raw_features(
    kind: DecoderKind,
    frame: &AgentFrame,
    paths: &[ReferencePath],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    match kind {
        DecoderKind::GoalBased => goal_set(paths)
            .goals
            .iter()
            .map(|&(g, d)| {
                (
                    goal_raw_features(frame, g, d),
                    agent_goal_raw_features(frame, g, d),
                )
            })
            .unzip(),
        _ => paths
            .iter()
            .map(|p| (path_raw_features(frame, p), agent_path_raw_features(frame, p)))
            .unzip(),
    }
}

pub(crate) fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut v = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        v.extend_from_slice(p);
    }
    v
}

/// Encoded features and logits for every classification candidate.
struct Scored {
    path_feats: Vec<Vec<f64>>,
    ap_feats: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn score_candidates(
    params: &ModelParams,
    agent: &AgentFeature,
    raw_p: &[Vec<f64>],
    raw_ap: &[Vec<f64>],
) -> Scored {
    let mut path_feats = Vec::with_capacity(raw_p.len());
    let mut ap_feats = Vec::with_capacity(raw_p.len());
    let mut logits = Vec::with_capacity(raw_p.len());
    for (rp, rap) in raw_p.iter().zip(raw_ap) {
        let fp = params.path_encoder.forward(rp);
        let fap = params.agent_path_encoder.forward(rap);
        let logit = params
            .classifier
            .forward(&concat(&[&agent.values, &fp, &fap]))[0];
        path_feats.push(fp);
        ap_feats.push(fap);
        logits.push(logit);
    }
    Scored {
        path_feats,
        ap_feats,
        logits,
    }
}

/// Softmax distribution over the agent's candidate paths (over unique goals
/// for the goal-based decoder).
pub fn classify_paths(
    params: &ModelParams,
    agent: &AgentFeature,
    candidates: &CandidateSet,
) -> Result<Vec<f64>, PredictError> {
    if candidates.paths.is_empty() {
        return Err(PredictError::EmptyCandidates);
    }
    let (raw_p, raw_ap) = candidate_raw_features(params.kind, &agent.frame, &candidates.paths);
    Ok(softmax(&score_candidates(params, agent, &raw_p, &raw_ap).logits))
}

/// One NMS pick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsPick {
    pub index: usize,
    /// Renormalized over the selected set.
    pub probability: f64,
    /// Added after the suppression pass ran out of survivors.
    pub backfilled: bool,
}

/// Greedy endpoint NMS: take the most probable unsuppressed candidate,
/// suppress everything ending within `radius` of it, repeat up to `k` picks.
/// Short selections are backfilled with the most probable suppressed
/// candidates. Probabilities are renormalized over the selection.
pub fn select_paths_nms(endpoints: &[Vec2], probabilities: &[f64], k: usize, radius: f64) -> Vec<NmsPick> {
    assert_eq!(endpoints.len(), probabilities.len());
    let mut order: Vec<usize> = (0..endpoints.len()).collect();
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
    let mut suppressed = vec![false; endpoints.len()];
    let mut picks: Vec<(usize, bool)> = Vec::with_capacity(k);
    for &i in &order {
        if picks.len() == k {
            break;
        }
        if suppressed[i] {
            continue;
        }
        picks.push((i, false));
        for &j in &order {
            if !suppressed[j] && j != i && endpoints[j].distance(endpoints[i]) < radius {
                suppressed[j] = true;
            }
        }
    }
    for &i in &order {
        if picks.len() == k {
            break;
        }
        if suppressed[i] && !picks.iter().any(|&(p, _)| p == i) {
            picks.push((i, true));
        }
    }
    let total: f64 = picks.iter().map(|&(i, _)| probabilities[i]).sum();
    picks
        .into_iter()
        .map(|(index, backfilled)| NmsPick {
            index,
            probability: if total > 0.0 {
                probabilities[index] / total
            } else {
                0.0
            },
            backfilled,
        })
        .collect()
}

/// Frenet-frame decoding: outputs are `(ds_t, d_t)` pairs with
/// `s_t = s_0 + sum(ds)`.
pub fn decode_frenet(
    params: &ModelParams,
    agent: &AgentFeature,
    path_feat: &[f64],
    history: &FrenetHistory,
) -> FrenetTrajectory {
    let out = params
        .regressor
        .forward(&concat(&[&agent.values, path_feat, &history.encoded]));
    frenet_from_output(&out, history.current_s())
}

pub(crate) fn frenet_from_output(out: &[f64], s0: f64) -> FrenetTrajectory {
    let mut s = s0;
    let states = out
        .chunks_exact(2)
        .map(|c| {
            s += c[0];
            FrenetState::new(s, c[1])
        })
        .collect();
    FrenetTrajectory { states }
}

/// Cumulative agent-frame increments to world coordinates.
pub(crate) fn cartesian_from_increments(frame: &AgentFrame, out: &[f64]) -> Vec<Vec2> {
    let mut local = Vec2::ZERO;
    out.chunks_exact(2)
        .map(|c| {
            local += Vec2::new(c[0], c[1]);
            frame.to_world(local)
        })
        .collect()
}

/// Multimodal regression over `F_a`.
pub fn decode_path_free(params: &ModelParams, agent: &AgentFeature, k: usize) -> PredictionSet {
    let out = params.path_free.forward(&agent.values);
    let modes = params.config.num_modes;
    let t2 = 2 * params.config.horizon;
    let logits = &out[modes * t2..];
    let probs = softmax(logits);
    let mut set = PredictionSet {
        agent_id: 0,
        trajectories: (0..modes)
            .map(|m| cartesian_from_increments(&agent.frame, &out[m * t2..(m + 1) * t2]))
            .collect(),
        probabilities: probs,
        mode_paths: vec![None; modes],
        path_free: true,
    };
    if k < modes {
        let keep: Vec<usize> = set.ranked_modes().into_iter().take(k).collect();
        let total: f64 = keep.iter().map(|&i| set.probabilities[i]).sum();
        set.trajectories = keep.iter().map(|&i| set.trajectories[i].clone()).collect();
        set.probabilities = keep.iter().map(|&i| set.probabilities[i] / total).collect();
        set.mode_paths = vec![None; keep.len()];
    }
    set
}

/// Probability that the agent should use the path-free decoder.
pub fn select_decoder(params: &ModelParams, agent: &AgentFeature) -> f64 {
    sigmoid(params.selector.forward(&agent.values)[0])
}

/// Full pipeline for one agent.
pub fn predict(
    params: &ModelParams,
    scene: &Scene,
    agent_id: i64,
    config: &PredictConfig,
) -> Result<PredictionSet, PredictError> {
    let track = scene
        .agent(agent_id)
        .ok_or(PredictError::UnknownAgent(agent_id))?;
    let agent = encode_agent_in_map(&track.history, scene.dt, &scene.map)?;
    let mut out = predict_encoded(params, scene, track, &agent, config)?;
    out.agent_id = agent_id;
    Ok(out)
}

fn predict_encoded(
    params: &ModelParams,
    scene: &Scene,
    track: &crate::scene::AgentTrack,
    agent: &AgentFeature,
    config: &PredictConfig,
) -> Result<PredictionSet, PredictError> {
    let k = config.k;
    if params.kind == DecoderKind::MultimodalRegression {
        return Ok(decode_path_free(params, agent, k));
    }
    let horizon = params.config.horizon;
    let mut cands = candidates_for_agent(&scene.map, track, scene.dt, horizon, &config.sampler);
    cands.gt_index = None;
    if cands.paths.is_empty() || select_decoder(params, agent) > config.selector_threshold {
        return Ok(decode_path_free(params, agent, k));
    }
    let frame = agent.frame;
    let (raw_p, raw_ap) = candidate_raw_features(params.kind, &frame, &cands.paths);
    let scored = score_candidates(params, agent, &raw_p, &raw_ap);
    let probs = softmax(&scored.logits);

    let mut trajectories = Vec::new();
    let mut probabilities = Vec::new();
    let mut mode_paths = Vec::new();
    match params.kind {
        DecoderKind::GoalBased => {
            let goals = goal_set(&cands.paths);
            let endpoints: Vec<Vec2> = goals.goals.iter().map(|g| g.0).collect();
            for pick in select_paths_nms(&endpoints, &probs, k, config.nms_radius_m) {
                let goal_local = frame.to_local(goals.goals[pick.index].0) / POSITION_SCALE;
                let input = concat(&[
                    &agent.values,
                    &scored.path_feats[pick.index],
                    &[goal_local.x, goal_local.y],
                ]);
                let outv = params.regressor.forward(&input);
                trajectories.push(cartesian_from_increments(&frame, &outv));
                probabilities.push(pick.probability);
                mode_paths.push(Some(cands.paths[goals.representative[pick.index]].clone()));
            }
        }
        DecoderKind::Pbp | DecoderKind::PbpCartesian => {
            let endpoints: Vec<Vec2> = cands.paths.iter().map(|p| p.end()).collect();
            for pick in select_paths_nms(&endpoints, &probs, k, config.nms_radius_m) {
                let path = &cands.paths[pick.index];
                let traj = if params.kind == DecoderKind::Pbp {
                    let hist = frenet_history(&track.history, path)?;
                    let fr = decode_frenet(params, agent, &scored.path_feats[pick.index], &hist);
                    fr.states
                        .iter()
                        .map(|&st| frenet_to_cartesian(path, st))
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    let input = concat(&[
                        &agent.values,
                        &scored.path_feats[pick.index],
                        &scored.ap_feats[pick.index],
                    ]);
                    cartesian_from_increments(&frame, &params.regressor.forward(&input))
                };
                trajectories.push(traj);
                probabilities.push(pick.probability);
                mode_paths.push(Some(path.clone()));
            }
        }
        DecoderKind::MultimodalRegression => unreachable!(),
    }
    Ok(PredictionSet {
        agent_id: track.id,
        trajectories,
        probabilities,
        mode_paths,
        path_free: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn softmax_of_one_logit() {
        assert_eq!(softmax(&[3.7]), vec![1.0]);
    }

    #[test]
    fn sigmoid_range() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(30.0) < 1.0 && sigmoid(-30.0) > 0.0);
    }

    #[test]
    fn nms_identical_endpoints_suppressed() {
        let e = [Vec2::new(10.0, 0.0), Vec2::new(10.0, 0.0)];
        let picks = select_paths_nms(&e, &[0.6, 0.4], 1, 2.0);
        assert_eq!(picks.len(), 1);
        assert_eq!(picks[0].index, 0);
        assert_eq!(picks[0].probability, 1.0);
    }

    #[test]
    fn nms_backfills_when_short() {
        let e = [Vec2::new(10.0, 0.0), Vec2::new(10.5, 0.0), Vec2::new(30.0, 0.0)];
        let picks = select_paths_nms(&e, &[0.5, 0.3, 0.2], 3, 2.0);
        let idx: Vec<usize> = picks.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 2, 1]);
        assert!(picks[2].backfilled && !picks[0].backfilled && !picks[1].backfilled);
        let total: f64 = picks.iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nms_far_apart_is_top_k() {
        let e: Vec<Vec2> = (0..5).map(|i| Vec2::new(10.0 * i as f64, 0.0)).collect();
        let p = [0.1, 0.3, 0.05, 0.35, 0.2];
        let idx: Vec<usize> = select_paths_nms(&e, &p, 3, 2.0).iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![3, 1, 4]);
    }

    #[test]
    fn zero_path_free_head_collapses_at_agent() {
        let params = ModelParams::zeros(DecoderKind::Pbp, ModelConfig::default());
        let hist: Vec<Vec2> = (0..20).map(|i| Vec2::new(i as f64, 2.0)).collect();
        let agent = crate::features::encode_agent(&hist, 0.1).unwrap();
        let set = decode_path_free(&params, &agent, 6);
        assert_eq!(set.num_modes(), 6);
        for traj in &set.trajectories {
            assert_eq!(traj.len(), 30);
            assert!(traj.iter().all(|&p| p.distance(Vec2::new(19.0, 2.0)) < 1e-12));
        }
        assert!(set.probabilities.iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
        assert_eq!(select_decoder(&params, &agent), 0.5);
    }

    #[test]
    fn zero_regressor_holds_position() {
        let params = ModelParams::zeros(DecoderKind::Pbp, ModelConfig::default());
        let path = ReferencePath::from_polyline(vec![Vec2::ZERO, Vec2::new(60.0, 0.0)]).unwrap();
        let hist: Vec<Vec2> = (0..20).map(|i| Vec2::new(i as f64, 0.5)).collect();
        let agent = crate::features::encode_agent(&hist, 0.1).unwrap();
        let fh = frenet_history(&hist, &path).unwrap();
        let out = decode_frenet(&params, &agent, &[0.0; 16], &fh);
        assert_eq!(out.len(), 30);
        assert!(out.states.iter().all(|s| s.s == 19.0 && s.d == 0.0));
    }
}
