//! Teacher-forced training of all heads with hand-written gradients and
//! AdamW.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{encode_agent_in_map, frenet_history, FeatureError, POSITION_SCALE};
use crate::frenet::{trajectory_to_frenet_extended, FrenetTrajectory, GeometryError};
use crate::model::{DecoderKind, ModelConfig, ModelParams};
use crate::path_sampler::{candidates_for_agent, SamplerConfig};
use crate::predictor::{candidate_raw_features, concat, goal_set, softmax};
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("trajectory length mismatch: {0} vs {1}")]
    Shape(usize, usize),
    #[error("no usable training examples")]
    EmptyDataset,
    #[error("non-finite loss in epoch {epoch} at head `{head}`")]
    NonFinite { epoch: usize, head: &'static str },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub decoder: DecoderKind,
    pub lambda_lateral: f64,
    pub lambda_cls: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            decoder: DecoderKind::Pbp,
            lambda_lateral: 1.0,
            lambda_cls: 1.0,
            learning_rate: 5e-4,
            weight_decay: 1e-4,
            epochs: 64,
            batch_size: 4,
            seed: 7,
            model: ModelConfig::default(),
        }
    }
}

/// Loss decomposition. Each term is averaged over the agents it applies to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub cls_loss: f64,
    pub reg_loss_s: f64,
    pub reg_loss_d: f64,
    pub selector_loss: f64,
    pub path_free_loss: f64,
    pub total: f64,
}

impl LossReport {
    /// Name of the head behind the first non-finite term.
    pub fn non_finite_head(&self) -> Option<&'static str> {
        [
            (self.cls_loss, "classifier"),
            (self.reg_loss_s, "regressor"),
            (self.reg_loss_d, "regressor"),
            (self.selector_loss, "selector"),
            (self.path_free_loss, "path_free"),
        ]
        .into_iter()
        .find(|(v, _)| !v.is_finite())
        .map(|(_, n)| n)
    }
}

/// Smooth-L1 with the transition at 1.
pub fn smooth_l1(x: f64, y: f64) -> f64 {
    let a = (x - y).abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

/// Derivative of [`smooth_l1`] with respect to `x`.
fn smooth_l1_grad(x: f64, y: f64) -> f64 {
    let r = x - y;
    r.clamp(-1.0, 1.0)
}

/// Sum over steps of smooth-L1 on `s` plus `lambda_lateral` times smooth-L1
/// on `d`.
pub fn regression_loss(
    pred: &FrenetTrajectory,
    gt: &FrenetTrajectory,
    lambda_lateral: f64,
) -> Result<f64, TrainError> {
    if pred.len() != gt.len() {
        return Err(TrainError::Shape(pred.len(), gt.len()));
    }
    Ok(pred
        .states
        .iter()
        .zip(&gt.states)
        .map(|(p, g)| smooth_l1(p.s, g.s) + lambda_lateral * smooth_l1(p.d, g.d))
        .sum())
}

/// Precomputed inputs and labels for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub agent: Vec<f64>,
    /// Raw path-encoder and agent-path-encoder inputs per candidate (per
    /// unique goal for the goal-based decoder).
    pub candidates: Vec<(Vec<f64>, Vec<f64>)>,
    pub gt_index: Option<usize>,
    pub is_path_free: bool,
    /// Fixed regressor conditioning: the Frenet history encoding or the
    /// scaled goal location. Empty when the regressor consumes `F_ap`.
    pub regressor_extra: Vec<f64>,
    /// Interleaved regression target: `(s_t, d_t)` on the gt path for the
    /// Frenet decoder, agent-frame `(x_t, y_t)` otherwise.
    pub target: Vec<f64>,
    /// Current arc length on the gt path.
    pub s0: f64,
    /// Interleaved agent-frame future positions.
    pub future_local: Vec<f64>,
}

/// Build examples for every agent with a known future. Returns the examples
/// and the number of agents skipped for lacking one.
pub fn prepare_examples(
    scenes: &[Scene],
    kind: DecoderKind,
    model: &ModelConfig,
    sampler: &SamplerConfig,
) -> Result<(Vec<TrainingExample>, usize), TrainError> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for scene in scenes {
        for track in &scene.agents {
            let Some(future) = &track.future else {
                skipped += 1;
                continue;
            };
            if future.len() != model.horizon {
                skipped += 1;
                continue;
            }
            let agent = encode_agent_in_map(&track.history, scene.dt, &scene.map)?;
            let frame = agent.frame;
            let future_local: Vec<f64> = future
                .iter()
                .flat_map(|&p| {
                    let l = frame.to_local(p);
                    [l.x, l.y]
                })
                .collect();
            let mut ex = TrainingExample {
                agent: agent.values,
                candidates: Vec::new(),
                gt_index: None,
                is_path_free: true,
                regressor_extra: Vec::new(),
                target: future_local.clone(),
                s0: 0.0,
                future_local,
            };
            if kind.uses_candidates() {
                let cands = candidates_for_agent(&scene.map, track, scene.dt, model.horizon, sampler);
                ex.is_path_free = cands.is_path_free;
                if let Some(gt) = cands.gt_index {
                    let (raw_p, raw_ap) = candidate_raw_features(kind, &frame, &cands.paths);
                    ex.candidates = raw_p.into_iter().zip(raw_ap).collect();
                    let path = &cands.paths[gt];
                    match kind {
                        DecoderKind::Pbp => {
                            let hist = frenet_history(&track.history, path)?;
                            ex.s0 = hist.current_s();
                            let fut = trajectory_to_frenet_extended(path, future, Some(ex.s0))?;
                            ex.target = fut.states.iter().flat_map(|s| [s.s, s.d]).collect();
                            ex.regressor_extra = hist.encoded;
                            ex.gt_index = Some(gt);
                        }
                        DecoderKind::GoalBased => {
                            let goals = goal_set(&cands.paths);
                            let g = goals.path_goal[gt];
                            let gl = frame.to_local(goals.goals[g].0) / POSITION_SCALE;
                            ex.regressor_extra = vec![gl.x, gl.y];
                            ex.gt_index = Some(g);
                        }
                        _ => ex.gt_index = Some(gt),
                    }
                }
            }
            out.push(ex);
        }
    }
    Ok((out, skipped))
}

/// Per-agent gradient multipliers for each loss term.
#[derive(Debug, Clone, Copy)]
struct Scales {
    cls: f64,
    reg: f64,
    sel: f64,
    pf: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct AgentLoss {
    cls: f64,
    reg_s: f64,
    reg_d: f64,
    sel: f64,
    pf: f64,
}

fn on_path(ex: &TrainingExample) -> bool {
    !ex.is_path_free && ex.gt_index.is_some()
}

/// Loss of one regression output against the target. `cumulative` lists
/// whether each channel is predicted as increments. Returns the two channel
/// losses and `dL/d(output)` (unscaled, lateral weight applied).
fn pair_regression(
    out: &[f64],
    target: &[f64],
    offsets: [f64; 2],
    cumulative: [bool; 2],
    lambda_lateral: f64,
) -> (f64, f64, Vec<f64>) {
    let t = out.len() / 2;
    let mut pred = vec![0.0; out.len()];
    for c in 0..2 {
        let mut acc = offsets[c];
        for k in 0..t {
            let v = out[2 * k + c];
            pred[2 * k + c] = if cumulative[c] {
                acc += v;
                acc
            } else {
                v
            };
        }
    }
    let mut ls = 0.0;
    let mut ld = 0.0;
    let mut gpred = vec![0.0; out.len()];
    for k in 0..t {
        ls += smooth_l1(pred[2 * k], target[2 * k]);
        ld += smooth_l1(pred[2 * k + 1], target[2 * k + 1]);
        gpred[2 * k] = smooth_l1_grad(pred[2 * k], target[2 * k]);
        gpred[2 * k + 1] = lambda_lateral * smooth_l1_grad(pred[2 * k + 1], target[2 * k + 1]);
    }
    let mut gout = gpred.clone();
    for c in 0..2 {
        if cumulative[c] {
            let mut run = 0.0;
            for k in (0..t).rev() {
                run += gpred[2 * k + c];
                gout[2 * k + c] = run;
            }
        }
    }
    (ls, ld, gout)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward pass for one agent; accumulates scaled gradients when `grads` is
/// given.
fn agent_loss(
    params: &ModelParams,
    ex: &TrainingExample,
    cfg: &TrainConfig,
    scales: Scales,
    mut grads: Option<&mut ModelParams>,
) -> AgentLoss {
    let mut loss = AgentLoss::default();
    let kind = params.kind;
    let train_path_free = kind == DecoderKind::MultimodalRegression || ex.is_path_free;

    if kind.uses_candidates() {
        let (sel_out, sel_cache) = params.selector.forward_cached(&ex.agent);
        let z = sel_out[0];
        let y = if ex.is_path_free { 1.0 } else { 0.0 };
        // BCE with logits: softplus(z) - y z
        loss.sel = z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        if let Some(g) = grads.as_deref_mut() {
            let dz = (crate::predictor::sigmoid(z) - y) * scales.sel;
            params.selector.backward(&sel_cache, &[dz], &mut g.selector);
        }
    }

    if kind.uses_candidates() && on_path(ex) {
        let gt = ex.gt_index.expect("on-path agent has a label");
        let n = ex.candidates.len();
        let mut p_caches = Vec::with_capacity(n);
        let mut ap_caches = Vec::with_capacity(n);
        let mut c_caches = Vec::with_capacity(n);
        let mut fps = Vec::with_capacity(n);
        let mut faps = Vec::with_capacity(n);
        let mut logits = Vec::with_capacity(n);
        for (rp, rap) in &ex.candidates {
            let (fp, pc) = params.path_encoder.forward_cached(rp);
            let (fap, apc) = params.agent_path_encoder.forward_cached(rap);
            let (l, cc) = params.classifier.forward_cached(&concat(&[&ex.agent, &fp, &fap]));
            logits.push(l[0]);
            fps.push(fp);
            faps.push(fap);
            p_caches.push(pc);
            ap_caches.push(apc);
            c_caches.push(cc);
        }
        loss.cls = log_sum_exp(&logits) - logits[gt];

        // Teacher forcing: the regressor only ever sees the gt candidate.
        let extra: &[f64] = if kind == DecoderKind::PbpCartesian {
            &faps[gt]
        } else {
            &ex.regressor_extra
        };
        let (out, r_cache) = params
            .regressor
            .forward_cached(&concat(&[&ex.agent, &fps[gt], extra]));
        let (offsets, cumulative) = if kind == DecoderKind::Pbp {
            ([ex.s0, 0.0], [true, false])
        } else {
            ([0.0, 0.0], [true, true])
        };
        let (ls, ld, gout) = pair_regression(&out, &ex.target, offsets, cumulative, cfg.lambda_lateral);
        loss.reg_s = ls;
        loss.reg_d = ld;

        if let Some(g) = grads.as_deref_mut() {
            let a = ex.agent.len();
            let pf_dim = fps[0].len();
            let probs = softmax(&logits);
            let mut g_fp: Vec<Vec<f64>> = vec![Vec::new(); n];
            let mut g_fap: Vec<Vec<f64>> = vec![Vec::new(); n];
            for i in 0..n {
                let dl = (probs[i] - if i == gt { 1.0 } else { 0.0 }) * scales.cls;
                let gin = params.classifier.backward(&c_caches[i], &[dl], &mut g.classifier);
                g_fp[i] = gin[a..a + pf_dim].to_vec();
                g_fap[i] = gin[a + pf_dim..].to_vec();
            }
            let gout: Vec<f64> = gout.iter().map(|v| v * scales.reg).collect();
            let gin = params.regressor.backward(&r_cache, &gout, &mut g.regressor);
            for (acc, v) in g_fp[gt].iter_mut().zip(&gin[a..a + pf_dim]) {
                *acc += v;
            }
            if kind == DecoderKind::PbpCartesian {
                for (acc, v) in g_fap[gt].iter_mut().zip(&gin[a + pf_dim..]) {
                    *acc += v;
                }
            }
            for i in 0..n {
                params.path_encoder.backward(&p_caches[i], &g_fp[i], &mut g.path_encoder);
                params
                    .agent_path_encoder
                    .backward(&ap_caches[i], &g_fap[i], &mut g.agent_path_encoder);
            }
        }
    }

    if train_path_free {
        let (out, cache) = params.path_free.forward_cached(&ex.agent);
        let modes = params.config.num_modes;
        let t2 = 2 * params.config.horizon;
        let logits = &out[modes * t2..];
        let fut = &ex.future_local;
        let (ex_end, ey_end) = (fut[t2 - 2], fut[t2 - 1]);
        // Winner by final displacement.
        let mut best = 0;
        let mut best_fde = f64::INFINITY;
        for m in 0..modes {
            let o = &out[m * t2..(m + 1) * t2];
            let (mut x, mut y) = (0.0, 0.0);
            for c in o.chunks_exact(2) {
                x += c[0];
                y += c[1];
            }
            let fde = ((x - ex_end).powi(2) + (y - ey_end).powi(2)).sqrt();
            if fde < best_fde {
                best_fde = fde;
                best = m;
            }
        }
        let (lx, ly, greg) = pair_regression(&out[best * t2..(best + 1) * t2], fut, [0.0; 2], [true, true], 1.0);
        let ce = log_sum_exp(logits) - logits[best];
        loss.pf = lx + ly + ce;
        if let Some(g) = grads.as_deref_mut() {
            let mut gout = vec![0.0; out.len()];
            for (dst, v) in gout[best * t2..(best + 1) * t2].iter_mut().zip(&greg) {
                *dst = v * scales.pf;
            }
            let probs = softmax(logits);
            for m in 0..modes {
                gout[modes * t2 + m] = (probs[m] - if m == best { 1.0 } else { 0.0 }) * scales.pf;
            }
            params.path_free.backward(&cache, &gout, &mut g.path_free);
        }
    }
    loss
}

fn batch_scales(batch: &[&TrainingExample], kind: DecoderKind, cfg: &TrainConfig) -> Scales {
    let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let n_all = batch.len();
    let n_on = batch.iter().filter(|e| on_path(e)).count();
    let n_pf = if kind == DecoderKind::MultimodalRegression {
        n_all
    } else {
        batch.iter().filter(|e| e.is_path_free).count()
    };
    Scales {
        cls: cfg.lambda_cls * inv(n_on),
        reg: inv(n_on),
        sel: if kind.uses_candidates() { inv(n_all) } else { 0.0 },
        pf: inv(n_pf),
    }
}

fn batch_loss(
    params: &ModelParams,
    batch: &[&TrainingExample],
    cfg: &TrainConfig,
    mut grads: Option<&mut ModelParams>,
) -> LossReport {
    let s = batch_scales(batch, params.kind, cfg);
    let mut r = LossReport::default();
    for ex in batch {
        let l = agent_loss(params, ex, cfg, s, grads.as_deref_mut());
        // s.reg is 1 / on-path count, the plain average weight
        r.cls_loss += l.cls * s.reg;
        r.reg_loss_s += l.reg_s * s.reg;
        r.reg_loss_d += l.reg_d * s.reg;
        r.selector_loss += l.sel * s.sel;
        r.path_free_loss += l.pf * s.pf;
    }
    r.total = cfg.lambda_cls * r.cls_loss
        + r.reg_loss_s
        + cfg.lambda_lateral * r.reg_loss_d
        + r.selector_loss
        + r.path_free_loss;
    r
}

/// Loss of one batch.
pub fn total_loss(batch: &[TrainingExample], params: &ModelParams, config: &TrainConfig) -> LossReport {
    let refs: Vec<&TrainingExample> = batch.iter().collect();
    batch_loss(params, &refs, config, None)
}

/// Loss of one batch and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    batch: &[TrainingExample],
    params: &ModelParams,
    config: &TrainConfig,
) -> (LossReport, ModelParams) {
    let refs: Vec<&TrainingExample> = batch.iter().collect();
    let mut grads = params.zeros_like();
    let r = batch_loss(params, &refs, config, Some(&mut grads));
    (r, grads)
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ModelParams, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * p[i]);
            }
        }
    }
}

/// Trained weights and the per-epoch loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<LossReport>,
    /// Agents without a usable future.
    pub skipped: usize,
}

/// Train from scenes.
pub fn train(
    scenes: &[Scene],
    sampler: &SamplerConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let (examples, skipped) = prepare_examples(scenes, config.decoder, &config.model, sampler)?;
    let mut out = train_examples(&examples, config)?;
    out.skipped = skipped;
    Ok(out)
}

/// Train from precomputed examples. Epoch reports average the per-batch
/// losses seen while optimizing, weighted by batch size.
pub fn train_examples(
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut params = ModelParams::init(config.decoder, config.model.clone(), config.seed);
    let mut opt = AdamW::new(&params, config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_BA7C);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let bs = config.batch_size.max(1);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossReport::default();
        for chunk in order.chunks(bs) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let mut grads = params.zeros_like();
            let r = batch_loss(&params, &batch, config, Some(&mut grads));
            if let Some(head) = r.non_finite_head() {
                return Err(TrainError::NonFinite { epoch, head });
            }
            let w = batch.len() as f64 / examples.len() as f64;
            acc.cls_loss += w * r.cls_loss;
            acc.reg_loss_s += w * r.reg_loss_s;
            acc.reg_loss_d += w * r.reg_loss_d;
            acc.selector_loss += w * r.selector_loss;
            acc.path_free_loss += w * r.path_free_loss;
            acc.total += w * r.total;
            opt.step(&mut params, &grads);
            if let Some(head) = params.first_non_finite_head() {
                return Err(TrainError::NonFinite { epoch, head });
            }
        }
        history.push(acc);
    }
    Ok(TrainOutcome {
        params,
        history,
        skipped: 0,
    })
}
