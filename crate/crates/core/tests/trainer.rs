use pbp_core::features::{
    AGENT_DIM, AGENT_GOAL_RAW_DIM, AGENT_PATH_RAW_DIM, FRENET_HISTORY_DIM, GOAL_RAW_DIM,
    PATH_RAW_DIM,
};
use pbp_core::frenet::FrenetTrajectory;
use pbp_core::trainer::{
    loss_and_gradient, prepare_examples, regression_loss, smooth_l1, total_loss, train_examples,
    TrainingExample,
};
use pbp_core::{
    generate, train, DecoderKind, FrenetState, GenConfig, Layout, LossReport, ModelConfig,
    ModelParams, SamplerConfig, TrainConfig, TrainError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model() -> ModelConfig {
    ModelConfig {
        horizon: 4,
        num_modes: 3,
        hidden: 7,
        path_feature_dim: 5,
        agent_path_feature_dim: 4,
    }
}

fn cfg(kind: DecoderKind) -> TrainConfig {
    TrainConfig {
        decoder: kind,
        lambda_lateral: 0.7,
        lambda_cls: 1.3,
        model: small_model(),
        ..Default::default()
    }
}

fn randv(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Synthetic example with the right shapes for `kind`.
fn example(rng: &mut ChaCha8Rng, kind: DecoderKind, path_free: bool) -> TrainingExample {
    let t2 = 2 * small_model().horizon;
    let (p_in, ap_in) = if kind == DecoderKind::GoalBased {
        (GOAL_RAW_DIM, AGENT_GOAL_RAW_DIM)
    } else {
        (PATH_RAW_DIM, AGENT_PATH_RAW_DIM)
    };
    let n = rng.random_range(2..6);
    let future_local: Vec<f64> = (0..t2).map(|i| (i / 2) as f64 * 0.8 + rng.random_range(-0.5..0.5)).collect();
    let s0 = rng.random_range(0.0..5.0);
    let (extra, target) = match kind {
        DecoderKind::Pbp => (
            randv(rng, FRENET_HISTORY_DIM, 1.0),
            (0..t2)
                .map(|i| if i % 2 == 0 { s0 + (i / 2 + 1) as f64 * 0.9 } else { rng.random_range(-0.5..0.5) })
                .collect(),
        ),
        DecoderKind::GoalBased => (randv(rng, 2, 1.0), future_local.clone()),
        _ => (Vec::new(), future_local.clone()),
    };
    let uses = kind.uses_candidates();
    TrainingExample {
        agent: randv(rng, AGENT_DIM, 1.0),
        candidates: if uses && !path_free {
            (0..n).map(|_| (randv(rng, p_in, 1.0), randv(rng, ap_in, 1.0))).collect()
        } else {
            Vec::new()
        },
        gt_index: if uses && !path_free { Some(rng.random_range(0..n)) } else { None },
        is_path_free: uses && path_free || !uses,
        regressor_extra: extra,
        target,
        s0,
        future_local,
    }
}

fn batch(kind: DecoderKind, seed: u64, n: usize, pf_every: usize) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| example(&mut rng, kind, i % pf_every == pf_every - 1)).collect()
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn nll(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    -((logits[target] - m).exp() / z).ln()
}

/// Loss recomputed term by term from the heads' forward passes.
fn oracle(batch: &[TrainingExample], p: &ModelParams, c: &TrainConfig) -> LossReport {
    let t = p.config.horizon;
    let mut r = LossReport::default();
    let (mut n_on, mut n_pf) = (0usize, 0usize);
    for ex in batch {
        if p.kind.uses_candidates() {
            let z = p.selector.forward(&ex.agent)[0];
            let prob = 1.0 / (1.0 + (-z).exp());
            r.selector_loss -= if ex.is_path_free { prob.ln() } else { (1.0 - prob).ln() };
        }
        if let (Some(gt), false) = (ex.gt_index, ex.is_path_free) {
            n_on += 1;
            let fps: Vec<Vec<f64>> = ex.candidates.iter().map(|(a, _)| p.path_encoder.forward(a)).collect();
            let faps: Vec<Vec<f64>> = ex.candidates.iter().map(|(_, b)| p.agent_path_encoder.forward(b)).collect();
            let logits: Vec<f64> = (0..fps.len())
                .map(|i| p.classifier.forward(&cat(&[&ex.agent, &fps[i], &faps[i]]))[0])
                .collect();
            r.cls_loss += nll(&logits, gt);
            let extra = if p.kind == DecoderKind::PbpCartesian { &faps[gt] } else { &ex.regressor_extra };
            let out = p.regressor.forward(&cat(&[&ex.agent, &fps[gt], extra]));
            let (mut a, mut b) = (if p.kind == DecoderKind::Pbp { ex.s0 } else { 0.0 }, 0.0);
            let mut pred = Vec::new();
            for k in 0..t {
                a += out[2 * k];
                b = if p.kind == DecoderKind::Pbp { out[2 * k + 1] } else { b + out[2 * k + 1] };
                pred.push(FrenetState::new(a, b));
            }
            let gt_traj: Vec<FrenetState> = ex.target.chunks(2).map(|c| FrenetState::new(c[0], c[1])).collect();
            let ls = regression_loss(&FrenetTrajectory { states: pred.clone() }, &FrenetTrajectory { states: gt_traj.clone() }, 0.0).unwrap();
            let ld: f64 = pred.iter().zip(&gt_traj).map(|(x, y)| smooth_l1(x.d, y.d)).sum();
            r.reg_loss_s += ls;
            r.reg_loss_d += ld;
        }
        if ex.is_path_free || p.kind == DecoderKind::MultimodalRegression {
            n_pf += 1;
            let out = p.path_free.forward(&ex.agent);
            let m = p.config.num_modes;
            let trajs: Vec<Vec<(f64, f64)>> = (0..m)
                .map(|j| {
                    let mut acc = (0.0, 0.0);
                    out[j * 2 * t..(j + 1) * 2 * t]
                        .chunks(2)
                        .map(|c| {
                            acc = (acc.0 + c[0], acc.1 + c[1]);
                            acc
                        })
                        .collect()
                })
                .collect();
            let end = (ex.future_local[2 * t - 2], ex.future_local[2 * t - 1]);
            let fde = |tr: &Vec<(f64, f64)>| (tr[t - 1].0 - end.0).hypot(tr[t - 1].1 - end.1);
            let best = (0..m).fold(0, |b, j| if fde(&trajs[j]) < fde(&trajs[b]) { j } else { b });
            let reg: f64 = trajs[best]
                .iter()
                .enumerate()
                .map(|(k, q)| smooth_l1(q.0, ex.future_local[2 * k]) + smooth_l1(q.1, ex.future_local[2 * k + 1]))
                .sum();
            r.path_free_loss += reg + nll(&out[m * 2 * t..], best);
        }
    }
    let avg = |v: f64, n: usize| if n == 0 { 0.0 } else { v / n as f64 };
    r.cls_loss = avg(r.cls_loss, n_on);
    r.reg_loss_s = avg(r.reg_loss_s, n_on);
    r.reg_loss_d = avg(r.reg_loss_d, n_on);
    r.selector_loss = avg(r.selector_loss, batch.len());
    r.path_free_loss = avg(r.path_free_loss, n_pf);
    r.total = c.lambda_cls * r.cls_loss + r.reg_loss_s + c.lambda_lateral * r.reg_loss_d + r.selector_loss + r.path_free_loss;
    r
}

fn close(a: &LossReport, b: &LossReport, tol: f64) -> bool {
    [
        (a.cls_loss, b.cls_loss),
        (a.reg_loss_s, b.reg_loss_s),
        (a.reg_loss_d, b.reg_loss_d),
        (a.selector_loss, b.selector_loss),
        (a.path_free_loss, b.path_free_loss),
        (a.total, b.total),
    ]
    .iter()
    .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn loss_terms_match_oracle() {
    for (i, kind) in DecoderKind::ALL.into_iter().enumerate() {
        let c = cfg(kind);
        let params = ModelParams::init(kind, small_model(), 30 + i as u64);
        let b = batch(kind, 100 + i as u64, 7, 3);
        let got = total_loss(&b, &params, &c);
        let want = oracle(&b, &params, &c);
        assert!(close(&got, &want, 1e-9), "{kind:?}\n{got:?}\n{want:?}");
        if kind != DecoderKind::MultimodalRegression {
            assert!(got.cls_loss > 0.0 && got.selector_loss > 0.0 && got.path_free_loss > 0.0);
        }
    }
}

#[test]
fn path_free_only_batch_has_no_path_terms() {
    let kind = DecoderKind::Pbp;
    let b = batch(kind, 5, 4, 1);
    assert!(b.iter().all(|e| e.is_path_free));
    let r = total_loss(&b, &ModelParams::init(kind, small_model(), 1), &cfg(kind));
    assert_eq!((r.cls_loss, r.reg_loss_s, r.reg_loss_d), (0.0, 0.0, 0.0));
    assert!(r.path_free_loss > 0.0 && r.selector_loss > 0.0);
}

#[test]
fn gradient_matches_finite_differences() {
    let h = 1e-6;
    for (i, kind) in DecoderKind::ALL.into_iter().enumerate() {
        let c = cfg(kind);
        let params = ModelParams::init(kind, small_model(), 60 + i as u64);
        let b = batch(kind, 200 + i as u64, 5, 3);
        let (_, grads) = loss_and_gradient(&b, &params, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let n_tensors = params.tensors().len();
        let mut checked = 0;
        for ti in 0..n_tensors {
            let len = params.tensors()[ti].len();
            for _ in 0..6 {
                let j = rng.random_range(0..len);
                let mut plus = params.clone();
                plus.tensors_mut()[ti][j] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[ti][j] -= h;
                let fd = (total_loss(&b, &plus, &c).total - total_loss(&b, &minus, &c).total) / (2.0 * h);
                let an = grads.tensors()[ti][j];
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "{kind:?} tensor {ti} idx {j}: fd {fd} analytic {an}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 6 * 24);
    }
}

#[test]
fn regression_only_sees_the_gt_candidate() {
    for kind in [DecoderKind::Pbp, DecoderKind::PbpCartesian, DecoderKind::GoalBased] {
        let c = cfg(kind);
        let params = ModelParams::init(kind, small_model(), 3);
        let b = batch(kind, 77, 6, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut perturbed = b.clone();
        for ex in &mut perturbed {
            let gt = ex.gt_index.unwrap();
            for (i, (rp, rap)) in ex.candidates.iter_mut().enumerate() {
                if i != gt {
                    *rp = randv(&mut rng, rp.len(), 3.0);
                    *rap = randv(&mut rng, rap.len(), 3.0);
                }
            }
        }
        let a = total_loss(&b, &params, &c);
        let p = total_loss(&perturbed, &params, &c);
        assert_eq!((a.reg_loss_s, a.reg_loss_d), (p.reg_loss_s, p.reg_loss_d), "{kind:?}");
        assert_ne!(a.cls_loss, p.cls_loss);
    }
}

#[test]
fn loss_is_permutation_invariant() {
    let kind = DecoderKind::Pbp;
    let c = cfg(kind);
    let params = ModelParams::init(kind, small_model(), 4);
    let b = batch(kind, 9, 6, 3);
    let base = total_loss(&b, &params, &c);
    let mut shuffled = b.clone();
    shuffled.reverse();
    for ex in &mut shuffled {
        if let Some(gt) = ex.gt_index {
            let n = ex.candidates.len();
            ex.candidates.rotate_left(1);
            ex.gt_index = Some((gt + n - 1) % n);
        }
    }
    assert!(close(&total_loss(&shuffled, &params, &c), &base, 1e-12));
}

fn tiny_corpus() -> Vec<pbp_core::Scene> {
    generate(&GenConfig {
        n_scenes: 10,
        layout: Layout::Mixed,
        seed: 3,
        path_free_fraction: 0.2,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn training_is_deterministic_and_lr_zero_is_identity() {
    let scenes = tiny_corpus();
    let c = TrainConfig { epochs: 3, ..Default::default() };
    let a = train(&scenes, &SamplerConfig::default(), &c).unwrap();
    let b = train(&scenes, &SamplerConfig::default(), &c).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 3);

    let frozen = TrainConfig { learning_rate: 0.0, ..c };
    let z = train(&scenes, &SamplerConfig::default(), &frozen).unwrap();
    assert_eq!(z.params, ModelParams::init(frozen.decoder, frozen.model.clone(), frozen.seed));
}

#[test]
fn examples_cover_every_agent_with_a_future() {
    let scenes = tiny_corpus();
    let (ex, skipped) = prepare_examples(&scenes, DecoderKind::Pbp, &ModelConfig::default(), &SamplerConfig::default()).unwrap();
    let with_future: usize = scenes.iter().flat_map(|s| &s.agents).filter(|a| a.future.is_some()).count();
    assert_eq!(ex.len(), with_future);
    assert_eq!(skipped, scenes.iter().map(|s| s.agents.len()).sum::<usize>() - with_future);
    assert_eq!(ex.iter().filter(|e| e.is_path_free).count(), 2);
    for e in ex.iter().filter(|e| !e.is_path_free) {
        assert!(e.gt_index.unwrap() < e.candidates.len());
        assert_eq!(e.target.len(), 60);
        assert_eq!(e.regressor_extra.len(), FRENET_HISTORY_DIM);
    }
}

#[test]
fn non_finite_input_aborts_training() {
    let kind = DecoderKind::Pbp;
    let mut b = batch(kind, 1, 3, 100);
    b[1].agent[0] = f64::NAN;
    let err = train_examples(&b, &TrainConfig { epochs: 2, ..cfg(kind) }).unwrap_err();
    assert!(matches!(err, TrainError::NonFinite { epoch: 1, .. }), "{err:?}");
    assert_eq!(train_examples(&[], &cfg(kind)).unwrap_err(), TrainError::EmptyDataset);
}
