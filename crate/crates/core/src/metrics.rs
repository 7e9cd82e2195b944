//! Best-of-K displacement metrics and map-compliance metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::lane_graph::{LaneGraph, MapError};
use crate::predictor::PredictionSet;

/// Miss threshold on final displacement.
pub const MISS_THRESHOLD_M: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory length mismatch: prediction has {found} waypoints, ground truth {expected}")]
    Shape { expected: usize, found: usize },
    #[error("metric undefined on an empty dataset")]
    Empty,
    #[error("prediction set has no modes")]
    NoModes,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Aggregate evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_samples: usize,
    pub min_ade: BTreeMap<usize, f64>,
    pub min_fde: BTreeMap<usize, f64>,
    pub miss_rate: BTreeMap<usize, f64>,
    pub offroad_rate: f64,
    pub offroad_by_horizon: Vec<f64>,
    pub lane_deviation: f64,
    pub dac: f64,
}

/// Indices of the `k` most probable modes (ties by lower index).
pub fn top_k_modes(preds: &PredictionSet, k: usize) -> Vec<usize> {
    let mut idx = preds.ranked_modes();
    idx.truncate(k);
    idx
}

fn check(preds: &PredictionSet, gt: &[Vec2]) -> Result<(), MetricsError> {
    if preds.trajectories.is_empty() {
        return Err(MetricsError::NoModes);
    }
    for t in &preds.trajectories {
        if t.len() != gt.len() {
            return Err(MetricsError::Shape {
                expected: gt.len(),
                found: t.len(),
            });
        }
    }
    if gt.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn ade(traj: &[Vec2], gt: &[Vec2]) -> f64 {
    traj.iter().zip(gt).map(|(a, b)| a.distance(*b)).sum::<f64>() / gt.len() as f64
}

fn fde(traj: &[Vec2], gt: &[Vec2]) -> f64 {
    traj[traj.len() - 1].distance(gt[gt.len() - 1])
}

/// Smallest mean displacement over the top-K modes.
pub fn min_ade(preds: &PredictionSet, gt: &[Vec2], k: usize) -> Result<f64, MetricsError> {
    check(preds, gt)?;
    Ok(top_k_modes(preds, k)
        .into_iter()
        .map(|m| ade(&preds.trajectories[m], gt))
        .fold(f64::INFINITY, f64::min))
}

/// Smallest final displacement over the top-K modes.
pub fn min_fde(preds: &PredictionSet, gt: &[Vec2], k: usize) -> Result<f64, MetricsError> {
    check(preds, gt)?;
    Ok(top_k_modes(preds, k)
        .into_iter()
        .map(|m| fde(&preds.trajectories[m], gt))
        .fold(f64::INFINITY, f64::min))
}

/// Fraction of samples whose top-K modes all end farther than `threshold`
/// from the ground-truth endpoint.
pub fn miss_rate(
    samples: &[(&PredictionSet, &[Vec2])],
    k: usize,
    threshold: f64,
) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut misses = 0usize;
    for (p, gt) in samples {
        if min_fde(p, gt, k)? > threshold {
            misses += 1;
        }
    }
    Ok(misses as f64 / samples.len() as f64)
}

/// Per-step offroad counts over every mode of one or more prediction sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OffroadCounts {
    pub offroad: Vec<usize>,
    pub total: Vec<usize>,
    /// Trajectories with no offroad waypoint.
    pub compliant_trajectories: usize,
    pub trajectories: usize,
}

impl OffroadCounts {
    pub fn add(&mut self, preds: &PredictionSet, map: &LaneGraph) {
        for traj in &preds.trajectories {
            if self.total.len() < traj.len() {
                self.total.resize(traj.len(), 0);
                self.offroad.resize(traj.len(), 0);
            }
            let mut clean = true;
            for (t, &p) in traj.iter().enumerate() {
                self.total[t] += 1;
                if !map.contains_point(p) {
                    self.offroad[t] += 1;
                    clean = false;
                }
            }
            self.trajectories += 1;
            if clean {
                self.compliant_trajectories += 1;
            }
        }
    }

    pub fn overall(&self) -> f64 {
        let n: usize = self.total.iter().sum();
        if n == 0 {
            return 0.0;
        }
        self.offroad.iter().sum::<usize>() as f64 / n as f64
    }

    pub fn by_horizon(&self) -> Vec<f64> {
        self.offroad
            .iter()
            .zip(&self.total)
            .map(|(&o, &n)| if n == 0 { 0.0 } else { o as f64 / n as f64 })
            .collect()
    }

    pub fn dac(&self) -> f64 {
        if self.trajectories == 0 {
            return 1.0;
        }
        self.compliant_trajectories as f64 / self.trajectories as f64
    }
}

/// Overall and per-step fraction of waypoints outside the drivable area,
/// over all modes.
pub fn offroad_rate(preds: &PredictionSet, map: &LaneGraph) -> (f64, Vec<f64>) {
    let mut c = OffroadCounts::default();
    c.add(preds, map);
    (c.overall(), c.by_horizon())
}

/// Mean distance from every waypoint of every mode to the nearest lane
/// centerline chord.
pub fn lane_deviation(preds: &PredictionSet, map: &LaneGraph) -> Result<f64, MetricsError> {
    let (sum, n) = lane_deviation_sum(preds, map)?;
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn lane_deviation_sum(preds: &PredictionSet, map: &LaneGraph) -> Result<(f64, usize), MetricsError> {
    let mut sum = 0.0;
    let mut n = 0;
    for traj in &preds.trajectories {
        for &p in traj {
            sum += map.nearest_segment(p)?.1;
            n += 1;
        }
    }
    Ok((sum, n))
}

/// Fraction of modes with no offroad waypoint.
pub fn dac(preds: &PredictionSet, map: &LaneGraph) -> f64 {
    let mut c = OffroadCounts::default();
    c.add(preds, map);
    c.dac()
}

/// One evaluated agent.
#[derive(Debug, Clone, Copy)]
pub struct EvalSample<'a> {
    pub prediction: &'a PredictionSet,
    pub ground_truth: &'a [Vec2],
    pub map: &'a LaneGraph,
}

/// Dataset-level report. Displacement metrics average over samples; map
/// metrics pool every waypoint of every mode.
pub fn evaluate(samples: &[EvalSample<'_>], ks: &[usize]) -> Result<MetricsReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = samples.len() as f64;
    let mut report = MetricsReport {
        num_samples: samples.len(),
        min_ade: BTreeMap::new(),
        min_fde: BTreeMap::new(),
        miss_rate: BTreeMap::new(),
        offroad_rate: 0.0,
        offroad_by_horizon: Vec::new(),
        lane_deviation: 0.0,
        dac: 0.0,
    };
    let pairs: Vec<(&PredictionSet, &[Vec2])> =
        samples.iter().map(|s| (s.prediction, s.ground_truth)).collect();
    for &k in ks {
        let mut ade_sum = 0.0;
        let mut fde_sum = 0.0;
        for (p, gt) in &pairs {
            ade_sum += min_ade(p, gt, k)?;
            fde_sum += min_fde(p, gt, k)?;
        }
        report.min_ade.insert(k, ade_sum / n);
        report.min_fde.insert(k, fde_sum / n);
        report.miss_rate.insert(k, miss_rate(&pairs, k, MISS_THRESHOLD_M)?);
    }
    let mut counts = OffroadCounts::default();
    let mut dev_sum = 0.0;
    let mut dev_n = 0;
    for s in samples {
        counts.add(s.prediction, s.map);
        let (sum, c) = lane_deviation_sum(s.prediction, s.map)?;
        dev_sum += sum;
        dev_n += c;
    }
    report.offroad_rate = counts.overall();
    report.offroad_by_horizon = counts.by_horizon();
    report.dac = counts.dac();
    report.lane_deviation = if dev_n == 0 { 0.0 } else { dev_sum / dev_n as f64 };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::lane_graph::LaneSegment;
    use std::collections::BTreeMap;

    fn set(trajs: Vec<Vec<Vec2>>) -> PredictionSet {
        let k = trajs.len();
        PredictionSet {
            agent_id: 0,
            probabilities: vec![1.0 / k as f64; k],
            mode_paths: vec![None; k],
            trajectories: trajs,
            path_free: false,
        }
    }

    fn line(n: usize, offset: Vec2) -> Vec<Vec2> {
        (0..n).map(|i| Vec2::new(i as f64, 0.0) + offset).collect()
    }

    fn road() -> LaneGraph {
        LaneGraph::new(
            vec![LaneSegment::new(1, Vec2::new(-10.0, 0.0), Vec2::new(100.0, 0.0)).unwrap()],
            BTreeMap::new(),
            vec![Polygon::rectangle(Vec2::new(-10.0, -2.0), Vec2::new(100.0, 2.0))],
        )
        .unwrap()
    }

    #[test]
    fn exact_mode_scores_zero() {
        let gt = line(30, Vec2::ZERO);
        let p = set(vec![line(30, Vec2::new(0.0, 5.0)), gt.clone()]);
        assert_eq!(min_ade(&p, &gt, 6).unwrap(), 0.0);
        assert_eq!(min_fde(&p, &gt, 6).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_ade() {
        let gt = line(30, Vec2::ZERO);
        let p = set(vec![line(30, Vec2::new(3.0, 4.0))]);
        assert!((min_ade(&p, &gt, 1).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn endpoint_fde() {
        let p = set(vec![vec![Vec2::ZERO]]);
        assert_eq!(min_fde(&p, &[Vec2::new(0.0, 2.0)], 1).unwrap(), 2.0);
    }

    #[test]
    fn shape_mismatch() {
        let p = set(vec![line(29, Vec2::ZERO)]);
        assert!(matches!(min_ade(&p, &line(30, Vec2::ZERO), 1), Err(MetricsError::Shape { .. })));
    }

    #[test]
    fn miss_rate_extremes() {
        let gt = line(30, Vec2::ZERO);
        let hit = set(vec![gt.clone()]);
        let miss = set(vec![line(30, Vec2::new(0.0, 3.0))]);
        assert_eq!(miss_rate(&[(&hit, &gt[..])], 6, 2.0).unwrap(), 0.0);
        assert_eq!(miss_rate(&[(&miss, &gt[..])], 6, 2.0).unwrap(), 1.0);
        assert_eq!(miss_rate(&[], 6, 2.0), Err(MetricsError::Empty));
    }

    #[test]
    fn one_offroad_mode_of_six() {
        let map = road();
        let mut trajs = vec![line(30, Vec2::ZERO); 5];
        trajs.push(line(30, Vec2::new(0.0, 10.0)));
        let p = set(trajs);
        let (overall, by_h) = offroad_rate(&p, &map);
        assert!((overall - 1.0 / 6.0).abs() < 1e-15);
        assert!(by_h.iter().all(|&r| (r - 1.0 / 6.0).abs() < 1e-15));
        assert!((dac(&p, &map) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_deviating_waypoint() {
        let map = road();
        let mut trajs = vec![line(30, Vec2::ZERO); 6];
        trajs[2][11].y = 0.386;
        let p = set(trajs);
        assert!((lane_deviation(&p, &map).unwrap() - 0.386 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_is_monotone_in_k() {
        let map = road();
        let gt = line(30, Vec2::ZERO);
        let mut p = set(vec![line(30, Vec2::new(0.0, 1.0)), line(30, Vec2::new(0.0, 0.5))]);
        p.probabilities = vec![0.7, 0.3];
        let s = [EvalSample {
            prediction: &p,
            ground_truth: &gt,
            map: &map,
        }];
        let r = evaluate(&s, &[1, 6]).unwrap();
        assert_eq!(r.min_ade[&1], 1.0);
        assert_eq!(r.min_ade[&6], 0.5);
        assert_eq!(r.offroad_rate, 0.0);
        assert_eq!(r.dac, 1.0);
    }
}
