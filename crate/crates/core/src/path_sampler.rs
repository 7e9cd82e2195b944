//! Candidate reference paths: seed-lane selection, breadth-first path
//! enumeration over the lane graph and ground-truth path labeling.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::features::AgentFrame;
use crate::frenet::GeometryError;
use crate::geometry::{point_segment_distance, wrap_angle, Vec2};
use crate::lane_graph::{LaneGraph, SegmentId};
use crate::scene::AgentTrack;

/// Safety bound on BFS node expansions per call.
const MAX_EXPANSIONS: usize = 250_000;

/// An ordered chain of connected lane segments with its arc-length table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub segment_ids: Vec<SegmentId>,
    pub polyline: Vec<Vec2>,
    pub cum_arclength: Vec<f64>,
    // Miter normals at each polyline vertex; see `frenet`.
    pub(crate) vertex_normals: Vec<Vec2>,
}

impl ReferencePath {
    /// Concatenate the given segments; duplicate points at joins are dropped.
    pub fn from_segments(graph: &LaneGraph, ids: &[SegmentId]) -> Result<Self, GeometryError> {
        let mut points: Vec<Vec2> = Vec::with_capacity(ids.len() + 1);
        for &id in ids {
            let seg = graph.segment(id).ok_or(GeometryError::UnknownSegment(id))?;
            for p in [seg.start, seg.end] {
                if points.last().is_none_or(|q| q.distance(p) > 1e-9) {
                    points.push(p);
                }
            }
        }
        let mut path = Self::from_polyline(points)?;
        path.segment_ids = ids.to_vec();
        Ok(path)
    }

    /// A path over a bare polyline (no lane-graph segment ids).
    pub fn from_polyline(points: Vec<Vec2>) -> Result<Self, GeometryError> {
        let mut polyline: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite);
            }
            if polyline.last().is_none_or(|q| q.distance(p) > 1e-9) {
                polyline.push(p);
            }
        }
        if polyline.len() < 2 {
            return Err(GeometryError::DegeneratePath);
        }
        let mut cum_arclength = Vec::with_capacity(polyline.len());
        cum_arclength.push(0.0);
        for w in polyline.windows(2) {
            let last = *cum_arclength.last().unwrap();
            cum_arclength.push(last + w[0].distance(w[1]));
        }
        let vertex_normals = crate::frenet::miter_normals(&polyline);
        Ok(Self {
            segment_ids: Vec::new(),
            polyline,
            cum_arclength,
            vertex_normals,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cum_arclength.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.polyline[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.polyline.last().unwrap()
    }

    /// Unit direction of the final polyline piece.
    pub fn end_direction(&self) -> Vec2 {
        let n = self.polyline.len();
        (self.polyline[n - 1] - self.polyline[n - 2])
            .normalized()
            .unwrap_or(Vec2::new(1.0, 0.0))
    }

    /// Euclidean distance from `p` to the polyline.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// The same polyline traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut pts = self.polyline.clone();
        pts.reverse();
        let mut path = Self::from_polyline(pts).expect("valid path reverses to a valid path");
        path.segment_ids = self.segment_ids.iter().rev().copied().collect();
        path
    }

    /// Check that consecutive segments are linked in `graph`.
    pub fn is_connected_in(&self, graph: &LaneGraph) -> bool {
        self.segment_ids.iter().all(|&id| graph.segment(id).is_some())
            && self
                .segment_ids
                .windows(2)
                .all(|w| graph.is_successor(w[0], w[1]))
    }
}

/// Candidate reference paths for one agent plus training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub agent_id: i64,
    pub paths: Vec<ReferencePath>,
    pub gt_index: Option<usize>,
    pub is_path_free: bool,
}

/// Sampler parameters; field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub seed_radius_m: f64,
    pub seed_max_angle_deg: f64,
    pub path_min_len_m: f64,
    /// Fixed maximum path length. When absent the bound scales with speed:
    /// `1.5 * (speed * horizon + 10 m)`.
    pub path_max_len_m: Option<f64>,
    pub max_paths: usize,
    pub path_free_threshold_m: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed_radius_m: 10.0,
            seed_max_angle_deg: 60.0,
            path_min_len_m: 5.0,
            path_max_len_m: None,
            max_paths: 1024,
            path_free_threshold_m: 5.0,
        }
    }
}

impl SamplerConfig {
    pub fn max_length_for(&self, speed: f64, horizon_s: f64) -> f64 {
        self.path_max_len_m
            .unwrap_or_else(|| 1.5 * (speed * horizon_s + 10.0))
            .max(self.path_min_len_m)
    }
}

/// Segments near `position` whose direction is within `max_angle` of `heading`,
/// sorted by ascending distance (ties by id).
pub fn select_seed_segments(
    graph: &LaneGraph,
    position: Vec2,
    heading: f64,
    radius: f64,
    max_angle: f64,
) -> Vec<SegmentId> {
    let mut seeds: Vec<(f64, SegmentId)> = graph
        .segments()
        .iter()
        .filter_map(|seg| {
            let d = seg.distance_to(position);
            let delta = wrap_angle(seg.direction.angle() - heading).abs();
            (d <= radius && delta <= max_angle).then_some((d, seg.id))
        })
        .collect();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    seeds.into_iter().map(|(_, id)| id).collect()
}

/// Breadth-first enumeration of variable-length paths starting at each seed.
///
/// A path is emitted at every depth whose cumulative length lies in
/// `[min_length, max_length]`, and at dead ends (no successors) even when
/// shorter than `min_length`. Output is ordered shortest-first (ties keep
/// discovery order) and truncated to `max_paths`.
pub fn sample_candidate_paths(
    graph: &LaneGraph,
    seeds: &[SegmentId],
    min_length: f64,
    max_length: f64,
    max_paths: usize,
) -> Vec<ReferencePath> {
    let mut emitted: Vec<(f64, Vec<SegmentId>)> = Vec::new();
    let mut seen: HashSet<Vec<SegmentId>> = HashSet::new();
    let mut queue: VecDeque<(Vec<SegmentId>, f64)> = VecDeque::new();
    for &seed in seeds {
        if let Some(seg) = graph.segment(seed) {
            queue.push_back((vec![seed], seg.length()));
        }
    }
    let mut expansions = 0;
    while let Some((ids, length)) = queue.pop_front() {
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            break;
        }
        if length > max_length {
            continue;
        }
        let last = *ids.last().unwrap();
        let succ = graph.successors(last);
        let dead_end = succ.is_empty();
        if (length >= min_length || dead_end) && seen.insert(ids.clone()) {
            emitted.push((length, ids.clone()));
        }
        for &next in succ {
            if ids.contains(&next) {
                continue;
            }
            let next_len = length + graph.segment(next).map_or(0.0, |s| s.length());
            if next_len <= max_length {
                let mut ext = ids.clone();
                ext.push(next);
                queue.push_back((ext, next_len));
            }
        }
    }
    // Stable sort keeps discovery order among equal lengths.
    emitted.sort_by(|a, b| a.0.total_cmp(&b.0));
    emitted.truncate(max_paths);
    emitted
        .into_iter()
        .filter_map(|(_, ids)| ReferencePath::from_segments(graph, &ids).ok())
        .collect()
}

/// Cost used to pick the ground-truth path: mean waypoint-to-polyline distance
/// plus the distance between the trajectory endpoint and the path endpoint.
pub fn ground_truth_cost(path: &ReferencePath, future: &[Vec2]) -> f64 {
    let mean = future.iter().map(|&p| path.distance_to(p)).sum::<f64>() / future.len() as f64;
    let end = future.last().map_or(0.0, |&p| p.distance(path.end()));
    mean + end
}

/// Label the ground-truth path and decide whether the agent is path-free.
pub fn assign_ground_truth(
    paths: &[ReferencePath],
    future: &[Vec2],
    path_free_threshold: f64,
) -> (Option<usize>, bool) {
    if paths.is_empty() || future.is_empty() {
        return (None, true);
    }
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, path) in paths.iter().enumerate() {
        let c = ground_truth_cost(path, future);
        if c < best_cost {
            best = i;
            best_cost = c;
        }
    }
    let max_dev = future
        .iter()
        .map(|&p| paths[best].distance_to(p))
        .fold(0.0, f64::max);
    if max_dev > path_free_threshold {
        (None, true)
    } else {
        (Some(best), false)
    }
}

/// Seeds, BFS and (when a future is known) labels for one agent.
pub fn candidates_for_agent(
    graph: &LaneGraph,
    track: &AgentTrack,
    dt: f64,
    horizon_steps: usize,
    config: &SamplerConfig,
) -> CandidateSet {
    let frame = AgentFrame::from_history(&track.history, dt);
    let seeds = select_seed_segments(
        graph,
        frame.origin,
        frame.heading,
        config.seed_radius_m,
        config.seed_max_angle_deg.to_radians(),
    );
    let max_len = config.max_length_for(frame.speed, horizon_steps as f64 * dt);
    let paths = sample_candidate_paths(
        graph,
        &seeds,
        config.path_min_len_m,
        max_len,
        config.max_paths,
    );
    let (gt_index, is_path_free) = match &track.future {
        Some(future) => assign_ground_truth(&paths, future, config.path_free_threshold_m),
        None => (None, paths.is_empty()),
    };
    CandidateSet {
        agent_id: track.id,
        paths,
        gt_index,
        is_path_free,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane_graph::LaneSegment;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn chain(n: usize, len: f64) -> LaneGraph {
        let segs = (0..n)
            .map(|i| {
                LaneSegment::new(
                    i as i64,
                    Vec2::new(i as f64 * len, 0.0),
                    Vec2::new((i + 1) as f64 * len, 0.0),
                )
                .unwrap()
            })
            .collect();
        let succ: BTreeMap<_, _> = (0..n - 1).map(|i| (i as i64, vec![i as i64 + 1])).collect();
        LaneGraph::new(segs, succ, vec![]).unwrap()
    }

    #[test]
    fn chain_emits_every_length_in_range() {
        let g = chain(5, 10.0);
        let paths = sample_candidate_paths(&g, &[0], 20.0, 50.0, 1024);
        let lens: Vec<f64> = paths.iter().map(|p| p.length()).collect();
        assert_eq!(lens, vec![20.0, 30.0, 40.0, 50.0]);
        assert!(paths.iter().all(|p| p.is_connected_in(&g)));
    }

    #[test]
    fn truncation_keeps_shortest() {
        let g = chain(5, 10.0);
        let paths = sample_candidate_paths(&g, &[0], 20.0, 50.0, 2);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[1].segment_ids, vec![0, 1, 2]);
    }

    #[test]
    fn dead_end_shorter_than_min_is_emitted() {
        let g = chain(2, 10.0);
        let paths = sample_candidate_paths(&g, &[0], 50.0, 80.0, 1024);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].segment_ids, vec![0, 1]);
    }

    #[test]
    fn empty_seeds_empty_result() {
        assert!(sample_candidate_paths(&chain(3, 5.0), &[], 5.0, 50.0, 10).is_empty());
    }

    #[test]
    fn seeds_respect_heading() {
        let g = chain(5, 10.0);
        let along = select_seed_segments(&g, Vec2::new(15.0, 1.0), 0.0, 10.0, PI / 3.0);
        assert_eq!(along, vec![1, 0, 2]);
        let opposite = select_seed_segments(&g, Vec2::new(15.0, 1.0), PI, 10.0, PI / 3.0);
        assert!(opposite.is_empty());
    }

    #[test]
    fn polyline_joins_deduplicated() {
        let g = chain(3, 10.0);
        let p = ReferencePath::from_segments(&g, &[0, 1, 2]).unwrap();
        assert_eq!(p.polyline.len(), 4);
        assert_eq!(p.cum_arclength, vec![0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn future_on_path_is_labeled() {
        let g = chain(5, 10.0);
        let paths = sample_candidate_paths(&g, &[0], 20.0, 50.0, 1024);
        // Trace path 2 (0..40 m) exactly.
        let fut: Vec<Vec2> = (1..=30).map(|i| Vec2::new(i as f64 * 40.0 / 30.0, 0.0)).collect();
        assert_eq!(assign_ground_truth(&paths, &fut, 5.0), (Some(2), false));
    }

    #[test]
    fn perpendicular_future_is_path_free() {
        let g = chain(5, 10.0);
        let paths = sample_candidate_paths(&g, &[0], 20.0, 50.0, 1024);
        let fut: Vec<Vec2> = (1..=30).map(|i| Vec2::new(5.0, i as f64 * 20.0 / 30.0)).collect();
        assert_eq!(assign_ground_truth(&paths, &fut, 5.0), (None, true));
        assert_eq!(assign_ground_truth(&[], &fut, 5.0), (None, true));
    }
}
