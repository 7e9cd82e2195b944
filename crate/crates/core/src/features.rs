//! Hand-crafted agent, path and agent-path raw features.
//!
//! Everything is expressed in the agent frame (origin at the current
//! position, x along the current heading), so features are invariant to
//! global translation and rotation of the scene apart from the explicit
//! heading sine/cosine channels.

use thiserror::Error;

use crate::frenet::{trajectory_to_frenet_extended, GeometryError};
use crate::geometry::{point_segment_distance, wrap_angle, Vec2};
use crate::lane_graph::LaneGraph;
use crate::path_sampler::ReferencePath;

/// History length T' used by the encoder (2 s at 10 Hz).
pub const HISTORY_STEPS: usize = 20;
/// Agent feature width.
pub const AGENT_DIM: usize = 48;
pub const PATH_RAW_DIM: usize = 19;
pub const AGENT_PATH_RAW_DIM: usize = 15;
pub const GOAL_RAW_DIM: usize = 4;
pub const AGENT_GOAL_RAW_DIM: usize = 5;
/// Frenet history input to the path-conditioned regressor.
pub const FRENET_HISTORY_DIM: usize = 2 * (HISTORY_STEPS - 1) + 2;

/// Coordinates are divided by this before entering a network.
pub const POSITION_SCALE: f64 = 20.0;

const STATIONARY_EPS: f64 = 0.01;
const DISPLACEMENT_CHANNELS: usize = 2 * (HISTORY_STEPS - 1);
const SPEED_CH: usize = DISPLACEMENT_CHANNELS;
const MAP_CH: usize = DISPLACEMENT_CHANNELS + 3;
const CONTEXT_RADIUS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("agent history has {0} points; at least 2 are required")]
    InsufficientHistory(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Agent-centric frame: origin at the current position, x along the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentFrame {
    pub origin: Vec2,
    pub heading: f64,
    /// Speed from the last displacement (m/s).
    pub speed: f64,
}

impl AgentFrame {
    /// Heading comes from the most recent displacement longer than 1 cm;
    /// fully stationary histories use heading 0.
    pub fn from_history(history: &[Vec2], dt: f64) -> Self {
        let origin = *history.last().unwrap_or(&Vec2::ZERO);
        let heading = history
            .windows(2)
            .rev()
            .map(|w| w[1] - w[0])
            .find(|d| d.norm() > STATIONARY_EPS)
            .map_or(0.0, Vec2::angle);
        let speed = match history {
            [.., a, b] => a.distance(*b) / dt,
            _ => 0.0,
        };
        Self {
            origin,
            heading,
            speed,
        }
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.origin).rotate(-self.heading)
    }

    pub fn vector_to_local(&self, v: Vec2) -> Vec2 {
        v.rotate(-self.heading)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.heading) + self.origin
    }
}

/// Fixed-width agent encoding `F_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentFeature {
    pub values: Vec<f64>,
    pub frame: AgentFrame,
}

/// Encode an agent from its history alone.
///
/// Layout: 19 heading-frame displacement pairs (oldest first, zero-padded
/// at the front for short histories), speed, heading sine, heading cosine,
/// then local map context channels (zero here; see [`encode_agent_in_map`]).
pub fn encode_agent(history: &[Vec2], dt: f64) -> Result<AgentFeature, FeatureError> {
    if history.len() < 2 {
        return Err(FeatureError::InsufficientHistory(history.len()));
    }
    let hist = &history[history.len().saturating_sub(HISTORY_STEPS)..];
    let frame = AgentFrame::from_history(hist, dt);
    let mut values = vec![0.0; AGENT_DIM];
    let disp: Vec<Vec2> = hist.windows(2).map(|w| frame.vector_to_local(w[1] - w[0])).collect();
    let offset = DISPLACEMENT_CHANNELS - 2 * disp.len();
    for (k, d) in disp.iter().enumerate() {
        values[offset + 2 * k] = d.x;
        values[offset + 2 * k + 1] = d.y;
    }
    values[SPEED_CH] = frame.speed;
    values[SPEED_CH + 1] = frame.heading.sin();
    values[SPEED_CH + 2] = frame.heading.cos();
    Ok(AgentFeature { values, frame })
}

/// [`encode_agent`] plus local lane context: distance to and alignment with
/// the nearest lane, whether the agent stands on the drivable area, and the
/// best heading alignment among lanes within 10 m.
pub fn encode_agent_in_map(
    history: &[Vec2],
    dt: f64,
    map: &LaneGraph,
) -> Result<AgentFeature, FeatureError> {
    let mut feat = encode_agent(history, dt)?;
    let frame = feat.frame;
    if let Ok((id, dist)) = map.nearest_segment(frame.origin) {
        let dir = map.segment(id).expect("nearest id exists").direction;
        let delta = wrap_angle(dir.angle() - frame.heading);
        feat.values[MAP_CH] = (dist / 5.0).min(4.0);
        feat.values[MAP_CH + 1] = delta.cos();
        feat.values[MAP_CH + 2] = delta.sin();
    } else {
        feat.values[MAP_CH] = 4.0;
    }
    feat.values[MAP_CH + 3] = if map.contains_point(frame.origin) { 1.0 } else { 0.0 };
    let best_align = map
        .segments()
        .iter()
        .filter(|s| s.distance_to(frame.origin) <= CONTEXT_RADIUS)
        .map(|s| wrap_angle(s.direction.angle() - frame.heading).abs())
        .fold(std::f64::consts::PI, f64::min);
    feat.values[MAP_CH + 4] = best_align / std::f64::consts::PI;
    Ok(feat)
}

fn pieces_of_interest(path: &ReferencePath) -> [(Vec2, Vec2); 3] {
    let n = path.polyline.len() - 1;
    let pick = |i: usize| (path.polyline[i], path.polyline[i + 1]);
    [pick(0), pick(n / 2), pick(n - 1)]
}

/// Start, middle and end pieces of the path: endpoints and direction in the
/// agent frame, plus total length.
pub fn path_raw_features(frame: &AgentFrame, path: &ReferencePath) -> Vec<f64> {
    let mut out = Vec::with_capacity(PATH_RAW_DIM);
    for (a, b) in pieces_of_interest(path) {
        let la = frame.to_local(a) / POSITION_SCALE;
        let lb = frame.to_local(b) / POSITION_SCALE;
        let dir = frame.vector_to_local((b - a).normalized().unwrap_or(Vec2::new(1.0, 0.0)));
        out.extend_from_slice(&[la.x, la.y, lb.x, lb.y, dir.x, dir.y]);
    }
    out.push(path.length() / POSITION_SCALE);
    out
}

/// Distance vectors and heading deltas from the agent to the start, middle
/// and end pieces.
pub fn agent_path_raw_features(frame: &AgentFrame, path: &ReferencePath) -> Vec<f64> {
    let mut out = Vec::with_capacity(AGENT_PATH_RAW_DIM);
    for (a, b) in pieces_of_interest(path) {
        let (dist, t) = point_segment_distance(frame.origin, a, b);
        let v = frame.vector_to_local(a.lerp(b, t) - frame.origin) / POSITION_SCALE;
        let delta = wrap_angle((b - a).angle() - frame.heading);
        out.extend_from_slice(&[v.x, v.y, dist / POSITION_SCALE, delta.sin(), delta.cos()]);
    }
    out
}

/// Goal endpoint location and lane direction in the agent frame.
pub fn goal_raw_features(frame: &AgentFrame, goal: Vec2, goal_dir: Vec2) -> Vec<f64> {
    let g = frame.to_local(goal) / POSITION_SCALE;
    let d = frame.vector_to_local(goal_dir);
    vec![g.x, g.y, d.x, d.y]
}

pub fn agent_goal_raw_features(frame: &AgentFrame, goal: Vec2, goal_dir: Vec2) -> Vec<f64> {
    let v = frame.vector_to_local(goal - frame.origin);
    let delta = wrap_angle(goal_dir.angle() - frame.heading);
    vec![
        v.x / POSITION_SCALE,
        v.y / POSITION_SCALE,
        v.norm() / POSITION_SCALE,
        delta.sin(),
        delta.cos(),
    ]
}

/// Agent history projected onto `path` and its regressor encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct FrenetHistory {
    /// Extended-end Frenet states of the (at most T') history points.
    pub states: Vec<crate::frenet::FrenetState>,
    /// Consecutive `(ds, dd)` deltas, the current `d` and the remaining path
    /// length beyond the agent.
    pub encoded: Vec<f64>,
}

impl FrenetHistory {
    pub fn current_s(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.s)
    }
}

pub fn frenet_history(history: &[Vec2], path: &ReferencePath) -> Result<FrenetHistory, FeatureError> {
    if history.len() < 2 {
        return Err(FeatureError::InsufficientHistory(history.len()));
    }
    let hist = &history[history.len().saturating_sub(HISTORY_STEPS)..];
    let states = trajectory_to_frenet_extended(path, hist, None)?.states;
    let mut encoded = vec![0.0; FRENET_HISTORY_DIM];
    let deltas = 2 * (states.len() - 1);
    let offset = 2 * (HISTORY_STEPS - 1) - deltas;
    for (k, w) in states.windows(2).enumerate() {
        encoded[offset + 2 * k] = w[1].s - w[0].s;
        encoded[offset + 2 * k + 1] = w[1].d - w[0].d;
    }
    let cur = states.last().expect("non-empty");
    encoded[FRENET_HISTORY_DIM - 2] = cur.d;
    encoded[FRENET_HISTORY_DIM - 1] = (path.length() - cur.s) / POSITION_SCALE;
    Ok(FrenetHistory { states, encoded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(step: Vec2, n: usize) -> Vec<Vec2> {
        (0..n).map(|i| step * i as f64).collect()
    }

    #[test]
    fn stationary_agent() {
        let f = encode_agent(&vec![Vec2::new(3.0, 4.0); 20], 0.1).unwrap();
        assert!(f.values[..DISPLACEMENT_CHANNELS].iter().all(|&v| v == 0.0));
        assert_eq!(f.values[SPEED_CH], 0.0);
        assert_eq!(f.frame.heading, 0.0);
    }

    #[test]
    fn constant_velocity_east() {
        let f = encode_agent(&track(Vec2::new(1.0, 0.0), 20), 0.1).unwrap();
        for k in 0..HISTORY_STEPS - 1 {
            assert!((f.values[2 * k] - 1.0).abs() < 1e-12);
            assert!(f.values[2 * k + 1].abs() < 1e-12);
        }
        assert!((f.values[SPEED_CH] - 10.0).abs() < 1e-9);
        assert!((f.values[SPEED_CH + 2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_invariant() {
        let h = track(Vec2::new(0.7, 0.3), 20);
        let moved: Vec<Vec2> = h.iter().map(|&p| p + Vec2::new(100.0, -50.0)).collect();
        let a = encode_agent(&h, 0.1).unwrap().values;
        let b = encode_agent(&moved, 0.1).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_changes_only_heading_channels() {
        let h = track(Vec2::new(0.7, 0.3), 20);
        let rot: Vec<Vec2> = h.iter().map(|&p| p.rotate(1.1)).collect();
        let a = encode_agent(&h, 0.1).unwrap().values;
        let b = encode_agent(&rot, 0.1).unwrap().values;
        for i in 0..=SPEED_CH {
            assert!((a[i] - b[i]).abs() < 1e-9, "channel {i}");
        }
    }

    #[test]
    fn short_history_rejected() {
        assert_eq!(
            encode_agent(&[Vec2::ZERO], 0.1).unwrap_err(),
            FeatureError::InsufficientHistory(1)
        );
    }

    #[test]
    fn short_history_zero_padded_at_front() {
        let f = encode_agent(&track(Vec2::new(1.0, 0.0), 3), 0.1).unwrap();
        assert!(f.values[..DISPLACEMENT_CHANNELS - 4].iter().all(|&v| v == 0.0));
        assert_eq!(f.values[DISPLACEMENT_CHANNELS - 4], 1.0);
    }
}
