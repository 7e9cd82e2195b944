//! Path-relative Frenet coordinates `(s, d)` over piecewise-linear reference
//! paths.
//!
//! The lateral direction along segment `i` is the linear blend of miter
//! normals at its two vertices. Miter normals satisfy `N_j . n_{j-1} = 1` and
//! `N_j . n_j = 1`, so a constant-`d` curve is the parallel offset of the
//! polyline and `d` equals the signed perpendicular distance to the containing
//! segment's line. Blending removes the dead wedges that a per-segment normal
//! leaves on the outside of every polyline corner, which makes the
//! Cartesian -> Frenet -> Cartesian roundtrip exact inside the lane corridor.
//!
//! On straight runs the construction reduces to the classical closest-point
//! projection.

use thiserror::Error;

use crate::geometry::{point_segment_distance, Vec2};
use crate::lane_graph::SegmentId;
use crate::path_sampler::ReferencePath;

/// Maximum extrapolation past the path end in `frenet_to_cartesian`.
pub const MAX_EXTRAPOLATION_M: f64 = 20.0;

/// Slack for the monotonic-s prior in trajectory projection.
pub const BACKTRACK_SLACK_M: f64 = 1.0;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("reference path has zero length")]
    DegeneratePath,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("segment {0} not found in lane graph")]
    UnknownSegment(SegmentId),
    #[error("empty trajectory")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrenetState {
    /// Arc length along the path (m).
    pub s: f64,
    /// Signed lateral offset, positive to the left of the path direction (m).
    pub d: f64,
}

impl FrenetState {
    pub fn new(s: f64, d: f64) -> Self {
        Self { s, d }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrenetTrajectory {
    pub states: Vec<FrenetState>,
}

impl FrenetTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// How points outside `[0, L]` are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndMode {
    /// `s` clamps to the path ends; `d` is measured from the end point.
    Clamp,
    /// The first and last pieces extend as straight lines, so `s` may leave
    /// `[0, L]`. Used for history features and regression targets.
    Extend,
}

pub(crate) fn miter_normals(polyline: &[Vec2]) -> Vec<Vec2> {
    let n = polyline.len();
    let seg_normals: Vec<Vec2> = polyline
        .windows(2)
        .map(|w| (w[1] - w[0]).normalized().unwrap_or(Vec2::new(1.0, 0.0)).perp())
        .collect();
    let mut out = Vec::with_capacity(n);
    out.push(seg_normals[0]);
    for j in 1..n - 1 {
        let (a, b) = (seg_normals[j - 1], seg_normals[j]);
        let denom = 1.0 + a.dot(b);
        if denom > 0.2 {
            out.push((a + b) / denom);
        } else {
            // Hairpin: the miter would blow up; fall back to the bisector.
            out.push((a + b).normalized().unwrap_or(b));
        }
    }
    out.push(seg_normals[n - 2]);
    out
}

fn piece(path: &ReferencePath, i: usize) -> (Vec2, Vec2, f64) {
    let a = path.polyline[i];
    let b = path.polyline[i + 1];
    let len = path.cum_arclength[i + 1] - path.cum_arclength[i];
    (a, (b - a) / len, len)
}

/// Candidate `(s, d)` pairs for `p`, one per piece whose blended normal field
/// reaches it, plus the end-cap candidates.
fn candidates(path: &ReferencePath, p: Vec2, mode: EndMode) -> Vec<FrenetState> {
    let n_pieces = path.polyline.len() - 1;
    let mut out = Vec::new();
    for i in 0..n_pieces {
        let (a, t, len) = piece(path, i);
        let m = t.perp();
        let rel = p - a;
        let d = rel.dot(m);
        let n0 = path.vertex_normals[i];
        let n1 = path.vertex_normals[i + 1];
        let denom = len + d * (n1 - n0).dot(t);
        if denom <= 1e-9 * len {
            continue;
        }
        let u = (rel - n0 * d).dot(t) / denom;
        if (-1e-12..=1.0 + 1e-12).contains(&u) {
            let u = u.clamp(0.0, 1.0);
            out.push(FrenetState::new(path.cum_arclength[i] + u * len, d));
        }
    }
    // Before the start.
    let (a, t, _) = piece(path, 0);
    let along = (p - a).dot(t);
    if along < 0.0 {
        out.push(match mode {
            EndMode::Clamp => FrenetState::new(0.0, signed(t, p - a)),
            EndMode::Extend => FrenetState::new(along, (p - a).dot(t.perp())),
        });
    }
    // Past the end.
    let (_, t, _) = piece(path, n_pieces - 1);
    let end = path.end();
    let along = (p - end).dot(t);
    if along > 0.0 {
        let l = path.length();
        out.push(match mode {
            EndMode::Clamp => FrenetState::new(l, signed(t, p - end)),
            EndMode::Extend => FrenetState::new(l + along, (p - end).dot(t.perp())),
        });
    }
    out
}

fn signed(t: Vec2, offset: Vec2) -> f64 {
    let dist = offset.norm();
    if t.cross(offset) < 0.0 {
        -dist
    } else {
        dist
    }
}

fn pick(cands: impl Iterator<Item = FrenetState>) -> Option<FrenetState> {
    let mut best: Option<FrenetState> = None;
    for c in cands {
        best = match best {
            None => Some(c),
            Some(b) => {
                let (ca, ba) = (c.d.abs(), b.d.abs());
                if ca < ba - TIE_EPS || ((ca - ba).abs() <= TIE_EPS && c.s < b.s) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Closest point on the part of the polyline with arc length >= `s_min`.
fn closest_from(path: &ReferencePath, p: Vec2, s_min: f64) -> FrenetState {
    let mut best = (f64::INFINITY, FrenetState::default());
    for i in 0..path.polyline.len() - 1 {
        let (s0, s1) = (path.cum_arclength[i], path.cum_arclength[i + 1]);
        if s1 < s_min {
            continue;
        }
        let (a, t, len) = piece(path, i);
        let start = if s0 < s_min { a + t * (s_min - s0) } else { a };
        let b = path.polyline[i + 1];
        let (dist, u) = point_segment_distance(p, start, b);
        if dist < best.0 - TIE_EPS {
            let foot = start.lerp(b, u);
            let s = s0.max(s_min) + u * (s1 - s0.max(s_min));
            let _ = len;
            best = (dist, FrenetState::new(s, signed(t, p - foot)));
        }
    }
    best.1
}

fn project_with(
    path: &ReferencePath,
    point: Vec2,
    mode: EndMode,
    s_min: Option<f64>,
) -> Result<FrenetState, GeometryError> {
    if path.length() <= 0.0 {
        return Err(GeometryError::DegeneratePath);
    }
    if !point.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let floor = s_min.unwrap_or(f64::NEG_INFINITY);
    let cands = candidates(path, point, mode);
    if let Some(best) = pick(cands.into_iter().filter(|c| c.s >= floor)) {
        return Ok(best);
    }
    Ok(closest_from(path, point, floor.max(0.0).min(path.length())))
}

/// Frenet coordinates of a single point; `s` is clamped to `[0, L]`.
///
/// Among several admissible feet the one with the smallest `|d|` wins, ties
/// (within 1e-9) going to the smallest `s`.
pub fn project_to_frenet(path: &ReferencePath, point: Vec2) -> Result<FrenetState, GeometryError> {
    project_with(path, point, EndMode::Clamp, None)
}

/// As [`project_to_frenet`] but with the end pieces extended as lines.
pub fn project_to_frenet_extended(
    path: &ReferencePath,
    point: Vec2,
) -> Result<FrenetState, GeometryError> {
    project_with(path, point, EndMode::Extend, None)
}

/// Inverse transform `P = xi(s) + d * N(s)`.
///
/// `s < 0` clamps to the start; `s > L` extrapolates along the last piece,
/// capped at [`MAX_EXTRAPOLATION_M`] past the end.
pub fn frenet_to_cartesian(path: &ReferencePath, state: FrenetState) -> Result<Vec2, GeometryError> {
    let l = path.length();
    if l <= 0.0 {
        return Err(GeometryError::DegeneratePath);
    }
    if !state.s.is_finite() || !state.d.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let n_pieces = path.polyline.len() - 1;
    if state.s > l {
        let (_, t, _) = piece(path, n_pieces - 1);
        let extra = (state.s - l).min(MAX_EXTRAPOLATION_M);
        return Ok(path.end() + t * extra + t.perp() * state.d);
    }
    let s = state.s.max(0.0);
    // Lower piece at exact joins: first i with cum[i + 1] >= s.
    let i = path.cum_arclength[1..]
        .partition_point(|&c| c < s)
        .min(n_pieces - 1);
    let (a, t, len) = piece(path, i);
    let u = ((s - path.cum_arclength[i]) / len).clamp(0.0, 1.0);
    let normal = path.vertex_normals[i] * (1.0 - u) + path.vertex_normals[i + 1] * u;
    Ok(a + t * (u * len) + normal * state.d)
}

fn trajectory_with(
    path: &ReferencePath,
    trajectory: &[Vec2],
    mode: EndMode,
    start_s: Option<f64>,
) -> Result<FrenetTrajectory, GeometryError> {
    if trajectory.is_empty() {
        return Err(GeometryError::EmptyTrajectory);
    }
    let mut states = Vec::with_capacity(trajectory.len());
    let mut prev = start_s;
    for &p in trajectory {
        let st = project_with(path, p, mode, prev.map(|s| s - BACKTRACK_SLACK_M))?;
        prev = Some(st.s);
        states.push(st);
    }
    Ok(FrenetTrajectory { states })
}

/// Per-point projection with a monotonic-s prior: each point only considers
/// feet with `s >= previous s - 1 m`.
pub fn trajectory_to_frenet(
    path: &ReferencePath,
    trajectory: &[Vec2],
) -> Result<FrenetTrajectory, GeometryError> {
    trajectory_with(path, trajectory, EndMode::Clamp, None)
}

/// Extended-end variant, optionally continuing from a known previous `s`.
pub fn trajectory_to_frenet_extended(
    path: &ReferencePath,
    trajectory: &[Vec2],
    previous_s: Option<f64>,
) -> Result<FrenetTrajectory, GeometryError> {
    trajectory_with(path, trajectory, EndMode::Extend, previous_s)
}
