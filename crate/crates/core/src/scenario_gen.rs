//! Deterministic synthetic scenes: lane networks with corridor drivable
//! areas, map-following agents and deliberately path-free agents.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::{frenet_to_cartesian, FrenetState};
use crate::geometry::{Polygon, Vec2};
use crate::lane_graph::{LaneGraph, LaneSegment, MapError, SegmentId};
use crate::path_sampler::{candidates_for_agent, ReferencePath, SamplerConfig};
use crate::scene::{AgentTrack, Scene, DEFAULT_DT};

pub const LANE_WIDTH: f64 = 3.5;
pub const HISTORY_LEN: usize = 20;
pub const FUTURE_LEN: usize = 30;
/// Attempts per scene before giving up on a label-consistent agent.
const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("unknown layout `{0}`")]
    InvalidLayout(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("could not generate a consistent agent for scene {0}")]
    Exhausted(usize),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Straight,
    Curve,
    Fork,
    Merge,
    Grid,
    LaneChange,
    /// Round-robin over the other layouts by scene index.
    Mixed,
}

impl Layout {
    pub const BASIC: [Layout; 6] = [
        Layout::Straight,
        Layout::Curve,
        Layout::Fork,
        Layout::Merge,
        Layout::Grid,
        Layout::LaneChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layout::Straight => "straight",
            Layout::Curve => "curve",
            Layout::Fork => "fork",
            Layout::Merge => "merge",
            Layout::Grid => "grid",
            Layout::LaneChange => "lane_change",
            Layout::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layout {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layout::BASIC
            .iter()
            .chain(&[Layout::Mixed])
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| GenError::InvalidLayout(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub layout: Layout,
    pub n_scenes: usize,
    pub speed_range: (f64, f64),
    pub lateral_noise_sigma: f64,
    pub path_free_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layout: Layout::Mixed,
            n_scenes: 100,
            speed_range: (5.0, 15.0),
            lateral_noise_sigma: 0.2,
            path_free_fraction: 0.0,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<(), GenError> {
        let (lo, hi) = self.speed_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(GenError::InvalidConfig(format!("speed_range ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.path_free_fraction) {
            return Err(GenError::InvalidConfig(format!(
                "path_free_fraction {}",
                self.path_free_fraction
            )));
        }
        if !(self.lateral_noise_sigma >= 0.0 && self.lateral_noise_sigma.is_finite()) {
            return Err(GenError::InvalidConfig(format!(
                "lateral_noise_sigma {}",
                self.lateral_noise_sigma
            )));
        }
        if self.n_scenes == 0 {
            return Err(GenError::InvalidConfig("n_scenes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Whether scene `i` gets a path-free focal agent. Spreads exactly
/// `floor(n * fraction)` path-free scenes evenly over the corpus.
pub fn is_path_free_slot(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

/// Layout used for scene `i`.
pub fn layout_for(layout: Layout, i: usize) -> Layout {
    match layout {
        Layout::Mixed => Layout::BASIC[i % Layout::BASIC.len()],
        l => l,
    }
}

/// Generate `n_scenes` scenes. Every focal agent's label under the default
/// sampler matches its intent (on-path or path-free).
pub fn generate(config: &GenConfig) -> Result<Vec<Scene>, GenError> {
    config.validate()?;
    let sampler = SamplerConfig::default();
    (0..config.n_scenes)
        .map(|i| generate_scene(config, i, &sampler))
        .collect()
}

/// Scene `i` of the corpus; independent of the other scenes.
pub fn generate_scene(config: &GenConfig, i: usize, sampler: &SamplerConfig) -> Result<Scene, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(i as u64);
    let layout = layout_for(config.layout, i);
    let path_free = is_path_free_slot(i, config.path_free_fraction);
    for _ in 0..MAX_ATTEMPTS {
        let (map, lanes) = build_layout(layout, &mut rng)?;
        let track = if path_free {
            path_free_track(&map, config, &mut rng)
        } else if layout == Layout::LaneChange {
            lane_change_track(&map, &lanes, config, &mut rng)
        } else {
            on_path_track(&map, config, &mut rng)
        };
        let Some(track) = track else { continue };
        let theta = rng.random_range(-PI..PI);
        let offset = Vec2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
        let scene = Scene::new(map, vec![track], 0, DEFAULT_DT)
            .expect("generated scene is valid")
            .transformed(theta, offset);
        let labels = candidates_for_agent(
            &scene.map,
            scene.focal_agent(),
            scene.dt,
            FUTURE_LEN,
            sampler,
        );
        if labels.is_path_free == path_free {
            return Ok(scene);
        }
    }
    Err(GenError::Exhausted(i))
}

/// Seeded shuffle then split; the first part holds `round(n * fraction)`
/// scenes.
pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((items.len() as f64) * train_fraction).round() as usize;
    let n_train = n_train.min(items.len());
    let train = idx[..n_train].iter().map(|&i| items[i].clone()).collect();
    let val = idx[n_train..].iter().map(|&i| items[i].clone()).collect();
    (train, val)
}

// ---------------------------------------------------------------------------
// Map construction

/// Evenly spaced points on a straight line; pieces no longer than `chord`.
pub fn straight_points(start: Vec2, heading: f64, length: f64, chord: f64) -> Vec<Vec2> {
    let n = (length / chord).ceil().max(1.0) as usize;
    let dir = Vec2::from_angle(heading);
    (0..=n).map(|k| start + dir * (length * k as f64 / n as f64)).collect()
}

/// Points on a circular arc starting at `start` with `heading`; positive
/// `turn` bends left. Pieces subtend equal angles with chords at most `chord`.
pub fn arc_points(start: Vec2, heading: f64, radius: f64, turn: f64, chord: f64) -> Vec<Vec2> {
    let n = (radius * turn.abs() / chord).ceil().max(1.0) as usize;
    let side = turn.signum();
    let center = start + Vec2::from_angle(heading + side * FRAC_PI_2) * radius;
    let a0 = heading - side * FRAC_PI_2;
    (0..=n)
        .map(|k| center + Vec2::from_angle(a0 + turn * k as f64 / n as f64) * radius)
        .collect()
}

/// Heading of the final piece of a point list.
fn end_heading(points: &[Vec2]) -> f64 {
    let n = points.len();
    (points[n - 1] - points[n - 2]).angle()
}

/// Continue a point list from its last point and heading.
fn extend_from(points: &mut Vec<Vec2>, next: impl FnOnce(Vec2, f64) -> Vec<Vec2>) {
    let more = next(*points.last().unwrap(), end_heading(points));
    points.extend(more.into_iter().skip(1));
}

/// Left/right corridor edges with mitered corners.
fn offset_edges(points: &[Vec2], half_width: f64) -> (Vec<Vec2>, Vec<Vec2>) {
    let n = points.len();
    let dirs: Vec<Vec2> = points
        .windows(2)
        .map(|w| (w[1] - w[0]).normalized().expect("distinct points"))
        .collect();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let normal = if i == 0 {
            dirs[0].perp()
        } else if i == n - 1 {
            dirs[n - 2].perp()
        } else {
            let a = dirs[i - 1].perp();
            let b = dirs[i].perp();
            let m = (a + b).normalized().unwrap_or(a);
            m / m.dot(a).max(0.5)
        };
        left.push(points[i] + normal * half_width);
        right.push(points[i] - normal * half_width);
    }
    (left, right)
}

#[derive(Debug, Default)]
struct MapBuilder {
    segments: Vec<LaneSegment>,
    successors: BTreeMap<SegmentId, Vec<SegmentId>>,
    polygons: Vec<Polygon>,
    next_lane: i64,
}

impl MapBuilder {
    /// Chain `points` into segments (ids `lane * 1000 + k`), optionally with a
    /// corridor polygon of one lane width around each piece.
    fn add_lane(&mut self, points: &[Vec2], corridor: bool) -> Vec<SegmentId> {
        let lane = self.next_lane;
        self.next_lane += 1;
        let ids: Vec<SegmentId> = points
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let id = lane * 1000 + k as i64;
                self.segments
                    .push(LaneSegment::new(id, w[0], w[1]).expect("generator emits distinct points"));
                id
            })
            .collect();
        for w in ids.windows(2) {
            self.connect(w[0], w[1]);
        }
        if corridor {
            let (left, right) = offset_edges(points, LANE_WIDTH / 2.0);
            for k in 0..points.len() - 1 {
                self.polygons.push(Polygon::new(vec![
                    right[k],
                    right[k + 1],
                    left[k + 1],
                    left[k],
                ]));
            }
        }
        ids
    }

    fn connect(&mut self, from: SegmentId, to: SegmentId) {
        self.successors.entry(from).or_default().push(to);
    }

    fn build(self) -> Result<LaneGraph, MapError> {
        LaneGraph::new(self.segments, self.successors, self.polygons)
    }
}

/// Parallel straight lanes along +x, lane `k` at `y = k * LANE_WIDTH`.
pub fn straight_highway(lanes: usize, segments_per_lane: usize, chord: f64) -> LaneGraph {
    let mut b = MapBuilder::default();
    for k in 0..lanes {
        let start = Vec2::new(0.0, k as f64 * LANE_WIDTH);
        b.add_lane(&straight_points(start, 0.0, chord * segments_per_lane as f64, chord), true);
    }
    b.build().expect("highway is valid")
}

/// Lanes as segment-id lists, used by layouts whose agents need to know
/// lane membership.
type Lanes = Vec<Vec<SegmentId>>;

fn build_layout<R: Rng>(layout: Layout, rng: &mut R) -> Result<(LaneGraph, Lanes), GenError> {
    let mut b = MapBuilder::default();
    let mut lanes = Vec::new();
    match layout {
        Layout::Straight | Layout::LaneChange => {
            let n = if layout == Layout::LaneChange {
                rng.random_range(2..=3)
            } else {
                rng.random_range(1..=3)
            };
            for k in 0..n {
                let start = Vec2::new(0.0, k as f64 * LANE_WIDTH);
                lanes.push(b.add_lane(&straight_points(start, 0.0, 150.0, 5.0), true));
            }
        }
        Layout::Curve => {
            let radius = rng.random_range(25.0..60.0);
            let turn = rng.random_range(45f64..120.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let n = rng.random_range(1..=2);
            for k in 0..n {
                // Concentric lanes: lane k sits k lane widths to the right.
                let lateral = -(k as f64) * LANE_WIDTH;
                let r = radius - turn.signum() * lateral;
                let mut pts = straight_points(Vec2::new(0.0, lateral), 0.0, 40.0, 5.0);
                extend_from(&mut pts, |p, h| arc_points(p, h, r, turn, 2.5));
                extend_from(&mut pts, |p, h| straight_points(p, h, 50.0, 5.0));
                lanes.push(b.add_lane(&pts, true));
            }
        }
        Layout::Fork => {
            let stem = b.add_lane(&straight_points(Vec2::ZERO, 0.0, 60.0, 5.0), true);
            let split = Vec2::new(60.0, 0.0);
            let main = b.add_lane(&straight_points(split, 0.0, 80.0, 5.0), true);
            let turn = rng.random_range(30f64..60.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut pts = arc_points(split, 0.0, rng.random_range(30.0..50.0), turn, 2.5);
            extend_from(&mut pts, |p, h| straight_points(p, h, 60.0, 5.0));
            let branch = b.add_lane(&pts, true);
            b.connect(*stem.last().unwrap(), main[0]);
            b.connect(*stem.last().unwrap(), branch[0]);
            lanes.extend([stem, main, branch]);
        }
        Layout::Merge => {
            let main = b.add_lane(&straight_points(Vec2::ZERO, 0.0, 150.0, 5.0), true);
            let merge_at = Vec2::new(70.0, 0.0);
            // Built backwards from the merge point, then reversed.
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let bend = rng.random_range(20f64..40.0).to_radians();
            let mut back = arc_points(merge_at, PI, rng.random_range(30.0..60.0), -side * bend, 2.5);
            extend_from(&mut back, |p, h| straight_points(p, h, 40.0, 5.0));
            back.reverse();
            let ramp = b.add_lane(&back, true);
            let k = main
                .iter()
                .position(|&id| id % 1000 == 14)
                .expect("main lane has a vertex at the merge point");
            b.connect(*ramp.last().unwrap(), main[k]);
            lanes.extend([main, ramp]);
        }
        Layout::Grid => {
            lanes = build_grid(&mut b, 3, 50.0);
        }
        Layout::Mixed => unreachable!("resolved per scene"),
    }
    Ok((b.build()?, lanes))
}

/// Two-way street grid with `n x n` intersections. Each directed street
/// carries one lane on its right; intersections connect every incoming lane
/// to every outgoing lane except the U-turn.
fn build_grid(b: &mut MapBuilder, n: usize, spacing: f64) -> Lanes {
    const HALF_BOX: f64 = 5.0;
    let half_lane = LANE_WIDTH / 2.0;
    let node = |i: usize, j: usize| Vec2::new(i as f64 * spacing, j as f64 * spacing);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                edges.push(((i, j), (i + 1, j)));
            }
            if j + 1 < n {
                edges.push(((i, j), (i, j + 1)));
            }
        }
    }
    // Directed lanes keyed by (from node, to node).
    let mut lane_of: BTreeMap<((usize, usize), (usize, usize)), Vec<SegmentId>> = BTreeMap::new();
    let mut lanes = Vec::new();
    for &(a, c) in &edges {
        let (pa, pc) = (node(a.0, a.1), node(c.0, c.1));
        let u = (pc - pa).normalized().unwrap();
        let lo = pa + u * HALF_BOX;
        let hi = pc - u * HALF_BOX;
        b.polygons.push(Polygon::rectangle(
            Vec2::new(lo.x.min(hi.x), lo.y.min(hi.y)) - Vec2::new(u.y.abs(), u.x.abs()) * LANE_WIDTH,
            Vec2::new(lo.x.max(hi.x), lo.y.max(hi.y)) + Vec2::new(u.y.abs(), u.x.abs()) * LANE_WIDTH,
        ));
        for (from, to, p0, p1) in [(a, c, pa, pc), (c, a, pc, pa)] {
            let d = (p1 - p0).normalized().unwrap();
            let right = -d.perp();
            let start = p0 + d * HALF_BOX + right * half_lane;
            let ids = b.add_lane(
                &straight_points(start, d.angle(), spacing - 2.0 * HALF_BOX, 5.0),
                false,
            );
            lane_of.insert((from, to), ids.clone());
            lanes.push(ids);
        }
    }
    for i in 0..n {
        for j in 0..n {
            let center = node(i, j);
            b.polygons.push(Polygon::rectangle(
                center - Vec2::new(HALF_BOX, HALF_BOX),
                center + Vec2::new(HALF_BOX, HALF_BOX),
            ));
            let incoming: Vec<_> = lane_of.keys().filter(|k| k.1 == (i, j)).copied().collect();
            let outgoing: Vec<_> = lane_of.keys().filter(|k| k.0 == (i, j)).copied().collect();
            for &inc in &incoming {
                for &out in &outgoing {
                    if out.1 == inc.0 {
                        continue;
                    }
                    let in_ids = &lane_of[&inc];
                    let out_ids = &lane_of[&out];
                    let p_in = b.segments.iter().find(|s| s.id == *in_ids.last().unwrap()).unwrap().end;
                    let p_out = b.segments.iter().find(|s| s.id == out_ids[0]).unwrap().start;
                    let d_in = (center - node(inc.0 .0, inc.0 .1)).normalized().unwrap();
                    let d_out = (node(out.1 .0, out.1 .1) - center).normalized().unwrap();
                    let cross = d_in.cross(d_out);
                    let mut pts = if cross.abs() < 1e-9 {
                        straight_points(p_in, d_in.angle(), p_in.distance(p_out), 5.0)
                    } else {
                        let radius = if cross > 0.0 {
                            HALF_BOX + half_lane
                        } else {
                            HALF_BOX - half_lane
                        };
                        arc_points(p_in, d_in.angle(), radius, cross.signum() * FRAC_PI_2, 2.0)
                    };
                    *pts.last_mut().unwrap() = p_out;
                    let conn = b.add_lane(&pts, false);
                    b.connect(*in_ids.last().unwrap(), conn[0]);
                    b.connect(*conn.last().unwrap(), out_ids[0]);
                    lanes.push(conn);
                }
            }
        }
    }
    lanes
}

// ---------------------------------------------------------------------------
// Agents

fn sample_speed<R: Rng>(config: &GenConfig, rng: &mut R) -> f64 {
    let (lo, hi) = config.speed_range;
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn normal<R: Rng>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
    }
}

/// Smooth lateral deviation: a Gaussian constant offset plus a Gaussian
/// amplitude slow sinusoid.
fn lateral_profile<R: Rng>(sigma: f64, rng: &mut R) -> impl Fn(f64) -> f64 {
    let bias = normal(sigma, rng);
    let amp = normal(sigma, rng);
    let period = rng.random_range(3.0..6.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    move |t: f64| bias + amp * (2.0 * PI * t / period + phase).sin()
}

/// Random forward walk over successors, starting from an entry segment when
/// the map has any.
fn random_route<R: Rng>(map: &LaneGraph, min_len: f64, rng: &mut R) -> Option<ReferencePath> {
    let has_pred: std::collections::BTreeSet<SegmentId> =
        map.successor_map().values().flatten().copied().collect();
    let entries: Vec<SegmentId> = map
        .segments()
        .iter()
        .map(|s| s.id)
        .filter(|id| !has_pred.contains(id))
        .collect();
    let all: Vec<SegmentId> = map.segments().iter().map(|s| s.id).collect();
    let pool = if entries.is_empty() { &all } else { &entries };
    let mut ids = vec![*pool.choose(rng)?];
    let mut len = map.segment(ids[0])?.length();
    while len < min_len {
        let succ = map.successors(*ids.last().unwrap());
        let next = *succ.choose(rng)?;
        if ids.contains(&next) {
            return None;
        }
        len += map.segment(next)?.length();
        ids.push(next);
    }
    ReferencePath::from_segments(map, &ids).ok()
}

fn on_path_track<R: Rng>(map: &LaneGraph, config: &GenConfig, rng: &mut R) -> Option<AgentTrack> {
    let v = sample_speed(config, rng);
    let dt = DEFAULT_DT;
    let back = v * dt * (HISTORY_LEN - 1) as f64;
    let ahead = v * dt * FUTURE_LEN as f64;
    let route = random_route(map, back + ahead + rng.random_range(5.0..80.0), rng)?;
    let l = route.length();
    let lo = back + 1.0;
    let hi = l - ahead - 1.0;
    if hi <= lo {
        return None;
    }
    let s_now = rng.random_range(lo..hi);
    let lat = lateral_profile(config.lateral_noise_sigma, rng);
    let at = |k: i64| {
        let t = k as f64 * dt;
        frenet_to_cartesian(&route, FrenetState::new(s_now + v * t, lat(t))).ok()
    };
    let history = (-(HISTORY_LEN as i64 - 1)..=0).map(at).collect::<Option<Vec<_>>>()?;
    let future = (1..=FUTURE_LEN as i64).map(at).collect::<Option<Vec<_>>>()?;
    Some(AgentTrack {
        id: 0,
        history,
        future: Some(future),
    })
}

/// Mid-maneuver lane change on a multi-lane straight road: a half-cosine
/// lateral profile that completes within the prediction horizon.
fn lane_change_track<R: Rng>(
    map: &LaneGraph,
    lanes: &Lanes,
    config: &GenConfig,
    rng: &mut R,
) -> Option<AgentTrack> {
    let v = sample_speed(config, rng);
    let dt = DEFAULT_DT;
    let src = rng.random_range(0..lanes.len());
    let dst = if src == 0 {
        1
    } else if src + 1 == lanes.len() || rng.random_bool(0.5) {
        src - 1
    } else {
        src + 1
    };
    let y_src = map.segment(lanes[src][0])?.start.y;
    let y_dst = map.segment(lanes[dst][0])?.start.y;
    let duration = rng.random_range(3.0..4.0);
    let progress = rng.random_range(0.3..0.5);
    let t_start = -progress * duration;
    let back = v * dt * (HISTORY_LEN - 1) as f64;
    let ahead = v * dt * FUTURE_LEN as f64;
    let x_now = rng.random_range(back + 1.0..150.0 - ahead - 1.0);
    let lat = lateral_profile(config.lateral_noise_sigma, rng);
    let at = |k: i64| {
        let t = k as f64 * dt;
        let tau = ((t - t_start) / duration).clamp(0.0, 1.0);
        let blend = 0.5 * (1.0 - (PI * tau).cos());
        Vec2::new(x_now + v * t, y_src + (y_dst - y_src) * blend + lat(t))
    };
    Some(AgentTrack {
        id: 0,
        history: (-(HISTORY_LEN as i64 - 1)..=0).map(at).collect(),
        future: Some((1..=FUTURE_LEN as i64).map(at).collect()),
    })
}

/// Straight constant-velocity track leaving the lane at a steep angle.
fn path_free_track<R: Rng>(map: &LaneGraph, config: &GenConfig, rng: &mut R) -> Option<AgentTrack> {
    let seg = map.segments().choose(rng)?;
    let v = sample_speed(config, rng);
    let dt = DEFAULT_DT;
    let along = rng.random_range(0.0..1.0);
    let origin = seg.start.lerp(seg.end, along) + seg.direction.perp() * normal(0.5, rng);
    let offset = rng.random_range(45f64..80.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let dir = Vec2::from_angle(seg.direction.angle() + offset);
    let at = |k: i64| origin + dir * (v * k as f64 * dt);
    Some(AgentTrack {
        id: 0,
        history: (-(HISTORY_LEN as i64 - 1)..=0).map(at).collect(),
        future: Some((1..=FUTURE_LEN as i64).map(at).collect()),
    })
}
