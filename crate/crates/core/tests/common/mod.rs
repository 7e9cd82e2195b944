//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use pbp_core::geometry::point_segment_distance;
use pbp_core::{LaneGraph, LaneSegment, Polygon, ReferencePath, SegmentId, Vec2};

pub fn graph(segs: &[(SegmentId, [f64; 2], [f64; 2])], succ: &[(SegmentId, &[SegmentId])]) -> LaneGraph {
    let segments = segs
        .iter()
        .map(|&(id, a, b)| LaneSegment::new(id, a.into(), b.into()).unwrap())
        .collect();
    let successors: BTreeMap<SegmentId, Vec<SegmentId>> =
        succ.iter().map(|&(k, v)| (k, v.to_vec())).collect();
    LaneGraph::new(segments, successors, vec![]).unwrap()
}

/// Five 10 m segments along +x, each the successor of the previous one.
pub fn chain() -> LaneGraph {
    let segs: Vec<_> = (0..5)
        .map(|i| (i as i64, [10.0 * i as f64, 0.0], [10.0 * (i + 1) as f64, 0.0]))
        .collect();
    graph(&segs, &[(0, &[1]), (1, &[2]), (2, &[3]), (3, &[4])])
}

/// Stem 0 splitting into a straight branch 1 -> 3 and a bent branch 2 -> 4.
pub fn y_fork() -> LaneGraph {
    graph(
        &[
            (0, [0.0, 0.0], [10.0, 0.0]),
            (1, [10.0, 0.0], [20.0, 0.0]),
            (2, [10.0, 0.0], [18.0, 6.0]),
            (3, [20.0, 0.0], [30.0, 0.0]),
            (4, [18.0, 6.0], [26.0, 12.0]),
        ],
        &[(0, &[1, 2]), (1, &[3]), (2, &[4])],
    )
}

/// 3 x 3 lattice of nodes 10 m apart with east (`100 + 10 i + j`) and north
/// (`200 + 10 i + j`) segments leaving node `(i, j)`.
pub fn lattice() -> LaneGraph {
    let mut segs = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let p = [10.0 * i as f64, 10.0 * j as f64];
            if i < 2 {
                segs.push((100 + 10 * i + j, p, [p[0] + 10.0, p[1]]));
            }
            if j < 2 {
                segs.push((200 + 10 * i + j, p, [p[0], p[1] + 10.0]));
            }
        }
    }
    let starts_at = |x: f64, y: f64| -> Vec<SegmentId> {
        segs.iter()
            .filter(|s| s.1 == [x, y])
            .map(|s| s.0)
            .collect()
    };
    let succ: Vec<(SegmentId, Vec<SegmentId>)> = segs
        .iter()
        .map(|s| (s.0, starts_at(s.2[0], s.2[1])))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    let succ_ref: Vec<(SegmentId, &[SegmentId])> = succ.iter().map(|(k, v)| (*k, v.as_slice())).collect();
    graph(&segs, &succ_ref)
}

/// Exhaustive nearest-segment scan with lowest-id tie-breaking.
pub fn brute_nearest(g: &LaneGraph, p: Vec2) -> (SegmentId, f64) {
    let mut best = (SegmentId::MAX, f64::INFINITY);
    for s in g.segments() {
        let d = point_segment_distance(p, s.start, s.end).0;
        if d < best.1 || (d == best.1 && s.id < best.0) {
            best = (s.id, d);
        }
    }
    best
}

/// Rasterized point-in-polygon: snaps the query to a 0.05 m grid cell center
/// and tests it with a winding-number count.
pub fn raster_contains(polys: &[Polygon], p: Vec2) -> bool {
    let res = 0.05;
    let q = Vec2::new(((p.x / res).floor() + 0.5) * res, ((p.y / res).floor() + 0.5) * res);
    polys.iter().any(|poly| winding(&poly.vertices, q) != 0)
}

fn winding(v: &[Vec2], p: Vec2) -> i32 {
    let mut w = 0;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        let side = (b - a).cross(p - a);
        if a.y <= p.y {
            if b.y > p.y && side > 0.0 {
                w += 1;
            }
        } else if b.y <= p.y && side < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Distance from `p` to the nearest polygon boundary.
pub fn boundary_distance(polys: &[Polygon], p: Vec2) -> f64 {
    polys
        .iter()
        .map(|poly| poly.boundary_distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Circular arc of `radius` through `angle` radians chained from chords of at
/// most `chord` meters, followed by nothing else.
pub fn arc_path(radius: f64, angle: f64, chord: f64) -> ReferencePath {
    let n = (radius * angle / chord).ceil() as usize;
    let pts = (0..=n)
        .map(|k| {
            let a = angle * k as f64 / n as f64;
            Vec2::new(radius * a.sin(), radius * (1.0 - a.cos()))
        })
        .collect();
    ReferencePath::from_polyline(pts).unwrap()
}

pub fn straight_path(len: f64, pieces: usize, heading: f64) -> ReferencePath {
    let dir = Vec2::from_angle(heading);
    let pts = (0..=pieces)
        .map(|k| dir * (len * k as f64 / pieces as f64))
        .collect();
    ReferencePath::from_polyline(pts).unwrap()
}
