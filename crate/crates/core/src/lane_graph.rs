//! Vectorized HD map: discretized lane segments, successor links and the
//! drivable area.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{point_segment_distance, Polygon, Vec2};

pub type SegmentId = i64;

/// Maximum gap between a segment's end and its successor's start.
pub const SUCCESSOR_GAP_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("segment {0}: zero-length or non-finite geometry")]
    DegenerateSegment(SegmentId),
    #[error("segment {0}: duplicate id")]
    DuplicateSegment(SegmentId),
    #[error("segment {from}: successor {to} does not exist")]
    DanglingSuccessor { from: SegmentId, to: SegmentId },
    #[error("successor list for unknown segment {0}")]
    UnknownPredecessor(SegmentId),
    #[error("segment {from}: successor {to} starts {gap:.3} m from its end (max 0.5 m)")]
    SuccessorGap {
        from: SegmentId,
        to: SegmentId,
        gap: f64,
    },
    #[error("drivable-area polygon {0} is not simple or has fewer than 3 vertices")]
    InvalidPolygon(usize),
    #[error("map has no lane segments")]
    EmptyMap,
}

/// A straight lane-centerline chord.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub id: SegmentId,
    pub start: Vec2,
    pub end: Vec2,
    pub direction: Vec2,
}

impl LaneSegment {
    pub fn new(id: SegmentId, start: Vec2, end: Vec2) -> Result<Self, MapError> {
        if !start.is_finite() || !end.is_finite() {
            return Err(MapError::DegenerateSegment(id));
        }
        let direction = (end - start)
            .normalized()
            .ok_or(MapError::DegenerateSegment(id))?;
        Ok(Self {
            id,
            start,
            end,
            direction,
        })
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn midpoint(&self) -> Vec2 {
        self.start.lerp(self.end, 0.5)
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        point_segment_distance(p, self.start, self.end).0
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let (_, t) = point_segment_distance(p, self.start, self.end);
        self.start.lerp(self.end, t)
    }
}

/// Directed graph of lane segments. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneGraph {
    // sorted by id
    segments: Vec<LaneSegment>,
    index: BTreeMap<SegmentId, usize>,
    successors: BTreeMap<SegmentId, Vec<SegmentId>>,
    drivable_area: Vec<Polygon>,
}

impl LaneGraph {
    /// Build and validate a graph.
    pub fn new(
        mut segments: Vec<LaneSegment>,
        successors: BTreeMap<SegmentId, Vec<SegmentId>>,
        drivable_area: Vec<Polygon>,
    ) -> Result<Self, MapError> {
        segments.sort_by_key(|s| s.id);
        let mut index = BTreeMap::new();
        for (i, seg) in segments.iter().enumerate() {
            if index.insert(seg.id, i).is_some() {
                return Err(MapError::DuplicateSegment(seg.id));
            }
        }
        let mut clean = BTreeMap::new();
        for (&from, tos) in &successors {
            let from_seg = match index.get(&from) {
                Some(&i) => &segments[i],
                None => return Err(MapError::UnknownPredecessor(from)),
            };
            let mut list: Vec<SegmentId> = Vec::with_capacity(tos.len());
            for &to in tos {
                let to_seg = match index.get(&to) {
                    Some(&i) => &segments[i],
                    None => return Err(MapError::DanglingSuccessor { from, to }),
                };
                let gap = from_seg.end.distance(to_seg.start);
                if gap > SUCCESSOR_GAP_TOLERANCE {
                    return Err(MapError::SuccessorGap { from, to, gap });
                }
                if !list.contains(&to) {
                    list.push(to);
                }
            }
            if !list.is_empty() {
                clean.insert(from, list);
            }
        }
        for (i, poly) in drivable_area.iter().enumerate() {
            if poly.vertices.len() < 3 || !poly.is_simple() {
                return Err(MapError::InvalidPolygon(i));
            }
        }
        Ok(Self {
            segments,
            index,
            successors: clean,
            drivable_area,
        })
    }

    /// Segments in ascending id order.
    pub fn segments(&self) -> &[LaneSegment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&LaneSegment> {
        self.index.get(&id).map(|&i| &self.segments[i])
    }

    pub fn successors(&self, id: SegmentId) -> &[SegmentId] {
        self.successors.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn successor_map(&self) -> &BTreeMap<SegmentId, Vec<SegmentId>> {
        &self.successors
    }

    pub fn drivable_area(&self) -> &[Polygon] {
        &self.drivable_area
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn is_successor(&self, from: SegmentId, to: SegmentId) -> bool {
        self.successors(from).contains(&to)
    }

    /// Closest segment to `point`; ties go to the lowest id.
    pub fn nearest_segment(&self, point: Vec2) -> Result<(SegmentId, f64), MapError> {
        let mut best: Option<(SegmentId, f64)> = None;
        for seg in &self.segments {
            let d = seg.distance_to(point);
            match best {
                Some((_, bd)) if d >= bd - 1e-12 => {}
                _ => best = Some((seg.id, d)),
            }
        }
        best.ok_or(MapError::EmptyMap)
    }

    /// Inside (or on the boundary of) any drivable-area polygon.
    pub fn contains_point(&self, point: Vec2) -> bool {
        self.drivable_area.iter().any(|poly| poly.contains(point))
    }

    /// Apply a rigid transform `p -> rotate(p, theta) + offset` to all geometry.
    pub fn transformed(&self, theta: f64, offset: Vec2) -> Self {
        let tf = |p: Vec2| p.rotate(theta) + offset;
        let segments = self
            .segments
            .iter()
            // Direction is recomputed from the moved endpoints so a
            // serialize/parse roundtrip reproduces it bit for bit.
            .map(|s| LaneSegment::new(s.id, tf(s.start), tf(s.end)).expect("rigid motion keeps length"))
            .collect();
        let drivable_area = self
            .drivable_area
            .iter()
            .map(|p| Polygon::new(p.vertices.iter().map(|&v| tf(v)).collect()))
            .collect();
        Self {
            segments,
            index: self.index.clone(),
            successors: self.successors.clone(),
            drivable_area,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: SegmentId, a: (f64, f64), b: (f64, f64)) -> LaneSegment {
        LaneSegment::new(id, Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)).unwrap()
    }

    #[test]
    fn zero_length_segment_rejected() {
        assert_eq!(
            LaneSegment::new(4, Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)),
            Err(MapError::DegenerateSegment(4))
        );
    }

    #[test]
    fn direction_is_unit() {
        let s = seg(0, (0.0, 0.0), (3.0, 4.0));
        assert!((s.direction.norm() - 1.0).abs() < 1e-9);
        assert!((s.length() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dangling_successor_rejected() {
        let mut succ = BTreeMap::new();
        succ.insert(0, vec![999]);
        let err = LaneGraph::new(vec![seg(0, (0.0, 0.0), (5.0, 0.0))], succ, vec![]).unwrap_err();
        assert_eq!(err, MapError::DanglingSuccessor { from: 0, to: 999 });
    }

    #[test]
    fn successor_gap_enforced() {
        let mut succ = BTreeMap::new();
        succ.insert(0, vec![1]);
        let ok = LaneGraph::new(
            vec![seg(0, (0.0, 0.0), (5.0, 0.0)), seg(1, (5.4, 0.0), (9.0, 0.0))],
            succ.clone(),
            vec![],
        );
        assert!(ok.is_ok());
        let err = LaneGraph::new(
            vec![seg(0, (0.0, 0.0), (5.0, 0.0)), seg(1, (5.6, 0.0), (9.0, 0.0))],
            succ,
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, MapError::SuccessorGap { from: 0, to: 1, .. }));
    }

    #[test]
    fn nearest_segment_midpoint_and_tie_break() {
        let g = LaneGraph::new(
            vec![
                seg(7, (0.0, 2.0), (10.0, 2.0)),
                seg(3, (0.0, -2.0), (10.0, -2.0)),
            ],
            BTreeMap::new(),
            vec![],
        )
        .unwrap();
        assert_eq!(g.nearest_segment(Vec2::new(5.0, 2.0)).unwrap(), (7, 0.0));
        let (id, d) = g.nearest_segment(Vec2::new(5.0, 0.0)).unwrap();
        assert_eq!(id, 3);
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_map_error() {
        let g = LaneGraph::new(vec![], BTreeMap::new(), vec![]).unwrap();
        assert_eq!(g.nearest_segment(Vec2::ZERO), Err(MapError::EmptyMap));
    }

    #[test]
    fn self_intersecting_drivable_area_rejected() {
        let bow = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]);
        let err = LaneGraph::new(vec![seg(0, (0.0, 0.0), (1.0, 0.0))], BTreeMap::new(), vec![bow])
            .unwrap_err();
        assert_eq!(err, MapError::InvalidPolygon(0));
    }

    #[test]
    fn contains_point_basic() {
        let g = LaneGraph::new(
            vec![seg(0, (0.0, 0.0), (10.0, 0.0))],
            BTreeMap::new(),
            vec![Polygon::rectangle(Vec2::new(0.0, -2.0), Vec2::new(10.0, 2.0))],
        )
        .unwrap();
        assert!(g.contains_point(Vec2::new(5.0, 0.0)));
        assert!(!g.contains_point(Vec2::new(1e6, 1e6)));
    }
}
