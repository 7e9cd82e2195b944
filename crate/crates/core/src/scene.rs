//! Scenario container and its JSON file format.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Polygon, Vec2};
use crate::lane_graph::{LaneGraph, LaneSegment, MapError, SegmentId};

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scenario parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("scenario read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid map: {0}")]
    Map(#[from] MapError),
    #[error("agent {0}: history is empty or contains non-finite coordinates")]
    BadTrack(i64),
    #[error("agent {0}: duplicate id")]
    DuplicateAgent(i64),
    #[error("focal agent {0} is not present in the agent list")]
    MissingFocal(i64),
    #[error("dt must be positive and finite, got {0}")]
    BadDt(f64),
}

/// Observed history and optional ground-truth future of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub id: i64,
    pub history: Vec<Vec2>,
    pub future: Option<Vec<Vec2>>,
}

impl AgentTrack {
    pub fn current_position(&self) -> Vec2 {
        *self.history.last().expect("validated track has history")
    }
}

/// One prediction scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub map: LaneGraph,
    pub agents: Vec<AgentTrack>,
    pub focal_agent_id: i64,
    pub dt: f64,
}

impl Scene {
    pub fn new(
        map: LaneGraph,
        agents: Vec<AgentTrack>,
        focal_agent_id: i64,
        dt: f64,
    ) -> Result<Self, SceneError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SceneError::BadDt(dt));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &agents {
            if !seen.insert(a.id) {
                return Err(SceneError::DuplicateAgent(a.id));
            }
            let finite = a.history.iter().all(|p| p.is_finite())
                && a.future.iter().flatten().all(|p| p.is_finite());
            if a.history.is_empty() || !finite {
                return Err(SceneError::BadTrack(a.id));
            }
        }
        if !seen.contains(&focal_agent_id) {
            return Err(SceneError::MissingFocal(focal_agent_id));
        }
        Ok(Self {
            map,
            agents,
            focal_agent_id,
            dt,
        })
    }

    pub fn agent(&self, id: i64) -> Option<&AgentTrack> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn focal_agent(&self) -> &AgentTrack {
        self.agent(self.focal_agent_id)
            .expect("focal agent validated at construction")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ScenarioFile::from(self)).expect("scene serializes")
    }

    /// Rigidly transform the scene: `p -> rotate(p, theta) + offset`.
    pub fn transformed(&self, theta: f64, offset: Vec2) -> Self {
        let tf = |p: &Vec2| p.rotate(theta) + offset;
        Self {
            map: self.map.transformed(theta, offset),
            agents: self
                .agents
                .iter()
                .map(|a| AgentTrack {
                    id: a.id,
                    history: a.history.iter().map(tf).collect(),
                    future: a.future.as_ref().map(|f| f.iter().map(tf).collect()),
                })
                .collect(),
            focal_agent_id: self.focal_agent_id,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRecord {
    id: SegmentId,
    start: Vec2,
    end: Vec2,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapRecord {
    segments: Vec<SegmentRecord>,
    #[serde(default)]
    successors: BTreeMap<SegmentId, Vec<SegmentId>>,
    #[serde(default)]
    drivable_area: Vec<Polygon>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    map: MapRecord,
    agents: Vec<AgentTrack>,
    focal_agent_id: i64,
    #[serde(default = "default_dt")]
    dt: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl From<&Scene> for ScenarioFile {
    fn from(scene: &Scene) -> Self {
        ScenarioFile {
            map: MapRecord {
                segments: scene
                    .map
                    .segments()
                    .iter()
                    .map(|s| SegmentRecord {
                        id: s.id,
                        start: s.start,
                        end: s.end,
                    })
                    .collect(),
                successors: scene.map.successor_map().clone(),
                drivable_area: scene.map.drivable_area().to_vec(),
            },
            agents: scene.agents.clone(),
            focal_agent_id: scene.focal_agent_id,
            dt: scene.dt,
        }
    }
}

/// Parse and validate a scenario document.
pub fn load_scene<R: Read>(mut source: R) -> Result<Scene, SceneError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_scene(&bytes)
}

pub fn parse_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    let file: ScenarioFile = serde_json::from_slice(bytes).map_err(|e| SceneError::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let segments = file
        .map
        .segments
        .into_iter()
        .map(|s| LaneSegment::new(s.id, s.start, s.end))
        .collect::<Result<Vec<_>, _>>()?;
    let map = LaneGraph::new(segments, file.map.successors, file.map.drivable_area)?;
    Scene::new(map, file.agents, file.focal_agent_id, file.dt)
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in bytes.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += l.len() + 1;
    }
    bytes.len()
}
