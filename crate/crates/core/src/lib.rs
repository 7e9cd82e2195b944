//! Path-based trajectory prediction: candidate reference paths sampled from
//! a lane graph, a classifier over those paths, trajectory decoding in the
//! path-relative Frenet frame, and map-compliance evaluation.

pub mod ablation;
pub mod config;
pub mod features;
pub mod frenet;
pub mod geometry;
pub mod lane_graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod path_sampler;
pub mod plot;
pub mod predictor;
pub mod scenario_gen;
pub mod scene;
pub mod trainer;

pub use ablation::{evaluate_model, evaluate_predictions, predict_scenes, run_ablation, AblationConfig, EvalError};
pub use config::{EvalConfig, PipelineConfig};
pub use features::{encode_agent, encode_agent_in_map, AgentFeature, AgentFrame, FeatureError};
pub use frenet::{
    frenet_to_cartesian, project_to_frenet, trajectory_to_frenet, FrenetState, FrenetTrajectory,
    GeometryError,
};
pub use geometry::{Polygon, Vec2};
pub use lane_graph::{LaneGraph, LaneSegment, MapError, SegmentId};
pub use metrics::{evaluate, MetricsError, MetricsReport};
pub use model::{CheckpointError, DecoderKind, ModelConfig, ModelParams};
pub use path_sampler::{
    assign_ground_truth, candidates_for_agent, sample_candidate_paths, select_seed_segments,
    CandidateSet, ReferencePath, SamplerConfig,
};
pub use predictor::{
    classify_paths, decode_frenet, decode_path_free, predict, select_decoder, select_paths_nms,
    PredictConfig, PredictError, PredictionSet,
};
pub use scenario_gen::{generate, split, GenConfig, GenError, Layout};
pub use scene::{load_scene, parse_scene, AgentTrack, Scene, SceneError};
pub use trainer::{train, LossReport, TrainConfig, TrainError, TrainOutcome};
