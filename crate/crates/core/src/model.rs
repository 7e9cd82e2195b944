//! Model parameters for every decoder variant and the JSON checkpoint format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    AGENT_DIM, AGENT_GOAL_RAW_DIM, AGENT_PATH_RAW_DIM, FRENET_HISTORY_DIM, GOAL_RAW_DIM,
    PATH_RAW_DIM,
};
use crate::nn::{Linear, Mlp};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trajectory decoder variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// Path classification + Frenet-frame regression.
    Pbp,
    /// Path classification + agent-frame Cartesian regression.
    PbpCartesian,
    /// Endpoint-only goal classification + goal-conditioned Cartesian regression.
    GoalBased,
    /// Direct K-mode regression with winner-takes-all training.
    MultimodalRegression,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 4] = [
        DecoderKind::Pbp,
        DecoderKind::PbpCartesian,
        DecoderKind::GoalBased,
        DecoderKind::MultimodalRegression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Pbp => "pbp",
            DecoderKind::PbpCartesian => "pbp_cartesian",
            DecoderKind::GoalBased => "goal_based",
            DecoderKind::MultimodalRegression => "multimodal_regression",
        }
    }

    /// Uses candidate paths (or their goals) at all.
    pub fn uses_candidates(self) -> bool {
        self != DecoderKind::MultimodalRegression
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown decoder '{s}'"))
    }
}

/// Network sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub horizon: usize,
    pub num_modes: usize,
    pub hidden: usize,
    pub path_feature_dim: usize,
    pub agent_path_feature_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            num_modes: 6,
            hidden: 64,
            path_feature_dim: 16,
            agent_path_feature_dim: 16,
        }
    }
}

/// Weights of all heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: DecoderKind,
    pub config: ModelConfig,
    /// Path raw features (or goal raw features) to `F_p`.
    pub path_encoder: Mlp,
    /// Agent-path (or agent-goal) raw features to `F_ap`.
    pub agent_path_encoder: Mlp,
    /// `[F_a, F_p, F_ap]` to one logit.
    pub classifier: Mlp,
    /// Variant-specific conditioning to `2T` outputs.
    pub regressor: Mlp,
    /// `F_a` to `K` agent-frame trajectories followed by `K` mode logits.
    pub path_free: Mlp,
    /// `F_a` to the path-free selector logit.
    pub selector: Mlp,
}

pub const HEAD_NAMES: [&str; 6] = [
    "path_encoder",
    "agent_path_encoder",
    "classifier",
    "regressor",
    "path_free",
    "selector",
];

impl ModelParams {
    pub fn layer_sizes(kind: DecoderKind, c: &ModelConfig) -> [Vec<usize>; 6] {
        let h = c.hidden;
        let (p_in, ap_in) = match kind {
            DecoderKind::GoalBased => (GOAL_RAW_DIM, AGENT_GOAL_RAW_DIM),
            _ => (PATH_RAW_DIM, AGENT_PATH_RAW_DIM),
        };
        let pf = c.path_feature_dim;
        let apf = c.agent_path_feature_dim;
        let reg_in = match kind {
            DecoderKind::Pbp | DecoderKind::MultimodalRegression => {
                AGENT_DIM + pf + FRENET_HISTORY_DIM
            }
            DecoderKind::PbpCartesian => AGENT_DIM + pf + apf,
            DecoderKind::GoalBased => AGENT_DIM + pf + 2,
        };
        let t2 = 2 * c.horizon;
        [
            vec![p_in, h, h, pf],
            vec![ap_in, h, h, apf],
            vec![AGENT_DIM + pf + apf, h, h, 1],
            vec![reg_in, h, h, t2],
            vec![AGENT_DIM, h, h, c.num_modes * t2 + c.num_modes],
            vec![AGENT_DIM, h, h, 1],
        ]
    }

    /// Seeded random initialization.
    pub fn init(kind: DecoderKind, config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = Self::layer_sizes(kind, &config);
        let mut heads = sizes.iter().enumerate().map(|(i, s)| {
            // Output layers of the regression heads start small so initial
            // predictions sit near the current state.
            let scale = if i == 3 || i == 4 { 0.1 } else { 1.0 };
            Mlp::new(s, scale, &mut rng)
        });
        Self {
            kind,
            config,
            path_encoder: heads.next().unwrap(),
            agent_path_encoder: heads.next().unwrap(),
            classifier: heads.next().unwrap(),
            regressor: heads.next().unwrap(),
            path_free: heads.next().unwrap(),
            selector: heads.next().unwrap(),
        }
    }

    /// All-zero weights.
    pub fn zeros(kind: DecoderKind, config: ModelConfig) -> Self {
        let sizes = Self::layer_sizes(kind, &config);
        Self {
            kind,
            config,
            path_encoder: Mlp::zeros(&sizes[0]),
            agent_path_encoder: Mlp::zeros(&sizes[1]),
            classifier: Mlp::zeros(&sizes[2]),
            regressor: Mlp::zeros(&sizes[3]),
            path_free: Mlp::zeros(&sizes[4]),
            selector: Mlp::zeros(&sizes[5]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.config.clone())
    }

    pub fn heads(&self) -> [(&'static str, &Mlp); 6] {
        [
            (HEAD_NAMES[0], &self.path_encoder),
            (HEAD_NAMES[1], &self.agent_path_encoder),
            (HEAD_NAMES[2], &self.classifier),
            (HEAD_NAMES[3], &self.regressor),
            (HEAD_NAMES[4], &self.path_free),
            (HEAD_NAMES[5], &self.selector),
        ]
    }

    fn heads_mut(&mut self) -> [&mut Mlp; 6] {
        [
            &mut self.path_encoder,
            &mut self.agent_path_encoder,
            &mut self.classifier,
            &mut self.regressor,
            &mut self.path_free,
            &mut self.selector,
        ]
    }

    /// Every weight/bias buffer in a fixed order.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        self.heads().into_iter().flat_map(|(_, m)| m.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.heads_mut()
            .into_iter()
            .flat_map(|m| m.tensors_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.heads().iter().map(|(_, m)| m.num_params()).sum()
    }

    /// Name of the first head holding a non-finite value.
    pub fn first_non_finite_head(&self) -> Option<&'static str> {
        self.heads()
            .into_iter()
            .find(|(_, m)| m.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())))
            .map(|(n, _)| n)
    }

    pub fn to_json(&self) -> String {
        let heads = self
            .heads()
            .into_iter()
            .map(|(name, mlp)| {
                let weights = mlp
                    .layers
                    .iter()
                    .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
                    .collect();
                (
                    name.to_string(),
                    HeadRecord {
                        layer_sizes: mlp.sizes(),
                        weights,
                    },
                )
            })
            .collect();
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            decoder: self.kind,
            config: self.config.clone(),
            heads,
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        // Check the version before the full schema so old files get a clear error.
        let probe: VersionProbe =
            serde_json::from_str(text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        if probe.format_version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: probe.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        let sizes = Self::layer_sizes(file.decoder, &file.config);
        let mut params = Self::zeros(file.decoder, file.config.clone());
        for (i, head) in params.heads_mut().into_iter().enumerate() {
            let name = HEAD_NAMES[i];
            let rec = file
                .heads
                .get(name)
                .ok_or_else(|| CheckpointError::MissingHead(name.to_string()))?;
            if rec.layer_sizes != sizes[i] {
                return Err(CheckpointError::Shape(name.to_string()));
            }
            let expected: usize = head.num_params();
            if rec.weights.len() != expected {
                return Err(CheckpointError::Shape(name.to_string()));
            }
            if rec.weights.iter().any(|v| !v.is_finite()) {
                return Err(CheckpointError::NonFinite(name.to_string()));
            }
            let mut it = rec.weights.iter().copied();
            for layer in head.layers.iter_mut() {
                let Linear { weight, bias, .. } = layer;
                weight.iter_mut().for_each(|w| *w = it.next().unwrap());
                bias.iter_mut().for_each(|b| *b = it.next().unwrap());
            }
        }
        Ok(params)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is missing head '{0}'")]
    MissingHead(String),
    #[error("checkpoint head '{0}' has inconsistent layer sizes")]
    Shape(String),
    #[error("checkpoint head '{0}' contains non-finite weights")]
    NonFinite(String),
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct HeadRecord {
    layer_sizes: Vec<usize>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    decoder: DecoderKind,
    config: ModelConfig,
    heads: BTreeMap<String, HeadRecord>,
}
