//! Recurrent action classifier with joint and temporal attention.
//!
//! Per frame, every joint's features are embedded, scored against the
//! previous hidden state, and pooled by a softmax over joints (joint
//! attention). The pooled vector drives a gated recurrent cell. Hidden states
//! are pooled by additive attention over frames (temporal attention) and the
//! pooled context is classified. Gradients are written out by hand in
//! [`backward`] and checked against central differences in [`gradcheck`].

mod backward;
mod checkpoint;
mod forward;
mod extended;
mod gradcheck;
mod train;

pub use backward::{loss_and_grad, penalized_loss, Penalty};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CKPT_TAG};
pub use forward::{forward, AttentionOutput};
pub use gradcheck::{grad_check, grad_check_instance, GradCheckInstance};
pub use train::{train, PenaltyProvider, TrainReport, Trainer};

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};
use crate::math::Mat;
use crate::rng::seeded;
use crate::skeleton::SkeletonSequence;

/// Per-joint input features: normalized position and scaled velocity.
pub const FEATURES: usize = 6;
const VELOCITY_GAIN: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden_size: usize,
    pub joint_embed_size: usize,
    pub attention_size: usize,
    pub class_count: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub grad_clip: f64,
    pub penalty_max: f64,
    pub penalty_ramp: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden_size: 64,
            joint_embed_size: 16,
            attention_size: 16,
            class_count: 5,
            learning_rate: 1e-2,
            epochs: 30,
            grad_clip: 5.0,
            penalty_max: 0.5,
            penalty_ramp: 100,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.hidden_size,
            self.joint_embed_size,
            self.attention_size,
            self.class_count,
        ];
        if sizes.contains(&0) {
            return Err(KifaError::Config("network sizes must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(KifaError::Config("learning_rate must be positive".into()));
        }
        if !(self.penalty_max >= 0.0) {
            return Err(KifaError::Config("penalty_max must be non-negative".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(KifaError::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }

    /// Penalty multiplier after `seen` samples of an action.
    pub fn penalty_weight(&self, seen: usize) -> f64 {
        if self.penalty_ramp == 0 {
            return self.penalty_max;
        }
        self.penalty_max * (seen as f64 / self.penalty_ramp as f64).min(1.0)
    }
}

/// All trainable tensors. Gradients reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub joint_count: usize,
    /// Shared joint feature projection, `E x FEATURES`.
    pub input_proj: Mat,
    /// Per-joint embedding offset, `J x E`.
    pub joint_embed: Mat,
    pub joint_att_embed: Mat,
    pub joint_att_hidden: Mat,
    pub joint_att_bias: Mat,
    pub joint_att_score: Mat,
    /// Gate order within the `4H` rows: input, forget, output, candidate.
    pub cell_input: Mat,
    pub cell_recurrent: Mat,
    pub cell_bias: Mat,
    pub temporal_att_hidden: Mat,
    pub temporal_att_bias: Mat,
    pub temporal_att_score: Mat,
    pub classifier: Mat,
    pub classifier_bias: Mat,
}

pub const TENSOR_NAMES: [&str; 14] = [
    "input_proj",
    "joint_embed",
    "joint_att_embed",
    "joint_att_hidden",
    "joint_att_bias",
    "joint_att_score",
    "cell_input",
    "cell_recurrent",
    "cell_bias",
    "temporal_att_hidden",
    "temporal_att_bias",
    "temporal_att_score",
    "classifier",
    "classifier_bias",
];

impl NetParams {
    /// Uniform initialization in `±1/√fan_in` from the config seed.
    pub fn init(config: &NetConfig, joint_count: usize) -> Result<Self> {
        config.validate()?;
        if joint_count == 0 {
            return Err(KifaError::Config("joint count must be at least 1".into()));
        }
        let (e, h, a, c) = (
            config.joint_embed_size,
            config.hidden_size,
            config.attention_size,
            config.class_count,
        );
        let mut rng = seeded(config.seed, 0x696e_6974);
        let mut u = |rows, cols, fan_in: usize| Mat::uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), &mut rng);
        Ok(NetParams {
            joint_count,
            input_proj: u(e, FEATURES, FEATURES),
            joint_embed: u(joint_count, e, FEATURES),
            joint_att_embed: u(a, e, e + h),
            joint_att_hidden: u(a, h, e + h),
            joint_att_bias: u(a, 1, e + h),
            joint_att_score: u(a, 1, a),
            cell_input: u(4 * h, e, e + h),
            cell_recurrent: u(4 * h, h, e + h),
            cell_bias: u(4 * h, 1, e + h),
            temporal_att_hidden: u(a, h, h),
            temporal_att_bias: u(a, 1, h),
            temporal_att_score: u(a, 1, a),
            classifier: u(c, h, h),
            classifier_bias: u(c, 1, h),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|m| m.data.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    pub fn embed_size(&self) -> usize {
        self.input_proj.rows
    }

    pub fn hidden_size(&self) -> usize {
        self.cell_recurrent.cols
    }

    pub fn attention_size(&self) -> usize {
        self.joint_att_embed.rows
    }

    pub fn class_count(&self) -> usize {
        self.classifier.rows
    }

    pub fn tensors(&self) -> [&Mat; 14] {
        [
            &self.input_proj,
            &self.joint_embed,
            &self.joint_att_embed,
            &self.joint_att_hidden,
            &self.joint_att_bias,
            &self.joint_att_score,
            &self.cell_input,
            &self.cell_recurrent,
            &self.cell_bias,
            &self.temporal_att_hidden,
            &self.temporal_att_bias,
            &self.temporal_att_score,
            &self.classifier,
            &self.classifier_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 14] {
        [
            &mut self.input_proj,
            &mut self.joint_embed,
            &mut self.joint_att_embed,
            &mut self.joint_att_hidden,
            &mut self.joint_att_bias,
            &mut self.joint_att_score,
            &mut self.cell_input,
            &mut self.cell_recurrent,
            &mut self.cell_bias,
            &mut self.temporal_att_hidden,
            &mut self.temporal_att_bias,
            &mut self.temporal_att_score,
            &mut self.classifier,
            &mut self.classifier_bias,
        ]
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut Mat)) {
        for m in self.tensors_mut() {
            f(m);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.data.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|m| m.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.data.iter().all(|v| v.is_finite()))
    }

    /// Checks the mutual consistency of all tensor shapes.
    pub fn validate(&self) -> Result<()> {
        let (e, h, a, c) = (
            self.embed_size(),
            self.hidden_size(),
            self.attention_size(),
            self.class_count(),
        );
        let expected: [[usize; 2]; 14] = [
            [e, FEATURES],
            [self.joint_count, e],
            [a, e],
            [a, h],
            [a, 1],
            [a, 1],
            [4 * h, e],
            [4 * h, h],
            [4 * h, 1],
            [a, h],
            [a, 1],
            [a, 1],
            [c, h],
            [c, 1],
        ];
        for ((m, want), name) in self.tensors().iter().zip(expected).zip(TENSOR_NAMES) {
            if m.shape() != want || m.data.len() != want[0] * want[1] {
                return Err(KifaError::ShapeMismatch(format!(
                    "{name} has shape {:?}, expected {want:?}",
                    m.shape()
                )));
            }
        }
        if !self.is_finite() {
            return Err(KifaError::ShapeMismatch("parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

/// Network input for one sequence: `T x J x FEATURES`, positions centred on
/// the frame-0 centroid and scaled by the frame-0 RMS spread, velocities
/// scaled by the same factor times a fixed gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub frames: usize,
    pub joints: usize,
    pub data: Vec<f64>,
}

impl SequenceFeatures {
    pub fn from_sequence(seq: &SkeletonSequence) -> Self {
        let joints = seq.total_joints();
        let first = &seq.frames[0].joints;
        let n = first.len() as f64;
        let mut center = [0.0; 3];
        for p in first {
            for k in 0..3 {
                center[k] += p[k] / n;
            }
        }
        let spread = (first
            .iter()
            .map(|p| (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n)
            .sqrt();
        let scale = if spread > 0.0 { 1.0 / spread } else { 1.0 };
        let mut data = Vec::with_capacity(seq.len() * joints * FEATURES);
        for (t, frame) in seq.frames.iter().enumerate() {
            for (j, p) in frame.joints.iter().enumerate() {
                for k in 0..3 {
                    data.push((p[k] - center[k]) * scale);
                }
                for k in 0..3 {
                    let v = if t == 0 {
                        0.0
                    } else {
                        (p[k] - seq.frames[t - 1].joints[j][k]) * scale * VELOCITY_GAIN
                    };
                    data.push(v);
                }
            }
        }
        SequenceFeatures {
            frames: seq.len(),
            joints,
            data,
        }
    }

    #[inline]
    pub fn at(&self, t: usize, j: usize) -> &[f64] {
        let start = (t * self.joints + j) * FEATURES;
        &self.data[start..start + FEATURES]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes_and_bounds() {
        let cfg = NetConfig {
            hidden_size: 8,
            joint_embed_size: 4,
            attention_size: 3,
            ..NetConfig::default()
        };
        let p = NetParams::init(&cfg, 5).unwrap();
        p.validate().unwrap();
        let bound = 1.0 / (FEATURES as f64).sqrt();
        assert!(p.input_proj.data.iter().all(|v| v.abs() <= bound));
        assert_eq!(p, NetParams::init(&cfg, 5).unwrap());
        let mut bad = p.clone();
        bad.classifier = Mat::zeros(2, 2);
        assert!(matches!(bad.validate(), Err(KifaError::ShapeMismatch(_))));
    }

    #[test]
    fn penalty_ramp() {
        let cfg = NetConfig::default();
        assert_eq!(cfg.penalty_weight(0), 0.0);
        assert!((cfg.penalty_weight(50) - 0.25).abs() < 1e-15);
        assert_eq!(cfg.penalty_weight(100), 0.5);
        assert_eq!(cfg.penalty_weight(1000), 0.5);
    }
}
