//! Procedural mild/intense skeleton sequences for the five actions.
//!
//! Two people stand facing each other; subject 0 performs the action. Each
//! template drives a set of primary joints at constant speed, and engages
//! secondary joints (hip rotation, the non-dominant arm, the receiver's
//! reaction) only weakly unless the sample is intense. Intense samples scale
//! the primary burst by the speed multiplier, so every per-frame primary
//! displacement is exactly that multiple of the mild counterpart, and scale
//! the secondary amplitude by the engagement multiplier.
//!
//! Coordinates are in units of roughly 10 cm (standing height 16 units).

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, ManifestEntry};
use crate::error::{KifaError, Result};
use crate::rng::{mix, seeded};
use crate::skeleton::{
    serialize_sequence, Action, Frame, Intensity, LabeledSample, Point3, SkeletonSequence,
    DEFAULT_JOINTS,
};

pub const SUBJECTS: usize = 2;

/// Joint layout of one subject (15 points, SBU order).
pub mod joint {
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const TORSO: usize = 2;
    pub const L_SHOULDER: usize = 3;
    pub const L_ELBOW: usize = 4;
    pub const L_HAND: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const R_ELBOW: usize = 7;
    pub const R_HAND: usize = 8;
    pub const L_HIP: usize = 9;
    pub const L_KNEE: usize = 10;
    pub const L_FOOT: usize = 11;
    pub const R_HIP: usize = 12;
    pub const R_KNEE: usize = 13;
    pub const R_FOOT: usize = 14;

    /// Flattened index of `joint` on the receiving subject.
    pub const fn other(joint: usize) -> usize {
        super::DEFAULT_JOINTS + joint
    }
}

const REST_POSE: [Point3; DEFAULT_JOINTS] = [
    [0.0, 0.0, 16.0],
    [0.0, 0.0, 14.5],
    [0.0, 0.0, 11.0],
    [0.0, 2.0, 14.0],
    [0.0, 2.3, 11.0],
    [0.0, 2.3, 8.5],
    [0.0, -2.0, 14.0],
    [0.0, -2.3, 11.0],
    [0.0, -2.3, 8.5],
    [0.0, 1.2, 9.0],
    [0.0, 1.3, 5.0],
    [0.0, 1.3, 0.5],
    [0.0, -1.2, 9.0],
    [0.0, -1.3, 5.0],
    [0.0, -1.3, 0.5],
];

const PARTNER_DISTANCE: f64 = 8.0;
/// Mild samples move their secondary joints at this fraction of the primary
/// amplitude.
const SECONDARY_GAIN: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// Out and back at constant speed, turning on the middle frame.
    OutAndBack,
    /// Constant-speed transition from the rest pose to the final pose.
    Ramp,
}

impl Profile {
    /// Phase in `[0, 1]` of frame `t` out of `0..=last`. Every consecutive
    /// pair of frames differs in phase.
    fn at(self, t: usize, last: usize) -> f64 {
        let last = last.max(1);
        match self {
            Profile::OutAndBack => {
                let apex = (last / 2).max(1);
                if t <= apex {
                    t as f64 / apex as f64
                } else {
                    (last - t) as f64 / (last - apex) as f64
                }
            }
            Profile::Ramp => t as f64 / last as f64,
        }
    }
}

/// A joint and the direction (scaled by the template amplitude) it travels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointPath {
    pub joint: usize,
    pub direction: Point3,
}

const fn path(joint: usize, direction: Point3) -> JointPath {
    JointPath { joint, direction }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTemplate {
    pub action: Action,
    pub primary: Vec<JointPath>,
    pub secondary: Vec<JointPath>,
    pub base_amplitude: f64,
    pub base_frames: usize,
    pub profile: Profile,
    /// Replaces the global engagement multiplier for this action.
    pub engagement_override: Option<f64>,
}

impl MotionTemplate {
    pub fn primary_joints(&self) -> Vec<usize> {
        self.primary.iter().map(|p| p.joint).collect()
    }

    pub fn secondary_joints(&self) -> Vec<usize> {
        self.secondary.iter().map(|p| p.joint).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let primary = self.primary_joints();
        if self.secondary.iter().any(|s| primary.contains(&s.joint)) {
            return Err(KifaError::Config(format!(
                "{}: primary and secondary joints overlap",
                self.action
            )));
        }
        if self.base_frames < 8 {
            return Err(KifaError::Config(format!(
                "{}: base_frames {} < 8",
                self.action, self.base_frames
            )));
        }
        let width = SUBJECTS * DEFAULT_JOINTS;
        if let Some(p) = self.primary.iter().chain(&self.secondary).find(|p| p.joint >= width) {
            return Err(KifaError::JointOutOfRange {
                index: p.joint,
                joints: width,
            });
        }
        Ok(())
    }

    /// The built-in template for each action.
    pub fn builtin(action: Action) -> MotionTemplate {
        use joint::*;
        let (primary, secondary, base_amplitude, profile, engagement_override) = match action {
            Action::Approaching => (
                (0..DEFAULT_JOINTS).map(|j| path(j, [1.0, 0.0, 0.0])).collect(),
                vec![
                    path(other(HEAD), [0.8, 0.0, 0.0]),
                    path(other(NECK), [0.6, 0.0, 0.0]),
                    path(other(L_HAND), [0.5, 0.0, 0.4]),
                    path(other(R_HAND), [0.5, 0.0, 0.4]),
                ],
                4.0,
                Profile::Ramp,
                Some(1.5),
            ),
            Action::Punching => (
                vec![
                    path(R_HAND, [1.0, 0.3, 0.35]),
                    path(R_ELBOW, [0.6, 0.15, 0.3]),
                    path(R_SHOULDER, [0.25, 0.0, 0.0]),
                ],
                vec![
                    path(L_HIP, [-0.5, 0.0, 0.0]),
                    path(R_HIP, [0.5, 0.0, 0.0]),
                    path(TORSO, [0.3, 0.0, 0.0]),
                    path(L_HAND, [-0.6, 0.0, 0.2]),
                    path(L_ELBOW, [-0.4, 0.0, 0.0]),
                    path(other(HEAD), [0.6, 0.0, 0.0]),
                ],
                5.0,
                Profile::OutAndBack,
                None,
            ),
            Action::Kicking => (
                vec![
                    path(R_FOOT, [1.0, 0.0, 0.6]),
                    path(R_KNEE, [0.6, 0.0, 0.5]),
                ],
                vec![
                    path(L_HAND, [-0.5, 0.3, 0.4]),
                    path(R_HAND, [-0.5, -0.3, 0.4]),
                    path(NECK, [-0.4, 0.0, 0.0]),
                    path(HEAD, [-0.5, 0.0, 0.0]),
                    path(other(TORSO), [0.5, 0.0, 0.0]),
                ],
                5.0,
                Profile::OutAndBack,
                None,
            ),
            Action::Hugging => (
                vec![
                    path(L_HAND, [1.0, -0.6, 0.3]),
                    path(R_HAND, [1.0, 0.6, 0.3]),
                    path(L_ELBOW, [0.6, -0.2, 0.2]),
                    path(R_ELBOW, [0.6, 0.2, 0.2]),
                ],
                vec![
                    path(TORSO, [0.4, 0.0, 0.0]),
                    path(NECK, [0.5, 0.0, -0.1]),
                    path(HEAD, [0.6, 0.0, -0.2]),
                    path(other(L_HAND), [-0.8, 0.5, 0.3]),
                    path(other(R_HAND), [-0.8, -0.5, 0.3]),
                ],
                3.5,
                Profile::Ramp,
                Some(1.5),
            ),
            Action::Pushing => (
                vec![
                    path(L_HAND, [1.0, 0.0, 0.4]),
                    path(R_HAND, [1.0, 0.0, 0.4]),
                    path(L_ELBOW, [0.6, 0.0, 0.3]),
                    path(R_ELBOW, [0.6, 0.0, 0.3]),
                ],
                vec![
                    path(TORSO, [0.3, 0.0, 0.0]),
                    path(other(NECK), [0.7, 0.0, 0.0]),
                    path(other(TORSO), [0.6, 0.0, 0.0]),
                    path(other(L_SHOULDER), [0.7, 0.0, 0.0]),
                    path(other(R_SHOULDER), [0.7, 0.0, 0.0]),
                ],
                4.0,
                Profile::OutAndBack,
                None,
            ),
        };
        MotionTemplate {
            action,
            primary,
            secondary,
            base_amplitude,
            base_frames: 20,
            profile,
            engagement_override,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub speed_multiplier_intense: f64,
    pub engagement_multiplier_intense: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            speed_multiplier_intense: 2.0,
            engagement_multiplier_intense: 3.0,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_multiplier_intense > 1.0 && self.engagement_multiplier_intense > 1.0) {
            return Err(KifaError::Config("intensity multipliers must exceed 1".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(KifaError::Config("noise_std must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Generates one labeled sequence. Frame count, amplitude and placement
/// depend only on `(params.seed, action, instance_seed)`, so a mild and an
/// intense sample from the same instance seed share them; the noise stream
/// also depends on the intensity.
pub fn generate_sample(
    template: &MotionTemplate,
    intensity: Intensity,
    params: &GenParams,
    instance_seed: u64,
) -> LabeledSample {
    let action_tag = template.action.index() as u64;
    let mut shape_rng = seeded(mix(&[params.seed, action_tag, instance_seed]), 1);
    let frames = ((template.base_frames as f64) * shape_rng.gen_range(0.75..=1.25)).round() as usize;
    let frames = frames.max(2);
    let amplitude_jitter = shape_rng.gen_range(0.9..=1.1);
    let drift: Point3 = [
        shape_rng.gen_range(-0.5..=0.5),
        shape_rng.gen_range(-0.5..=0.5),
        0.0,
    ];
    let partner = PARTNER_DISTANCE + shape_rng.gen_range(-0.5..=0.5);

    let (speed, engagement) = match intensity {
        Intensity::Intense => (
            params.speed_multiplier_intense,
            template
                .engagement_override
                .unwrap_or(params.engagement_multiplier_intense),
        ),
        Intensity::Mild | Intensity::Unlabeled => (1.0, 1.0),
    };
    // Longer clips travel further so that per-frame speed does not depend
    // on the frame count.
    let peak = template.base_amplitude * amplitude_jitter * frames as f64 / template.base_frames as f64;

    let width = SUBJECTS * DEFAULT_JOINTS;
    let mut rest = Vec::with_capacity(width);
    for p in REST_POSE {
        rest.push([p[0] + drift[0], p[1] + drift[1], p[2]]);
    }
    for p in REST_POSE {
        rest.push([partner - p[0] + drift[0], -p[1] + drift[1], p[2]]);
    }

    let noise = Normal::new(0.0, params.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let intensity_tag = match intensity {
        Intensity::Mild => 11,
        Intensity::Intense => 12,
        Intensity::Unlabeled => 13,
    };
    let mut noise_rng = seeded(mix(&[params.seed, action_tag, instance_seed]), intensity_tag);

    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let phase = template.profile.at(t, frames - 1);
        let mut joints = rest.clone();
        for p in &template.primary {
            let scale = peak * phase * speed;
            for k in 0..3 {
                joints[p.joint][k] += scale * p.direction[k];
            }
        }
        for p in &template.secondary {
            let scale = peak * phase * SECONDARY_GAIN * engagement;
            for k in 0..3 {
                joints[p.joint][k] += scale * p.direction[k];
            }
        }
        if params.noise_std > 0.0 {
            for v in joints.iter_mut().flatten() {
                *v += truncated(&noise, params.noise_std, &mut noise_rng);
            }
        }
        out.push(Frame { index: t, joints });
    }

    let sequence = SkeletonSequence {
        frames: out,
        subject_count: SUBJECTS,
        joint_count: DEFAULT_JOINTS,
        sequence_id: format!("{}_{}_{instance_seed:04}", template.action, intensity),
    };
    LabeledSample {
        sequence,
        action: template.action,
        intensity,
    }
}

fn truncated(dist: &Normal<f64>, std: f64, rng: &mut crate::rng::Rng) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v.abs() <= 3.0 * std {
            return v;
        }
    }
}

/// In-memory corpus: `per_class_per_intensity` mild and intense samples for
/// every action, in manifest order (action, then instance, mild before
/// intense).
pub fn generate_samples(params: &GenParams, per_class_per_intensity: usize) -> Vec<LabeledSample> {
    let mut out = Vec::with_capacity(10 * per_class_per_intensity);
    for action in Action::ALL {
        let template = MotionTemplate::builtin(action);
        for instance in 0..per_class_per_intensity as u64 {
            for intensity in [Intensity::Mild, Intensity::Intense] {
                out.push(generate_sample(&template, intensity, params, instance));
            }
        }
    }
    out
}

/// Writes one CSV per sample plus `manifest.json` into `out_dir`.
pub fn generate_corpus(
    params: &GenParams,
    per_class_per_intensity: usize,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    params.validate()?;
    if per_class_per_intensity == 0 {
        return Err(KifaError::Config("per-class count must be at least 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| KifaError::io(out_dir, e))?;
    let mut entries = Vec::new();
    for sample in generate_samples(params, per_class_per_intensity) {
        let name = format!("{}.csv", sample.sequence.sequence_id);
        let path = out_dir.join(&name);
        fs::write(&path, serialize_sequence(&sample.sequence)).map_err(|e| KifaError::io(&path, e))?;
        entries.push(ManifestEntry {
            path: name.into(),
            action: sample.action,
            intensity: sample.intensity,
        });
    }
    let manifest = DatasetManifest::new(params.seed, entries);
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
