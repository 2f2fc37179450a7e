use rand::Rng as _;

use super::backward::{loss_and_grad, Penalty};
use super::extended::{penalized_loss_dd, Dd};
use super::{NetConfig, NetParams, SequenceFeatures, TENSOR_NAMES};
use crate::error::Result;
use crate::math::softmax;
use crate::rng::seeded;
use crate::skeleton::{Frame, SkeletonSequence};

/// A small random problem for comparing analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub params: NetParams,
    pub sequence: SkeletonSequence,
    pub label: usize,
    pub reference: Vec<f64>,
    pub penalty_weight: f64,
}

impl GradCheckInstance {
    /// T ≤ 6, J ≤ 5, hidden ≤ 8, everything drawn from `seed`.
    pub fn random(config: &NetConfig, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed, 0x6772_6164);
        let frames = rng.gen_range(2..=6usize);
        let joints = rng.gen_range(1..=5usize);
        let cfg = NetConfig {
            hidden_size: config.hidden_size.clamp(1, 8),
            joint_embed_size: config.joint_embed_size.clamp(1, 5),
            attention_size: config.attention_size.clamp(1, 5),
            seed,
            ..config.clone()
        };
        let params = NetParams::init(&cfg, joints)?;
        let sequence = SkeletonSequence::new(
            (0..frames)
                .map(|index| Frame {
                    index,
                    joints: (0..joints)
                        .map(|_| {
                            [
                                rng.gen_range(-1.0..=1.0),
                                rng.gen_range(-1.0..=1.0),
                                rng.gen_range(-1.0..=1.0),
                            ]
                        })
                        .collect(),
                })
                .collect(),
            1,
            joints,
            format!("gradcheck-{seed}"),
        )?;
        let raw: Vec<f64> = (0..joints).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Ok(GradCheckInstance {
            params,
            sequence,
            label: rng.gen_range(0..cfg.class_count),
            reference: softmax(&raw),
            penalty_weight: rng.gen_range(0.2..=1.0),
        })
    }

    fn loss(&self, feats: &SequenceFeatures, shift: (usize, usize, f64)) -> Dd {
        penalized_loss_dd(
            &self.params,
            feats,
            self.label,
            &self.reference,
            self.penalty_weight,
            shift,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: &'static str,
    pub parameters: usize,
}

/// Central differences over every parameter; relative error is
/// `|g_a − g_n| / max(1e-8, |g_a| + |g_n|)`. The perturbed losses are
/// evaluated in double-double so the differences are not limited by f64
/// rounding of the loss.
pub fn grad_check_instance(inst: &GradCheckInstance, h: f64) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grad(
        &inst.params,
        &inst.sequence,
        inst.label,
        Some(Penalty {
            reference: &inst.reference,
            weight: inst.penalty_weight,
        }),
    )?;
    let feats = SequenceFeatures::from_sequence(&inst.sequence);
    let mut worst = (0.0, TENSOR_NAMES[0]);
    let mut count = 0;
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        for (k, &exact) in analytic.tensors()[ti].data.iter().enumerate() {
            let up = inst.loss(&feats, (ti, k, h));
            let down = inst.loss(&feats, (ti, k, -h));
            let numeric = ((up - down) / Dd::from(2.0 * h)).to_f64();
            let rel = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
            if rel > worst.0 {
                worst = (rel, name);
            }
            count += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_tensor: worst.1,
        parameters: count,
    })
}

/// Builds a random small instance from `seed` and returns the worst relative
/// gradient error.
pub fn grad_check(config: &NetConfig, seed: u64, h: f64) -> Result<f64> {
    let inst = GradCheckInstance::random(config, seed)?;
    Ok(grad_check_instance(&inst, h)?.max_rel_error)
}
