use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::backward::{accumulate, Penalty};
use super::forward::run;
use super::{NetConfig, NetParams, SequenceFeatures};
use crate::error::{KifaError, Result};
use crate::kinetics::safe_ln;
use crate::rng::seeded;
use crate::skeleton::{Action, Intensity, LabeledSample};

/// Supplies the reference joint distribution used by the attention penalty.
pub trait PenaltyProvider {
    fn reference(&self, action: Action, intensity: Intensity) -> Option<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss of the initial parameters over the training set.
    pub initial_loss: f64,
    /// Mean loss accumulated during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

struct Example {
    features: SequenceFeatures,
    action: Action,
    intensity: Intensity,
}

/// Plain per-sample gradient descent with global-norm clipping. The trainer
/// keeps the per-action sample counters that drive the penalty ramp, so a run
/// can be split into phases without resetting them.
pub struct Trainer {
    config: NetConfig,
    params: NetParams,
    examples: Vec<Example>,
    seen: Vec<usize>,
    epoch: usize,
    grads: NetParams,
}

impl Trainer {
    pub fn new(config: &NetConfig, samples: &[LabeledSample]) -> Result<Self> {
        let joints = samples
            .first()
            .map(|s| s.sequence.total_joints())
            .ok_or_else(|| KifaError::EmptyClass("no samples".into()))?;
        let params = NetParams::init(config, joints)?;
        Self::resume(config, params, samples)
    }

    pub fn resume(config: &NetConfig, params: NetParams, samples: &[LabeledSample]) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let mut counts = vec![0usize; config.class_count];
        for s in samples {
            let idx = s.action.index();
            if idx >= config.class_count {
                return Err(KifaError::Config(format!(
                    "action {} outside {} classes",
                    s.action, config.class_count
                )));
            }
            counts[idx] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            let name = Action::from_index(empty).map_or_else(|| empty.to_string(), |a| a.to_string());
            return Err(KifaError::EmptyClass(name));
        }
        let examples = samples
            .iter()
            .map(|s| Example {
                features: SequenceFeatures::from_sequence(&s.sequence),
                action: s.action,
                intensity: s.intensity,
            })
            .collect();
        let grads = params.zeros_like();
        Ok(Trainer {
            config: config.clone(),
            params,
            examples,
            seen: vec![0; config.class_count],
            epoch: 0,
            grads,
        })
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn into_params(self) -> NetParams {
        self.params
    }

    /// Mean classification loss over the training set, without updates.
    pub fn mean_loss(&self) -> Result<f64> {
        let mut total = 0.0;
        for ex in &self.examples {
            let trace = run(&self.params, &ex.features)?;
            total -= safe_ln(trace.probs[ex.action.index()]);
        }
        Ok(total / self.examples.len() as f64)
    }

    pub fn run_epoch(&mut self, provider: Option<&dyn PenaltyProvider>) -> Result<f64> {
        let epoch = self.epoch;
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut seeded(self.config.seed, 0x6570_6f63_6800 + epoch as u64));
        let mut total = 0.0;
        for i in order {
            let ex = &self.examples[i];
            let label = ex.action.index();
            self.seen[label] += 1;
            let reference = provider.and_then(|p| p.reference(ex.action, ex.intensity));
            let penalty = reference.as_deref().map(|r| Penalty {
                reference: r,
                weight: self.config.penalty_weight(self.seen[label]),
            });

            self.grads.for_each_mut(|m| m.data.iter_mut().for_each(|v| *v = 0.0));
            let loss = accumulate(&self.params, &ex.features, label, penalty, &mut self.grads)?;
            if !loss.is_finite() {
                return Err(KifaError::NonFiniteLoss { epoch });
            }
            total += loss;

            let norm = self.grads.l2_norm();
            let scale = if norm > self.config.grad_clip {
                self.config.grad_clip / norm
            } else {
                1.0
            };
            let step = self.config.learning_rate * scale;
            for (p, g) in self.params.tensors_mut().into_iter().zip(self.grads.tensors()) {
                for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                    *pv -= step * gv;
                }
            }
        }
        if !self.params.is_finite() {
            return Err(KifaError::NonFiniteLoss { epoch });
        }
        Ok(total / self.examples.len() as f64)
    }
}

/// Trains a fresh network for `config.epochs` epochs.
pub fn train(
    config: &NetConfig,
    samples: &[LabeledSample],
    provider: Option<&dyn PenaltyProvider>,
) -> Result<(NetParams, TrainReport)> {
    let mut trainer = Trainer::new(config, samples)?;
    let initial_loss = trainer.mean_loss()?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let loss = trainer.run_epoch(provider)?;
        log::debug!("epoch {} loss {loss:.6}", epoch_losses.len());
        epoch_losses.push(loss);
    }
    Ok((
        trainer.into_params(),
        TrainReport {
            initial_loss,
            epoch_losses,
        },
    ))
}
