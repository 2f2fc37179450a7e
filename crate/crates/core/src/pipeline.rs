//! Training and indexing sessions: network, per-action fuzzifiers and
//! per-action inference parameters.
//!
//! Intensity scores differ far more between actions than between intensities
//! of one action, so every action keeps its own fuzzifier state and rule
//! weights. Training routes samples by their true action; indexing routes by
//! the predicted one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};
use crate::fuzzifier::{FuzzifierState, MembershipResult};
use crate::inference::{final_inference, fit_params, InferenceParams, SNorm, TNorm};
use crate::kinetics::DEFAULT_EPS;
use crate::net::{forward, read_checkpoint, write_checkpoint, Checkpoint, NetConfig, NetParams, PenaltyProvider, Trainer};
use crate::skeleton::{Action, Intensity, LabeledSample, SkeletonSequence};

pub const SESSION_VERSION: u32 = 1;
const CHECKPOINT_FILE: &str = "network.ckpt";
const SESSION_FILE: &str = "session.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Network fields sit at the top level of the JSON document.
    #[serde(flatten)]
    pub net: NetConfig,
    /// Trailing epochs of `net.epochs` trained with the fuzzifier penalty.
    pub penalty_epochs: usize,
    pub sigma: Option<f64>,
    pub sigma_prime: Option<f64>,
    pub t_norm: TNorm,
    pub s_norm: SNorm,
    pub eps: f64,
    pub fit_steps: usize,
    pub fit_lr: f64,
    pub baseline_steps: usize,
    pub baseline_lr: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            net: NetConfig::default(),
            penalty_epochs: 10,
            sigma: None,
            sigma_prime: None,
            t_norm: TNorm::Min,
            s_norm: SNorm::Max,
            eps: DEFAULT_EPS,
            fit_steps: 300,
            fit_lr: 0.5,
            baseline_steps: 500,
            baseline_lr: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.penalty_epochs > self.net.epochs {
            return Err(KifaError::Config(format!(
                "penalty_epochs ({}) exceeds epochs ({})",
                self.penalty_epochs, self.net.epochs
            )));
        }
        if !(self.eps > 0.0) {
            return Err(KifaError::Config("eps must be positive".into()));
        }
        if !(self.fit_lr > 0.0) || !(self.baseline_lr > 0.0) {
            return Err(KifaError::Config("learning rates must be positive".into()));
        }
        FuzzifierState::with_widths(1, self.sigma, self.sigma_prime)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn new_fuzzifier(&self, joints: usize) -> FuzzifierState {
        let mut state = FuzzifierState::with_widths(joints, self.sigma, self.sigma_prime)
            .expect("widths validated with the config");
        state.eps = self.eps;
        state
    }

    fn initial_inference(&self, joints: usize) -> InferenceParams {
        InferenceParams {
            t_norm: self.t_norm,
            s_norm: self.s_norm,
            ..InferenceParams::uniform(joints)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSession {
    pub config: PipelineConfig,
    pub params: NetParams,
    /// One state per action, in class-index order.
    pub fuzzifiers: Vec<FuzzifierState>,
    pub inference: Vec<InferenceParams>,
    pub manifest: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SessionDocument {
    version: u32,
    config: PipelineConfig,
    fuzzifiers: Vec<FuzzifierState>,
    inference: Vec<InferenceParams>,
    manifest: Option<PathBuf>,
    seed: u64,
}

/// Output of indexing one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexResult {
    pub action: Action,
    pub action_confidence: f64,
    pub intensity_index: Intensity,
    pub mu_y_mild: f64,
    pub mu_y_intense: f64,
    pub intensity_score: f64,
    pub tie: bool,
    pub epsilon_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    /// Inference fitting loss per action, before and after.
    pub fit_losses: Vec<(f64, f64)>,
}

struct CategoryProvider<'a>(&'a [FuzzifierState]);

impl PenaltyProvider for CategoryProvider<'_> {
    fn reference(&self, action: Action, intensity: Intensity) -> Option<Vec<f64>> {
        self.0
            .get(action.index())
            .and_then(|s| s.category(intensity))
            .map(<[f64]>::to_vec)
    }
}

/// Streams samples in order through fresh per-action fuzzifiers.
pub fn build_fuzzifiers(config: &PipelineConfig, params: &NetParams, samples: &[LabeledSample]) -> Result<Vec<FuzzifierState>> {
    let mut states: Vec<FuzzifierState> = (0..Action::COUNT)
        .map(|_| config.new_fuzzifier(params.joint_count))
        .collect();
    for s in samples {
        let out = forward(params, &s.sequence)?;
        states[s.action.index()].fuzzify(&out, &s.sequence)?;
    }
    Ok(states)
}

/// Runs the training stages: plain epochs, penalty epochs against the
/// fuzzifier built from the plain network, a fuzzifier rebuild, and a fit of
/// the inference parameters on frozen re-evaluations of the training set.
/// Without a provider (`penalized = false`) every epoch is plain.
pub fn train_network(config: &PipelineConfig, samples: &[LabeledSample], penalized: bool) -> Result<(NetParams, Vec<f64>, f64)> {
    config.validate()?;
    let mut trainer = Trainer::new(&config.net, samples)?;
    let initial = trainer.mean_loss()?;
    let plain = if penalized {
        config.net.epochs - config.penalty_epochs
    } else {
        config.net.epochs
    };
    let mut losses = Vec::with_capacity(config.net.epochs);
    for _ in 0..plain {
        losses.push(trainer.run_epoch(None)?);
    }
    if plain < config.net.epochs {
        let states = build_fuzzifiers(config, trainer.params(), samples)?;
        let provider = CategoryProvider(&states);
        for _ in plain..config.net.epochs {
            losses.push(trainer.run_epoch(Some(&provider))?);
        }
    }
    log::debug!("trained {} epochs, loss {initial:.4} -> {:.4}", losses.len(), losses.last().unwrap_or(&initial));
    Ok((trainer.into_params(), losses, initial))
}

impl PipelineSession {
    pub fn train(config: &PipelineConfig, samples: &[LabeledSample], seed: u64) -> Result<(Self, TrainSummary)> {
        let mut config = config.clone();
        config.net.seed = seed;
        let (params, epoch_losses, initial_loss) = train_network(&config, samples, true)?;
        let fuzzifiers = build_fuzzifiers(&config, &params, samples)?;
        let mut session = PipelineSession {
            inference: vec![config.initial_inference(params.joint_count); Action::COUNT],
            config,
            params,
            fuzzifiers,
            manifest: None,
            seed,
        };
        let fit_losses = session.fit_inference(samples)?;
        Ok((
            session,
            TrainSummary {
                initial_loss,
                epoch_losses,
                fit_losses,
            },
        ))
    }

    /// Fits each action's rule weights on frozen memberships of its training
    /// samples. Actions without both labels keep the initial weights.
    pub fn fit_inference(&mut self, samples: &[LabeledSample]) -> Result<Vec<(f64, f64)>> {
        let mut per_action: Vec<Vec<(MembershipResult, Intensity)>> = vec![Vec::new(); Action::COUNT];
        for s in samples {
            let out = forward(&self.params, &s.sequence)?;
            let m = self.fuzzifiers[s.action.index()].evaluate(&out, &s.sequence)?;
            per_action[s.action.index()].push((m, s.intensity));
        }
        let mut losses = Vec::with_capacity(Action::COUNT);
        for (a, data) in per_action.iter().enumerate() {
            let init = self.config.initial_inference(self.params.joint_count);
            match fit_params(data, &init, self.config.fit_steps, self.config.fit_lr) {
                Ok(report) => {
                    let best = report.losses.iter().copied().fold(f64::INFINITY, f64::min);
                    losses.push((report.losses[0], best));
                    self.inference[a] = report.params;
                }
                Err(KifaError::DegenerateTraining(why)) => {
                    log::warn!("{}: keeping initial rule weights ({why})", Action::ALL[a]);
                    self.inference[a] = init;
                    losses.push((f64::NAN, f64::NAN));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(losses)
    }

    /// Classifies the sequence and indexes its intensity. Unless `frozen`,
    /// the predicted action's fuzzifier absorbs the sample.
    pub fn index_sample(&mut self, seq: &SkeletonSequence, frozen: bool) -> Result<IndexResult> {
        seq.validate()?;
        let out = forward(&self.params, seq)?;
        let class = out.predicted_class();
        let action = Action::from_index(class)
            .ok_or_else(|| KifaError::ShapeMismatch(format!("class {class} has no action")))?;
        let state = &mut self.fuzzifiers[class];
        let m = if frozen {
            state.evaluate(&out, seq)?
        } else {
            state.fuzzify(&out, seq)?
        };
        let r = final_inference(&m, &self.inference[class]);
        Ok(IndexResult {
            action,
            action_confidence: out.class_scores[class],
            intensity_index: r.decision,
            mu_y_mild: r.mu_y_mild,
            mu_y_intense: r.mu_y_intense,
            intensity_score: r.intensity_score,
            tie: r.tie,
            epsilon_used: m.intensity.epsilon_used,
        })
    }

    /// Writes `network.ckpt` and `session.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| KifaError::io(dir, e))?;
        write_checkpoint(
            &dir.join(CHECKPOINT_FILE),
            &Checkpoint {
                config: self.config.net.clone(),
                seed: self.seed,
                params: self.params.clone(),
            },
        )?;
        let doc = SessionDocument {
            version: SESSION_VERSION,
            config: self.config.clone(),
            fuzzifiers: self.fuzzifiers.clone(),
            inference: self.inference.clone(),
            manifest: self.manifest.clone(),
            seed: self.seed,
        };
        let path = dir.join(SESSION_FILE);
        fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| KifaError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let ckpt = read_checkpoint(&dir.join(CHECKPOINT_FILE))?;
        let path = dir.join(SESSION_FILE);
        let text = fs::read_to_string(&path).map_err(|e| KifaError::io(&path, e))?;
        let doc: SessionDocument = serde_json::from_str(&text)?;
        if doc.version != SESSION_VERSION {
            return Err(KifaError::Format(format!("unsupported session version {}", doc.version)));
        }
        if doc.fuzzifiers.len() != Action::COUNT || doc.inference.len() != Action::COUNT {
            return Err(KifaError::Format("session must hold one state per action".into()));
        }
        if ckpt.config != doc.config.net || ckpt.seed != doc.seed {
            return Err(KifaError::Format("checkpoint does not belong to this session".into()));
        }
        Ok(PipelineSession {
            config: doc.config,
            params: ckpt.params,
            fuzzifiers: doc.fuzzifiers,
            inference: doc.inference,
            manifest: doc.manifest,
            seed: doc.seed,
        })
    }
}
