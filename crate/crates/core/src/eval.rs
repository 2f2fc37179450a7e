//! Cross-validated evaluation of the full pipeline and of the logistic
//! baseline, with metrics derived from pooled confusion counts.

use serde::{Deserialize, Serialize};

use crate::dataset::split_kfold;
use crate::error::{KifaError, Result};
use crate::kinetics::intensity_score;
use crate::math::sigmoid;
use crate::net::{forward, NetParams};
use crate::pipeline::{train_network, PipelineConfig, PipelineSession};
use crate::rng::mix;
use crate::skeleton::{displacement_magnitudes, Action, Intensity, LabeledSample, SkeletonSequence};

pub const REPORT_VERSION: u32 = 1;
pub const METHOD_FUZZY: &str = "fuzzy-inference";
pub const METHOD_BASELINE: &str = "baseline-logistic";

/// Binary confusion counts with intense as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn record(&mut self, truth: Intensity, predicted: Intensity) {
        match (truth == Intensity::Intense, predicted == Intensity::Intense) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with mild as the positive class.
    pub fn swapped(&self) -> BinaryCounts {
        BinaryCounts {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub counts: BinaryCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// F1 of the intense rule.
    pub f1: f64,
    /// F1 of the mild rule.
    pub f1_mild: f64,
    pub f1_averaged: f64,
}

impl BinaryMetrics {
    pub fn from_counts(c: BinaryCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let m = c.swapped();
        let f1_intense = f1(precision, recall);
        let f1_mild = f1(ratio(m.tp, m.tp + m.fp), ratio(m.tp, m.tp + m.fn_));
        BinaryMetrics {
            counts: c,
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1: f1_intense,
            f1_mild,
            f1_averaged: (f1_intense + f1_mild) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub action: Action,
    pub samples: u64,
    pub action_accuracy: f64,
    /// Intensity indexing of samples whose true action is this one.
    pub intensity: BinaryMetrics,
}

/// Fuzzy minus baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub intensity_accuracy: f64,
    pub action_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub method: String,
    pub folds: usize,
    pub seed: u64,
    pub samples: u64,
    /// Rows are true actions, columns predicted actions.
    pub action_confusion: Vec<Vec<u64>>,
    pub action_accuracy: f64,
    /// Pooled over all labeled samples.
    pub intensity: BinaryMetrics,
    /// Mean of the per-action intensity accuracies.
    pub mean_intensity_accuracy: f64,
    pub per_action: Vec<ActionReport>,
    pub ties: u64,
    pub delta: Option<ReportDelta>,
}

/// One held-out prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub action: Action,
    pub predicted_action: Action,
    pub intensity: Intensity,
    pub predicted_intensity: Intensity,
    pub tie: bool,
}

impl EvalReport {
    pub fn from_predictions(method: &str, folds: usize, seed: u64, predictions: &[Prediction]) -> Self {
        let mut confusion = vec![vec![0u64; Action::COUNT]; Action::COUNT];
        let mut per_action = vec![BinaryCounts::default(); Action::COUNT];
        let mut pooled = BinaryCounts::default();
        let mut ties = 0;
        for p in predictions {
            confusion[p.action.index()][p.predicted_action.index()] += 1;
            ties += u64::from(p.tie);
            if p.intensity != Intensity::Unlabeled {
                per_action[p.action.index()].record(p.intensity, p.predicted_intensity);
                pooled.record(p.intensity, p.predicted_intensity);
            }
        }
        let correct: u64 = (0..Action::COUNT).map(|a| confusion[a][a]).sum();
        let per_action: Vec<ActionReport> = Action::ALL
            .iter()
            .map(|&a| {
                let row = &confusion[a.index()];
                let samples = row.iter().sum();
                ActionReport {
                    action: a,
                    samples,
                    action_accuracy: ratio(row[a.index()], samples),
                    intensity: BinaryMetrics::from_counts(per_action[a.index()]),
                }
            })
            .collect();
        let scored: Vec<f64> = per_action
            .iter()
            .filter(|r| r.intensity.counts.total() > 0)
            .map(|r| r.intensity.accuracy)
            .collect();
        EvalReport {
            schema_version: REPORT_VERSION,
            method: method.to_string(),
            folds,
            seed,
            samples: predictions.len() as u64,
            action_accuracy: ratio(correct, predictions.len() as u64),
            action_confusion: confusion,
            intensity: BinaryMetrics::from_counts(pooled),
            mean_intensity_accuracy: if scored.is_empty() {
                0.0
            } else {
                scored.iter().sum::<f64>() / scored.len() as f64
            },
            per_action,
            ties,
            delta: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Sets `delta` to `fuzzy − self`.
    pub fn with_delta_from(mut self, fuzzy: &EvalReport) -> Self {
        self.delta = Some(ReportDelta {
            intensity_accuracy: fuzzy.intensity.accuracy - self.intensity.accuracy,
            action_accuracy: fuzzy.action_accuracy - self.action_accuracy,
        });
        self
    }
}

fn strata(samples: &[LabeledSample]) -> Vec<(Action, Intensity)> {
    samples.iter().map(|s| (s.action, s.intensity)).collect()
}

fn subset(samples: &[LabeledSample], idx: &[usize]) -> Vec<LabeledSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    mix(&[seed, fold as u64])
}

/// Stratified k-fold evaluation of the full pipeline. Test samples are
/// indexed against frozen fuzzifier states.
pub fn evaluate(samples: &[LabeledSample], config: &PipelineConfig, k: usize, seed: u64) -> Result<EvalReport> {
    let folds = split_kfold(&strata(samples), k, seed)?;
    let mut predictions = Vec::with_capacity(samples.len());
    for (f, fold) in folds.iter().enumerate() {
        let train = subset(samples, &fold.train);
        let (mut session, summary) = PipelineSession::train(config, &train, fold_seed(seed, f))?;
        log::info!(
            "fold {}/{k}: loss {:.4} -> {:.4}",
            f + 1,
            summary.initial_loss,
            summary.epoch_losses.last().copied().unwrap_or(summary.initial_loss)
        );
        for &i in &fold.test {
            let s = &samples[i];
            let r = session.index_sample(&s.sequence, true)?;
            predictions.push(Prediction {
                action: s.action,
                predicted_action: r.action,
                intensity: s.intensity,
                predicted_intensity: r.intensity_index,
                tie: r.tie,
            });
        }
    }
    Ok(EvalReport::from_predictions(METHOD_FUZZY, k, seed, &predictions))
}

/// Standardized logistic regression fitted by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn fit(x: &[Vec<f64>], y: &[bool], steps: usize, lr: f64) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(KifaError::DegenerateTraining("no baseline training rows".into()));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(KifaError::DegenerateTraining(
                "both mild and intense samples are required".into(),
            ));
        }
        let dim = x[0].len();
        let mut mean = vec![0.0; dim];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut scale = vec![0.0; dim];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut model = LogisticModel {
            mean,
            scale,
            weights: vec![0.0; dim],
            bias: 0.0,
        };
        let z: Vec<Vec<f64>> = x.iter().map(|row| model.standardize(row)).collect();
        let mut grad = vec![0.0; dim];
        for _ in 0..steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (row, &label) in z.iter().zip(y) {
                let err = model.prob_standardized(row) - f64::from(u8::from(label));
                for (g, v) in grad.iter_mut().zip(row) {
                    *g += err * v / n as f64;
                }
                grad_b += err / n as f64;
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
            model.bias -= lr * grad_b;
        }
        Ok(model)
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn prob_standardized(&self, z: &[f64]) -> f64 {
        sigmoid(self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Probability of the intense class.
    pub fn probability(&self, row: &[f64]) -> f64 {
        self.prob_standardized(&self.standardize(row))
    }
}

/// `[time-averaged joint attention ⊕ I ⊕ H′ ⊕ H]` and the predicted class.
pub fn baseline_features(params: &NetParams, seq: &SkeletonSequence, eps: f64) -> Result<(Vec<f64>, usize)> {
    let out = forward(params, seq)?;
    let d = displacement_magnitudes(seq);
    let score = intensity_score(&out.temporal, &out.joint, &d, eps)?;
    let mut row = out.mean_joint_attention();
    row.extend([score.intensity, score.h_spatial, score.h_temporal]);
    Ok((row, out.predicted_class()))
}

/// Same folds and seeds as [`evaluate`], with the network trained without the
/// penalty and the fuzzy stages replaced by one logistic model per fold.
pub fn baseline_evaluate(samples: &[LabeledSample], config: &PipelineConfig, k: usize, seed: u64) -> Result<EvalReport> {
    let folds = split_kfold(&strata(samples), k, seed)?;
    let mut predictions = Vec::with_capacity(samples.len());
    for (f, fold) in folds.iter().enumerate() {
        let train = subset(samples, &fold.train);
        let mut cfg = config.clone();
        cfg.net.seed = fold_seed(seed, f);
        let (params, _, _) = train_network(&cfg, &train, false)?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in train.iter().filter(|s| s.intensity != Intensity::Unlabeled) {
            x.push(baseline_features(&params, &s.sequence, cfg.eps)?.0);
            y.push(s.intensity == Intensity::Intense);
        }
        let model = LogisticModel::fit(&x, &y, cfg.baseline_steps, cfg.baseline_lr)?;
        for &i in &fold.test {
            let s = &samples[i];
            let (row, class) = baseline_features(&params, &s.sequence, cfg.eps)?;
            let p = model.probability(&row);
            predictions.push(Prediction {
                action: s.action,
                predicted_action: Action::ALL[class],
                intensity: s.intensity,
                predicted_intensity: if p > 0.5 { Intensity::Intense } else { Intensity::Mild },
                tie: p == 0.5,
            });
        }
    }
    Ok(EvalReport::from_predictions(METHOD_BASELINE, k, seed, &predictions))
}
