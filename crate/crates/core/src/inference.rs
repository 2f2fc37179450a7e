//! Rule-based inference of the intensity index from fuzzified inputs.
//!
//! Per-joint rules are combined linearly with weights α. The final rules join
//! the intensity-score truth value with the joint aggregate through an
//! AND-type operator `λ·T(a, b) + (1 − λ)·S(a, b)`.

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};
use crate::fuzzifier::MembershipResult;
use crate::math::{sigmoid, softmax, softmax_backward};
use crate::skeleton::Intensity;

/// Logit bound that keeps λ strictly inside (0, 1) at f64 precision.
const LOGIT_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TNorm {
    #[default]
    Min,
    Product,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SNorm {
    #[default]
    Max,
    ProbabilisticSum,
}

impl TNorm {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Min => a.min(b),
            TNorm::Product => a * b,
        }
    }

    /// Partial derivative with respect to `b`; at `a == b` the min passes its
    /// gradient to `a`.
    fn d_second(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Min => f64::from(u8::from(b < a)),
            TNorm::Product => a,
        }
    }
}

impl SNorm {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            SNorm::Max => a.max(b),
            SNorm::ProbabilisticSum => a + b - a * b,
        }
    }

    fn d_second(self, a: f64, b: f64) -> f64 {
        match self {
            SNorm::Max => f64::from(u8::from(b > a)),
            SNorm::ProbabilisticSum => 1.0 - a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceParams {
    pub alpha: Vec<f64>,
    pub lambda_and: f64,
    #[serde(default)]
    pub t_norm: TNorm,
    #[serde(default)]
    pub s_norm: SNorm,
}

impl InferenceParams {
    /// α = 1/J, λ = 0.5, min/max.
    pub fn uniform(joints: usize) -> Self {
        InferenceParams {
            alpha: vec![1.0 / joints as f64; joints],
            lambda_and: 0.5,
            t_norm: TNorm::Min,
            s_norm: SNorm::Max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(KifaError::Config("alpha must be non-negative and non-empty".into()));
        }
        let sum: f64 = self.alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(KifaError::Config(format!("alpha sums to {sum}, expected 1")));
        }
        if !(self.lambda_and > 0.0 && self.lambda_and < 1.0) {
            return Err(KifaError::Config(format!(
                "lambda_and must lie in (0, 1), got {}",
                self.lambda_and
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub mu_p_mild: f64,
    pub mu_p_intense: f64,
    pub mu_y_mild: f64,
    pub mu_y_intense: f64,
    pub decision: Intensity,
    pub tie: bool,
    pub intensity_score: f64,
}

/// `(Σ α_j mild_j, Σ α_j intense_j)`.
pub fn intermediate_inference(mild: &[f64], intense: &[f64], params: &InferenceParams) -> (f64, f64) {
    let combine = |mu: &[f64]| params.alpha.iter().zip(mu).map(|(a, m)| a * m).sum::<f64>();
    (combine(mild), combine(intense))
}

/// `λ·T(a, b) + (1 − λ)·S(a, b)`, exact at both endpoints and when the norms agree.
pub fn and_type(mu_a: f64, mu_b: f64, params: &InferenceParams) -> f64 {
    let lambda = params.lambda_and;
    let s = params.s_norm.apply(mu_a, mu_b);
    let t = params.t_norm.apply(mu_a, mu_b);
    if lambda < 0.5 {
        s + lambda * (t - s)
    } else {
        t - (1.0 - lambda) * (t - s)
    }
}

/// Final rules; equal truth values are flagged and resolved to mild.
pub fn final_inference(membership: &MembershipResult, params: &InferenceParams) -> InferenceResult {
    let (mu_p_mild, mu_p_intense) = intermediate_inference(&membership.mu_p_mild, &membership.mu_p_intense, params);
    let mu_y_mild = and_type(membership.mu_i_mild, mu_p_mild, params);
    let mu_y_intense = and_type(membership.mu_i_intense, mu_p_intense, params);
    let decision = if mu_y_intense > mu_y_mild {
        Intensity::Intense
    } else {
        Intensity::Mild
    };
    InferenceResult {
        mu_p_mild,
        mu_p_intense,
        mu_y_mild,
        mu_y_intense,
        decision,
        tie: mu_y_mild == mu_y_intense,
        intensity_score: membership.intensity.intensity,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Lowest-loss parameters visited, the initial ones included.
    pub params: InferenceParams,
    /// Loss before the first step and after each step.
    pub losses: Vec<f64>,
}

struct Example<'a> {
    m: &'a MembershipResult,
    target: f64,
}

fn fit_loss(examples: &[Example<'_>], params: &InferenceParams) -> f64 {
    examples
        .iter()
        .map(|ex| {
            let r = final_inference(ex.m, params);
            let s = (r.mu_y_intense - r.mu_y_mild + 1.0) / 2.0;
            (s - ex.target).powi(2)
        })
        .sum::<f64>()
        / examples.len() as f64
}

/// Gradient descent on the squared error between
/// `s = (μY_int − μY_mld + 1)/2` and the label (intense = 1). α is a softmax
/// of free logits and λ a sigmoid of a free scalar. Unlabeled samples are
/// ignored.
pub fn fit_params(
    training: &[(MembershipResult, Intensity)],
    init: &InferenceParams,
    steps: usize,
    lr: f64,
) -> Result<FitReport> {
    fit_params_observed(training, init, steps, lr, |_| {})
}

/// [`fit_params`], calling `observe` with the parameters after every step.
pub fn fit_params_observed(
    training: &[(MembershipResult, Intensity)],
    init: &InferenceParams,
    steps: usize,
    lr: f64,
    mut observe: impl FnMut(&InferenceParams),
) -> Result<FitReport> {
    init.validate()?;
    let examples: Vec<Example<'_>> = training
        .iter()
        .filter_map(|(m, label)| match label {
            Intensity::Mild => Some(Example { m, target: 0.0 }),
            Intensity::Intense => Some(Example { m, target: 1.0 }),
            Intensity::Unlabeled => None,
        })
        .collect();
    let intense = examples.iter().filter(|e| e.target == 1.0).count();
    if intense == 0 || intense == examples.len() {
        return Err(KifaError::DegenerateTraining(
            "both mild and intense samples are required".into(),
        ));
    }
    if let Some(bad) = examples.iter().find(|e| e.m.mu_p_mild.len() != init.alpha.len()) {
        return Err(KifaError::ShapeMismatch(format!(
            "membership covers {} joints, alpha has {}",
            bad.m.mu_p_mild.len(),
            init.alpha.len()
        )));
    }

    let mut logits: Vec<f64> = init.alpha.iter().map(|a| a.max(1e-300).ln()).collect();
    let mut u = (init.lambda_and / (1.0 - init.lambda_and)).ln().clamp(-LOGIT_BOUND, LOGIT_BOUND);
    let initial = fit_loss(&examples, init);
    let mut losses = vec![initial];
    let mut best = (initial, init.clone());
    let n = examples.len() as f64;
    let joints = init.alpha.len();
    let mut current = init.clone();
    let mut d_alpha = vec![0.0; joints];
    let mut d_logits = vec![0.0; joints];

    for _ in 0..steps {
        d_alpha.iter_mut().for_each(|v| *v = 0.0);
        let mut d_lambda = 0.0;
        let (tn, sn, lambda) = (current.t_norm, current.s_norm, current.lambda_and);
        for ex in &examples {
            let r = final_inference(ex.m, &current);
            let s = (r.mu_y_intense - r.mu_y_mild + 1.0) / 2.0;
            let ds = 2.0 * (s - ex.target) / n;
            let (dy_int, dy_mild) = (0.5 * ds, -0.5 * ds);
            let (ai, am) = (ex.m.mu_i_intense, ex.m.mu_i_mild);
            let (pi, pm) = (r.mu_p_intense, r.mu_p_mild);
            d_lambda += dy_int * (tn.apply(ai, pi) - sn.apply(ai, pi)) + dy_mild * (tn.apply(am, pm) - sn.apply(am, pm));
            let dp_int = dy_int * (lambda * tn.d_second(ai, pi) + (1.0 - lambda) * sn.d_second(ai, pi));
            let dp_mild = dy_mild * (lambda * tn.d_second(am, pm) + (1.0 - lambda) * sn.d_second(am, pm));
            for j in 0..joints {
                d_alpha[j] += dp_int * ex.m.mu_p_intense[j] + dp_mild * ex.m.mu_p_mild[j];
            }
        }
        softmax_backward(&current.alpha, &d_alpha, &mut d_logits);
        for (z, g) in logits.iter_mut().zip(&d_logits) {
            *z -= lr * g;
        }
        u = (u - lr * d_lambda * lambda * (1.0 - lambda)).clamp(-LOGIT_BOUND, LOGIT_BOUND);
        current.alpha = softmax(&logits);
        current.lambda_and = sigmoid(u);
        observe(&current);
        let loss = fit_loss(&examples, &current);
        losses.push(loss);
        if loss < best.0 {
            best = (loss, current.clone());
        }
    }
    Ok(FitReport { params: best.1, losses })
}
