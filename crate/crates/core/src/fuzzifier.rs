//! Online fuzzification of the intensity score and the joint-attention
//! distribution.
//!
//! The state keeps running statistics of every intensity score and every
//! per-joint cross-entropy gap it has seen, plus two collections of
//! membership-weighted joint-attention vectors (mild and intense) whose means
//! define the category joint distributions.

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};
use crate::kinetics::{intensity_score, safe_ln, KineticScore, DEFAULT_EPS};
use crate::math::softmax;
use crate::net::AttentionOutput;
use crate::skeleton::{displacement_magnitudes, Intensity, SkeletonSequence};

pub const STATE_VERSION: u32 = 1;
/// Lower bound on the data-driven membership widths.
pub const MIN_WIDTH: f64 = 1e-3;

/// Welford running mean and variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Population standard deviation; 0 before two values.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}

/// Membership-weighted joint-attention vectors of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCollection {
    pub members: Vec<Vec<f64>>,
    sum: Vec<f64>,
}

impl JointCollection {
    fn new(joints: usize) -> Self {
        JointCollection {
            members: Vec::new(),
            sum: vec![0.0; joints],
        }
    }

    fn push(&mut self, weighted: Vec<f64>) {
        for (s, v) in self.sum.iter_mut().zip(&weighted) {
            *s += v;
        }
        self.members.push(weighted);
    }

    /// Softmax of the element-wise mean, or `None` while empty.
    pub fn distribution(&self) -> Option<Vec<f64>> {
        if self.members.is_empty() {
            return None;
        }
        let n = self.members.len() as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        Some(softmax(&mean))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzifierState {
    pub version: u32,
    pub joint_count: usize,
    pub intensity: RunningStat,
    pub delta_h: RunningStat,
    pub c_mild: JointCollection,
    pub c_intense: JointCollection,
    pub p_mild: Option<Vec<f64>>,
    pub p_intense: Option<Vec<f64>>,
    /// Fixed σ; `None` uses the running standard deviation of I.
    pub sigma_override: Option<f64>,
    /// Fixed σ′; `None` uses the running standard deviation of ΔH.
    pub sigma_prime_override: Option<f64>,
    pub eps: f64,
}

/// Softmax of the time-averaged joint attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipResult {
    pub mu_i_mild: f64,
    pub mu_i_intense: f64,
    pub mu_p_mild: Vec<f64>,
    pub mu_p_intense: Vec<f64>,
    /// Per-joint cross-entropy gap; empty while a category is unformed.
    pub delta_h: Vec<f64>,
    pub intensity: KineticScore,
    pub q: JointDistribution,
}

/// `(0.5 + dev/width, 0.5 − dev/width)`, each clamped to `[0, 1]`. Inside
/// the support the smaller side is taken as the complement of the larger, so
/// the pair sums to exactly 1.
pub fn triangular(deviation: f64, width: f64) -> (f64, f64) {
    let r = deviation / width;
    let (high, low) = if r.abs() >= 0.5 {
        (1.0, 0.0)
    } else {
        let high = 0.5 + r.abs();
        (high, 1.0 - high)
    };
    if r >= 0.0 {
        (high, low)
    } else {
        (low, high)
    }
}

impl FuzzifierState {
    pub fn new(joint_count: usize) -> Self {
        FuzzifierState {
            version: STATE_VERSION,
            joint_count,
            intensity: RunningStat::default(),
            delta_h: RunningStat::default(),
            c_mild: JointCollection::new(joint_count),
            c_intense: JointCollection::new(joint_count),
            p_mild: None,
            p_intense: None,
            sigma_override: None,
            sigma_prime_override: None,
            eps: DEFAULT_EPS,
        }
    }

    pub fn with_widths(joint_count: usize, sigma: Option<f64>, sigma_prime: Option<f64>) -> Result<Self> {
        for w in [sigma, sigma_prime].into_iter().flatten() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(KifaError::Config(format!("membership width must be positive, got {w}")));
            }
        }
        Ok(FuzzifierState {
            sigma_override: sigma,
            sigma_prime_override: sigma_prime,
            ..Self::new(joint_count)
        })
    }

    pub fn mean_intensity(&self) -> f64 {
        self.intensity.mean
    }

    pub fn mean_delta_h(&self) -> f64 {
        self.delta_h.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_override
            .unwrap_or_else(|| self.intensity.std().max(MIN_WIDTH))
    }

    pub fn sigma_prime(&self) -> f64 {
        self.sigma_prime_override
            .unwrap_or_else(|| self.delta_h.std().max(MIN_WIDTH))
    }

    pub fn category(&self, intensity: Intensity) -> Option<&[f64]> {
        match intensity {
            Intensity::Mild => self.p_mild.as_deref(),
            Intensity::Intense => self.p_intense.as_deref(),
            Intensity::Unlabeled => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: FuzzifierState = serde_json::from_str(text)?;
        if state.version != STATE_VERSION {
            return Err(KifaError::Format(format!(
                "fuzzifier state version {} is not supported",
                state.version
            )));
        }
        Ok(state)
    }

    /// Full update for one sample, in order: score, Ī, intensity
    /// memberships, collections, q, per-joint ΔH with ΔH̄, joint memberships.
    pub fn fuzzify(&mut self, attn: &AttentionOutput, seq: &SkeletonSequence) -> Result<MembershipResult> {
        let score = self.score(attn, seq)?;
        self.intensity.push(score.intensity);
        let (mu_i_mild, mu_i_intense) = fuzzify_intensity(score.intensity, self)?;
        let avg = attn.mean_joint_attention();
        update_joint_collections(&avg, (mu_i_mild, mu_i_intense), self);
        let q = input_joint_distribution(&attn.joint);
        let joints = if self.p_mild.is_some() && self.p_intense.is_some() {
            Some(fuzzify_joint_distribution(&q, self)?)
        } else {
            None
        };
        Ok(self.assemble(score, (mu_i_mild, mu_i_intense), q, joints))
    }

    /// Memberships against the current state without changing it.
    pub fn evaluate(&self, attn: &AttentionOutput, seq: &SkeletonSequence) -> Result<MembershipResult> {
        let score = self.score(attn, seq)?;
        let mu_i = fuzzify_intensity(score.intensity, self)?;
        let q = input_joint_distribution(&attn.joint);
        let joints = match (&self.p_mild, &self.p_intense) {
            (Some(pm), Some(pi)) => {
                let width = self.sigma_prime();
                let mut out = (Vec::new(), Vec::new(), Vec::new());
                for (j, &qj) in q.q.iter().enumerate() {
                    let dh = delta_h(pi[j], pm[j], qj);
                    let (mild, intense) = triangular(dh - self.delta_h.mean, width);
                    out.0.push(mild);
                    out.1.push(intense);
                    out.2.push(dh);
                }
                Some(out)
            }
            _ => None,
        };
        Ok(self.assemble(score, mu_i, q, joints))
    }

    fn score(&self, attn: &AttentionOutput, seq: &SkeletonSequence) -> Result<KineticScore> {
        if attn.joint.len() != self.joint_count {
            return Err(KifaError::ShapeMismatch(format!(
                "attention covers {} joints, fuzzifier expects {}",
                attn.joint.len(),
                self.joint_count
            )));
        }
        let d = displacement_magnitudes(seq);
        intensity_score(&attn.temporal, &attn.joint, &d, self.eps)
    }

    fn assemble(
        &self,
        intensity: KineticScore,
        (mu_i_mild, mu_i_intense): (f64, f64),
        q: JointDistribution,
        joints: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    ) -> MembershipResult {
        let (mu_p_mild, mu_p_intense, delta_h) =
            joints.unwrap_or_else(|| (vec![0.5; self.joint_count], vec![0.5; self.joint_count], Vec::new()));
        MembershipResult {
            mu_i_mild,
            mu_i_intense,
            mu_p_mild,
            mu_p_intense,
            delta_h,
            intensity,
            q,
        }
    }
}

/// Intensity memberships `(mild, intense)` around the running mean Ī.
pub fn fuzzify_intensity(i: f64, state: &FuzzifierState) -> Result<(f64, f64)> {
    if state.intensity.count == 0 {
        return Err(KifaError::ColdStart);
    }
    let (intense, mild) = triangular(i - state.intensity.mean, state.sigma());
    Ok((mild, intense))
}

/// `softmax((1/T) Σ_t a'_{j,t})`; `a_joint[j][t]`.
pub fn input_joint_distribution(a_joint: &[Vec<f64>]) -> JointDistribution {
    let avg: Vec<f64> = a_joint
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    JointDistribution { q: softmax(&avg) }
}

/// Routes the μ-weighted average attention to the mild collection when
/// `mu_intense ≤ mu_mild`, otherwise to the intense one, and refreshes that
/// category's distribution.
pub fn update_joint_collections(avg_attention: &[f64], (mu_mild, mu_intense): (f64, f64), state: &mut FuzzifierState) {
    if mu_intense <= mu_mild {
        state.c_mild.push(avg_attention.iter().map(|a| mu_mild * a).collect());
        state.p_mild = state.c_mild.distribution();
    } else {
        state.c_intense.push(avg_attention.iter().map(|a| mu_intense * a).collect());
        state.p_intense = state.c_intense.distribution();
    }
}

fn delta_h(p_intense: f64, p_mild: f64, q: f64) -> f64 {
    let ln_q = safe_ln(q);
    (-p_intense * ln_q) - (-p_mild * ln_q)
}

/// Per-joint `(mild, intense)` memberships from the cross-entropy gap
/// `ΔH_j`. ΔH̄ absorbs each joint's gap before that joint is scored.
pub fn fuzzify_joint_distribution(q: &JointDistribution, state: &mut FuzzifierState) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let pm = state.p_mild.clone().ok_or(KifaError::UndefinedCategory("mild"))?;
    let pi = state.p_intense.clone().ok_or(KifaError::UndefinedCategory("intense"))?;
    if q.q.len() != pm.len() {
        return Err(KifaError::ShapeMismatch(format!(
            "q has {} joints, categories have {}",
            q.q.len(),
            pm.len()
        )));
    }
    let mut out = (Vec::with_capacity(pm.len()), Vec::with_capacity(pm.len()), Vec::with_capacity(pm.len()));
    for (j, &qj) in q.q.iter().enumerate() {
        let dh = delta_h(pi[j], pm[j], qj);
        state.delta_h.push(dh);
        let (mild, intense) = triangular(dh - state.delta_h.mean, state.sigma_prime());
        out.0.push(mild);
        out.1.push(intense);
        out.2.push(dh);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_state(mean: f64, sigma: f64) -> FuzzifierState {
        let mut s = FuzzifierState::with_widths(2, Some(sigma), Some(1.0)).unwrap();
        s.intensity.push(mean);
        s
    }

    #[test]
    fn intensity_membership_hand_values() {
        let s = seeded_state(1.0, 2.0);
        assert_eq!(fuzzify_intensity(1.0, &s).unwrap(), (0.5, 0.5));
        assert_eq!(fuzzify_intensity(2.0, &s).unwrap(), (0.0, 1.0));
        assert_eq!(fuzzify_intensity(0.5, &s).unwrap(), (0.75, 0.25));
    }

    #[test]
    fn cold_start_is_reported() {
        let s = FuzzifierState::new(2);
        assert!(matches!(fuzzify_intensity(1.0, &s), Err(KifaError::ColdStart)));
    }

    #[test]
    fn joint_distribution_hand_values() {
        let q = input_joint_distribution(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
        assert!((q.q[0] - 0.7311).abs() < 1e-4);
        assert!((q.q[1] - 0.2689).abs() < 1e-4);
        let flat = input_joint_distribution(&[vec![0.2, 0.4], vec![0.4, 0.2]]);
        assert!((flat.q[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collections_route_and_normalize() {
        let mut s = FuzzifierState::new(2);
        update_joint_collections(&[1.0, 0.0], (0.0, 1.0), &mut s);
        assert_eq!(s.c_intense.members, vec![vec![1.0, 0.0]]);
        let p = s.p_intense.clone().unwrap();
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
        assert!(s.p_mild.is_none());

        update_joint_collections(&[0.3, 0.7], (0.5, 0.5), &mut s);
        assert_eq!(s.c_mild.members.len(), 1);
        let one = s.p_mild.clone().unwrap();
        update_joint_collections(&[0.3, 0.7], (0.5, 0.5), &mut s);
        assert_eq!(s.p_mild.clone().unwrap(), one);
    }

    #[test]
    fn joint_membership_hand_values() {
        let mut s = FuzzifierState::with_widths(2, None, Some(1.0)).unwrap();
        s.p_intense = Some(vec![0.7, 0.3]);
        s.p_mild = Some(vec![0.3, 0.7]);
        let dh = delta_h(0.7, 0.3, 0.5);
        assert!((dh - 0.2773).abs() < 1e-4);
        let (mild, intense) = triangular(dh - 0.0, 1.0);
        assert!((mild - 0.7773).abs() < 1e-4);
        assert!((mild + intense - 1.0).abs() < 1e-15);

        let (m, i, d) = fuzzify_joint_distribution(&JointDistribution { q: vec![0.5, 0.5] }, &mut s).unwrap();
        assert_eq!(s.delta_h.count, 2);
        assert!((d[0] + d[1]).abs() < 1e-15);
        assert_eq!((m[0], i[0]), (0.5, 0.5));
        assert!((m[1] - (0.5 - dh)).abs() < 1e-15 && (i[1] - (0.5 + dh)).abs() < 1e-15);
        assert_eq!(triangular(0.3, f64::INFINITY), (0.5, 0.5));
    }

    #[test]
    fn undefined_category_is_reported() {
        let mut s = FuzzifierState::new(2);
        s.p_mild = Some(vec![0.5, 0.5]);
        let q = JointDistribution { q: vec![0.5, 0.5] };
        assert!(matches!(
            fuzzify_joint_distribution(&q, &mut s),
            Err(KifaError::UndefinedCategory("intense"))
        ));
    }

    #[test]
    fn state_json_round_trip() {
        let mut s = FuzzifierState::new(3);
        s.intensity.push(0.1234567890123);
        s.intensity.push(2.0 / 3.0);
        update_joint_collections(&[0.1, 0.2, 0.7], (0.9, 0.1), &mut s);
        let back = FuzzifierState::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let bad = s.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(FuzzifierState::from_json(&bad), Err(KifaError::Format(_))));
    }
}
