//! Kinetic intensity score from attention weights and motion.
//!
//! The temporal entropy weighs each frame's attention surprise by the inverse
//! of its displacement; the spatial entropy is the temporal-attention-weighted
//! entropy of the per-frame joint attention. Their ratio is the intensity
//! score: faster motion shrinks the denominator, broader joint engagement
//! grows the numerator.

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};

pub const DEFAULT_EPS: f64 = 1e-6;
/// Floor applied to probabilities before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticScore {
    pub h_temporal: f64,
    pub h_spatial: f64,
    pub intensity: f64,
    /// True when at least one displacement was raised to the floor.
    pub epsilon_used: bool,
}

pub(crate) fn safe_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

fn check_distribution(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(KifaError::InvalidAttention(format!("{what} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(KifaError::InvalidAttention(format!(
            "{what} has non-positive entry {v}"
        )));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(KifaError::InvalidAttention(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// `-Σ_{t≥1} ln(a_t) / max(d_t, eps)`; frame 0 has no displacement and is
/// skipped. Returns the entropy and whether the floor fired.
pub fn temporal_fuzzy_entropy(a: &[f64], d: &[f64], eps: f64) -> Result<(f64, bool)> {
    check_distribution(a, "temporal attention")?;
    if a.len() != d.len() {
        return Err(KifaError::ShapeMismatch(format!(
            "{} attention weights vs {} displacements",
            a.len(),
            d.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(KifaError::Config("displacement floor must be positive".into()));
    }
    let mut h = 0.0;
    let mut clamped = false;
    for (&at, &dt) in a.iter().zip(d).skip(1) {
        if dt < eps {
            clamped = true;
        }
        h -= safe_ln(at) / dt.max(eps);
    }
    Ok((h, clamped))
}

/// `-Σ_t a_t Σ_j a'_{j,t} ln a'_{j,t}`. `joint[j][t]` holds a'_{j,t}.
pub fn spatial_fuzzy_entropy(a: &[f64], joint: &[Vec<f64>]) -> Result<f64> {
    check_distribution(a, "temporal attention")?;
    if joint.iter().any(|row| row.len() != a.len()) {
        return Err(KifaError::ShapeMismatch(
            "joint attention rows must have one entry per frame".into(),
        ));
    }
    let mut column = vec![0.0; joint.len()];
    let mut h = 0.0;
    for (t, &at) in a.iter().enumerate() {
        for (c, row) in column.iter_mut().zip(joint) {
            *c = row[t];
        }
        check_distribution(&column, "joint attention column")?;
        let inner: f64 = column.iter().map(|&p| p * safe_ln(p)).sum();
        h -= at * inner;
    }
    Ok(h)
}

pub fn intensity_score(a: &[f64], joint: &[Vec<f64>], d: &[f64], eps: f64) -> Result<KineticScore> {
    let (h_temporal, epsilon_used) = temporal_fuzzy_entropy(a, d, eps)?;
    let h_spatial = spatial_fuzzy_entropy(a, joint)?;
    if h_temporal <= 0.0 {
        return Err(KifaError::ZeroTemporalEntropy);
    }
    Ok(KineticScore {
        h_temporal,
        h_spatial,
        intensity: h_spatial / h_temporal,
        epsilon_used,
    })
}
