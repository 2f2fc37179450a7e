use serde::{Deserialize, Serialize};

use super::{NetParams, SequenceFeatures};
use crate::error::{KifaError, Result};
use crate::math::{dot, sigmoid, softmax_in_place};
use crate::skeleton::SkeletonSequence;

/// Everything the network exposes for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionOutput {
    /// a_t, one weight per frame.
    pub temporal: Vec<f64>,
    /// a'_{j,t}, indexed `[joint][frame]`.
    pub joint: Vec<Vec<f64>>,
    /// Post-softmax class probabilities.
    pub class_scores: Vec<f64>,
    /// `T x hidden_size`.
    pub hidden_states: Vec<Vec<f64>>,
}

impl AttentionOutput {
    pub fn predicted_class(&self) -> usize {
        self.class_scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    /// Time-averaged joint attention, one value per joint.
    pub fn mean_joint_attention(&self) -> Vec<f64> {
        self.joint
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct Trace {
    pub frames: usize,
    pub joints: usize,
    /// tanh joint embeddings, `T x J x E`.
    pub emb: Vec<f64>,
    /// tanh joint-attention hidden units, `T x J x A`.
    pub att_units: Vec<f64>,
    /// Joint attention, `T x J`.
    pub joint_att: Vec<f64>,
    /// Pooled frame inputs, `T x E`.
    pub pooled: Vec<f64>,
    /// Activated gates `[i, f, o, g]`, `T x 4H`.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
    /// tanh temporal-attention hidden units, `T x A`.
    pub temp_units: Vec<f64>,
    pub temporal: Vec<f64>,
    pub context: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Trace {
    pub fn hidden_at(&self, t: usize, h: usize) -> &[f64] {
        &self.hidden[t * h..(t + 1) * h]
    }

    pub fn into_output(self, h: usize) -> AttentionOutput {
        let joint = (0..self.joints)
            .map(|j| (0..self.frames).map(|t| self.joint_att[t * self.joints + j]).collect())
            .collect();
        AttentionOutput {
            temporal: self.temporal,
            joint,
            class_scores: self.probs,
            hidden_states: self.hidden.chunks_exact(h).map(<[f64]>::to_vec).collect(),
        }
    }
}

pub fn forward(params: &NetParams, seq: &SkeletonSequence) -> Result<AttentionOutput> {
    let feats = SequenceFeatures::from_sequence(seq);
    let trace = run(params, &feats)?;
    Ok(trace.into_output(params.hidden_size()))
}

pub(crate) fn run(params: &NetParams, feats: &SequenceFeatures) -> Result<Trace> {
    if feats.joints != params.joint_count {
        return Err(KifaError::ShapeMismatch(format!(
            "sequence has {} joints, network expects {}",
            feats.joints, params.joint_count
        )));
    }
    if feats.frames == 0 {
        return Err(KifaError::TooShort { frames: 0 });
    }
    let (t_len, jn) = (feats.frames, feats.joints);
    let (e, h, a) = (params.embed_size(), params.hidden_size(), params.attention_size());

    let mut tr = Trace {
        frames: t_len,
        joints: jn,
        emb: vec![0.0; t_len * jn * e],
        att_units: vec![0.0; t_len * jn * a],
        joint_att: vec![0.0; t_len * jn],
        pooled: vec![0.0; t_len * e],
        gates: vec![0.0; t_len * 4 * h],
        cell: vec![0.0; t_len * h],
        cell_tanh: vec![0.0; t_len * h],
        hidden: vec![0.0; t_len * h],
        temp_units: vec![0.0; t_len * a],
        temporal: vec![0.0; t_len],
        context: vec![0.0; h],
        probs: vec![0.0; params.class_count()],
    };

    let zeros_h = vec![0.0; h];
    let mut query = vec![0.0; a];
    let mut pre = vec![0.0; 4 * h];
    for t in 0..t_len {
        let (h_prev, c_prev): (Vec<f64>, Vec<f64>) = if t == 0 {
            (zeros_h.clone(), zeros_h.clone())
        } else {
            (
                tr.hidden[(t - 1) * h..t * h].to_vec(),
                tr.cell[(t - 1) * h..t * h].to_vec(),
            )
        };

        // Joint attention, conditioned on the previous hidden state.
        query.copy_from_slice(&params.joint_att_bias.data);
        params.joint_att_hidden.mul_add(&h_prev, &mut query);
        let scores = &mut tr.joint_att[t * jn..(t + 1) * jn];
        for j in 0..jn {
            let emb = &mut tr.emb[(t * jn + j) * e..(t * jn + j + 1) * e];
            emb.copy_from_slice(params.joint_embed.row(j));
            params.input_proj.mul_add(feats.at(t, j), emb);
            emb.iter_mut().for_each(|v| *v = v.tanh());

            let units = &mut tr.att_units[(t * jn + j) * a..(t * jn + j + 1) * a];
            units.copy_from_slice(&query);
            params.joint_att_embed.mul_add(emb, units);
            units.iter_mut().for_each(|v| *v = v.tanh());
            scores[j] = dot(&params.joint_att_score.data, units);
        }
        softmax_in_place(scores);

        let pooled = &mut tr.pooled[t * e..(t + 1) * e];
        for j in 0..jn {
            let w = tr.joint_att[t * jn + j];
            let emb = &tr.emb[(t * jn + j) * e..(t * jn + j + 1) * e];
            for (p, v) in pooled.iter_mut().zip(emb) {
                *p += w * v;
            }
        }

        // Gated recurrent cell.
        pre.copy_from_slice(&params.cell_bias.data);
        params.cell_input.mul_add(pooled, &mut pre);
        params.cell_recurrent.mul_add(&h_prev, &mut pre);
        let gates = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..3 * h {
            gates[k] = sigmoid(pre[k]);
        }
        for k in 3 * h..4 * h {
            gates[k] = pre[k].tanh();
        }
        for k in 0..h {
            let c = gates[h + k] * c_prev[k] + gates[k] * gates[3 * h + k];
            let ct = c.tanh();
            tr.cell[t * h + k] = c;
            tr.cell_tanh[t * h + k] = ct;
            tr.hidden[t * h + k] = gates[2 * h + k] * ct;
        }
    }

    // Additive temporal attention over hidden states.
    for t in 0..t_len {
        let units = &mut tr.temp_units[t * a..(t + 1) * a];
        units.copy_from_slice(&params.temporal_att_bias.data);
        params
            .temporal_att_hidden
            .mul_add(&tr.hidden[t * h..(t + 1) * h], units);
        units.iter_mut().for_each(|v| *v = v.tanh());
        tr.temporal[t] = dot(&params.temporal_att_score.data, units);
    }
    softmax_in_place(&mut tr.temporal);
    for t in 0..t_len {
        let w = tr.temporal[t];
        for k in 0..h {
            tr.context[k] += w * tr.hidden[t * h + k];
        }
    }

    tr.probs.copy_from_slice(&params.classifier_bias.data);
    params.classifier.mul_add(&tr.context, &mut tr.probs);
    softmax_in_place(&mut tr.probs);
    Ok(tr)
}
