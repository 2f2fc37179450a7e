use super::forward::{run, AttentionOutput, Trace};
use super::{NetParams, SequenceFeatures};
use crate::error::Result;
use crate::kinetics::{safe_ln, LOG_FLOOR};
use crate::math::{axpy, dot, softmax, softmax_backward};
use crate::skeleton::SkeletonSequence;

/// Reference joint distribution and multiplier for the attention penalty.
#[derive(Debug, Clone, Copy)]
pub struct Penalty<'a> {
    pub reference: &'a [f64],
    pub weight: f64,
}

/// Classification cross-entropy plus `lambda_pen` times the cross-entropy of
/// the input joint distribution `q` against the category reference `p`.
///
/// The penalty is added, not subtracted: subtracting a non-negative
/// cross-entropy would reward attention that drifts away from the reference.
pub fn penalized_loss(output: &AttentionOutput, label: usize, q: &[f64], p: &[f64], lambda_pen: f64) -> f64 {
    let ce = -safe_ln(output.class_scores[label]);
    if lambda_pen == 0.0 {
        return ce;
    }
    ce + lambda_pen * cross_entropy(p, q)
}

fn cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    -p.iter().zip(q).map(|(&pj, &qj)| pj * safe_ln(qj)).sum::<f64>()
}

/// Loss and gradient for one labeled sequence.
pub fn loss_and_grad(
    params: &NetParams,
    seq: &SkeletonSequence,
    label: usize,
    penalty: Option<Penalty<'_>>,
) -> Result<(f64, NetParams)> {
    let feats = SequenceFeatures::from_sequence(seq);
    let mut grads = params.zeros_like();
    let loss = accumulate(params, &feats, label, penalty, &mut grads)?;
    Ok((loss, grads))
}

/// Forward and backward pass; adds the gradient into `g` and returns the
/// loss.
pub(crate) fn accumulate(
    params: &NetParams,
    feats: &SequenceFeatures,
    label: usize,
    penalty: Option<Penalty<'_>>,
    g: &mut NetParams,
) -> Result<f64> {
    let tr = run(params, feats)?;
    Ok(backward(params, feats, &tr, label, penalty, g))
}

fn backward(
    params: &NetParams,
    feats: &SequenceFeatures,
    tr: &Trace,
    label: usize,
    penalty: Option<Penalty<'_>>,
    g: &mut NetParams,
) -> f64 {
    let (t_len, jn) = (tr.frames, tr.joints);
    let (e, h, a) = (params.embed_size(), params.hidden_size(), params.attention_size());

    let py = tr.probs[label];
    let mut loss = -safe_ln(py);
    let mut dlogits = vec![0.0; tr.probs.len()];
    if py > LOG_FLOOR {
        dlogits.copy_from_slice(&tr.probs);
        dlogits[label] -= 1.0;
    }

    // Penalty gradient with respect to the time-averaged joint attention.
    let mut dmean = vec![0.0; jn];
    if let Some(pen) = penalty.filter(|p| p.weight != 0.0) {
        let mean: Vec<f64> = (0..jn)
            .map(|j| (0..t_len).map(|t| tr.joint_att[t * jn + j]).sum::<f64>() / t_len as f64)
            .collect();
        let q = softmax(&mean);
        loss += pen.weight * cross_entropy(pen.reference, &q);
        let dq: Vec<f64> = q
            .iter()
            .zip(pen.reference)
            .map(|(&qj, &pj)| if qj > LOG_FLOOR { -pen.weight * pj / qj } else { 0.0 })
            .collect();
        softmax_backward(&q, &dq, &mut dmean);
        for d in dmean.iter_mut() {
            *d /= t_len as f64;
        }
    }

    g.classifier.add_outer(&dlogits, &tr.context);
    axpy(1.0, &dlogits, &mut g.classifier_bias.data);
    let mut dctx = vec![0.0; h];
    params.classifier.mul_t_add(&dlogits, &mut dctx);

    // Temporal attention.
    let mut dh = vec![0.0; t_len * h];
    let da: Vec<f64> = (0..t_len).map(|t| dot(tr.hidden_at(t, h), &dctx)).collect();
    let mut du = vec![0.0; t_len];
    softmax_backward(&tr.temporal, &da, &mut du);
    let mut dpre_a = vec![0.0; a];
    for t in 0..t_len {
        let dh_t = &mut dh[t * h..(t + 1) * h];
        axpy(tr.temporal[t], &dctx, dh_t);
        let units = &tr.temp_units[t * a..(t + 1) * a];
        axpy(du[t], units, &mut g.temporal_att_score.data);
        for k in 0..a {
            let m = units[k];
            dpre_a[k] = du[t] * params.temporal_att_score.data[k] * (1.0 - m * m);
        }
        g.temporal_att_hidden.add_outer(&dpre_a, tr.hidden_at(t, h));
        axpy(1.0, &dpre_a, &mut g.temporal_att_bias.data);
        params.temporal_att_hidden.mul_t_add(&dpre_a, dh_t);
    }

    // Back through time.
    let zeros_h = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dpre = vec![0.0; 4 * h];
    let mut dpooled = vec![0.0; e];
    let mut dh_prev = vec![0.0; h];
    let mut da_joint = vec![0.0; jn];
    let mut ds = vec![0.0; jn];
    let mut dquery = vec![0.0; a];
    let mut de = vec![0.0; e];
    let mut dunits = vec![0.0; a];
    for t in (0..t_len).rev() {
        let gates = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
        let h_prev = if t == 0 { &zeros_h[..] } else { tr.hidden_at(t - 1, h) };
        let c_prev = if t == 0 { &zeros_h[..] } else { &tr.cell[(t - 1) * h..t * h] };
        for k in 0..h {
            let (gi, gf, go, gg) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let ct = tr.cell_tanh[t * h + k];
            let dh_k = dh[t * h + k] + dh_next[k];
            let dc = dc_next[k] + dh_k * go * (1.0 - ct * ct);
            dpre[k] = dc * gg * gi * (1.0 - gi);
            dpre[h + k] = dc * c_prev[k] * gf * (1.0 - gf);
            dpre[2 * h + k] = dh_k * ct * go * (1.0 - go);
            dpre[3 * h + k] = dc * gi * (1.0 - gg * gg);
            dc_next[k] = dc * gf;
        }
        let pooled = &tr.pooled[t * e..(t + 1) * e];
        g.cell_input.add_outer(&dpre, pooled);
        g.cell_recurrent.add_outer(&dpre, h_prev);
        axpy(1.0, &dpre, &mut g.cell_bias.data);
        dpooled.iter_mut().for_each(|v| *v = 0.0);
        params.cell_input.mul_t_add(&dpre, &mut dpooled);
        dh_prev.iter_mut().for_each(|v| *v = 0.0);
        params.cell_recurrent.mul_t_add(&dpre, &mut dh_prev);

        // Joint attention at frame t.
        let att = &tr.joint_att[t * jn..(t + 1) * jn];
        for j in 0..jn {
            let emb = &tr.emb[(t * jn + j) * e..(t * jn + j + 1) * e];
            da_joint[j] = dot(emb, &dpooled) + dmean[j];
        }
        softmax_backward(att, &da_joint, &mut ds);
        dquery.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..jn {
            let emb = &tr.emb[(t * jn + j) * e..(t * jn + j + 1) * e];
            let units = &tr.att_units[(t * jn + j) * a..(t * jn + j + 1) * a];
            for k in 0..e {
                de[k] = att[j] * dpooled[k];
            }
            axpy(ds[j], units, &mut g.joint_att_score.data);
            for k in 0..a {
                let u = units[k];
                dunits[k] = ds[j] * params.joint_att_score.data[k] * (1.0 - u * u);
            }
            g.joint_att_embed.add_outer(&dunits, emb);
            params.joint_att_embed.mul_t_add(&dunits, &mut de);
            axpy(1.0, &dunits, &mut dquery);
            for k in 0..e {
                de[k] *= 1.0 - emb[k] * emb[k];
            }
            g.input_proj.add_outer(&de, feats.at(t, j));
            axpy(1.0, &de, g.joint_embed.row_mut(j));
        }
        axpy(1.0, &dquery, &mut g.joint_att_bias.data);
        g.joint_att_hidden.add_outer(&dquery, h_prev);
        params.joint_att_hidden.mul_t_add(&dquery, &mut dh_prev);
        dh_next.copy_from_slice(&dh_prev);
    }
    loss
}
