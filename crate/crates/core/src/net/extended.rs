//! Double-double arithmetic and a naive forward pass evaluated in it.
//!
//! Used only as the finite-difference oracle for the gradient check: at f64
//! the loss is quantized to about 2e-16, which limits central differences to
//! roughly 1e-11 absolute and swamps gradients near 1e-8.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{NetParams, SequenceFeatures, FEATURES};
use crate::kinetics::LOG_FLOOR;
use crate::math::Mat;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

const LN_2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale(self, factor: f64) -> Dd {
        Dd {
            hi: self.hi * factor,
            lo: self.lo * factor,
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN_2.hi).round();
        let r = (self - LN_2.scale(k)).scale(1.0 / 1024.0);
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for n in 1..30 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scale(2f64.powi(k as i32))
    }

    pub fn ln(self) -> Dd {
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn tanh(self) -> Dd {
        let e = (-(self.scale(2.0).abs())).exp();
        let t = (Dd::ONE - e) / (Dd::ONE + e);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    pub fn sigmoid(self) -> Dd {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }

    fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p);
        quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

struct DdMat {
    cols: usize,
    data: Vec<Dd>,
}

impl DdMat {
    fn at(&self, r: usize, c: usize) -> Dd {
        self.data[r * self.cols + c]
    }

    /// `bias[r] + Σ_c self[r][c] x[c]` for every row.
    fn affine(&self, bias: Option<&DdMat>, x: &[Dd]) -> Vec<Dd> {
        let rows = self.data.len() / self.cols;
        (0..rows)
            .map(|r| {
                let mut acc = bias.map_or(Dd::ZERO, |b| b.data[r]);
                for (c, &xc) in x.iter().enumerate() {
                    acc = acc + self.at(r, c) * xc;
                }
                acc
            })
            .collect()
    }
}

fn softmax(v: &[Dd]) -> Vec<Dd> {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.hi));
    let e: Vec<Dd> = v.iter().map(|&x| (x - Dd::from(max)).exp()).collect();
    let total = e.iter().fold(Dd::ZERO, |s, &x| s + x);
    e.into_iter().map(|x| x / total).collect()
}

fn clamped_ln(x: Dd) -> Dd {
    if x.hi < LOG_FLOOR {
        Dd::from(LOG_FLOOR).ln()
    } else {
        x.ln()
    }
}

/// Penalized loss with one parameter shifted by `delta`, evaluated in
/// double-double from the f64 parameters.
pub(crate) fn penalized_loss_dd(
    params: &NetParams,
    feats: &SequenceFeatures,
    label: usize,
    reference: &[f64],
    weight: f64,
    shift: (usize, usize, f64),
) -> Dd {
    let lift = |ti: usize, m: &Mat| DdMat {
        cols: m.cols,
        data: m
            .data
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if (ti, k) == (shift.0, shift.1) {
                    Dd::from(v) + Dd::from(shift.2)
                } else {
                    Dd::from(v)
                }
            })
            .collect(),
    };
    let w: Vec<DdMat> = params
        .tensors()
        .iter()
        .enumerate()
        .map(|(ti, m)| lift(ti, m))
        .collect();
    let [input_proj, joint_embed, att_embed, att_hidden, att_bias, att_score, cell_in, cell_rec, cell_bias, t_hidden, t_bias, t_score, classifier, class_bias] =
        &w[..]
    else {
        unreachable!("fourteen tensors")
    };

    let (t_len, jn) = (feats.frames, feats.joints);
    let h = params.hidden_size();
    let mut h_prev = vec![Dd::ZERO; h];
    let mut c_prev = vec![Dd::ZERO; h];
    let mut hidden = Vec::with_capacity(t_len);
    let mut att_sum = vec![Dd::ZERO; jn];
    for t in 0..t_len {
        let query = att_hidden.affine(Some(att_bias), &h_prev);
        let mut embs = Vec::with_capacity(jn);
        let mut scores = Vec::with_capacity(jn);
        for j in 0..jn {
            let f: Vec<Dd> = feats.at(t, j).iter().map(|&v| Dd::from(v)).collect();
            debug_assert_eq!(f.len(), FEATURES);
            let pre = input_proj.affine(None, &f);
            let emb: Vec<Dd> = pre
                .iter()
                .enumerate()
                .map(|(k, &p)| (p + joint_embed.at(j, k)).tanh())
                .collect();
            let units = att_embed.affine(None, &emb);
            let score = units
                .iter()
                .zip(&query)
                .enumerate()
                .fold(Dd::ZERO, |s, (k, (&u, &q))| s + att_score.data[k] * (u + q).tanh());
            embs.push(emb);
            scores.push(score);
        }
        let att = softmax(&scores);
        let mut pooled = vec![Dd::ZERO; embs[0].len()];
        for (j, emb) in embs.iter().enumerate() {
            att_sum[j] = att_sum[j] + att[j];
            for (p, &e) in pooled.iter_mut().zip(emb) {
                *p = *p + att[j] * e;
            }
        }
        let x = cell_in.affine(Some(cell_bias), &pooled);
        let r = cell_rec.affine(None, &h_prev);
        let pre: Vec<Dd> = x.into_iter().zip(r).map(|(a, b)| a + b).collect();
        let mut h_new = vec![Dd::ZERO; h];
        for k in 0..h {
            let i = pre[k].sigmoid();
            let f = pre[h + k].sigmoid();
            let o = pre[2 * h + k].sigmoid();
            let g = pre[3 * h + k].tanh();
            c_prev[k] = f * c_prev[k] + i * g;
            h_new[k] = o * c_prev[k].tanh();
        }
        hidden.push(h_new.clone());
        h_prev = h_new;
    }

    let temporal_scores: Vec<Dd> = hidden
        .iter()
        .map(|ht| {
            t_hidden
                .affine(Some(t_bias), ht)
                .into_iter()
                .enumerate()
                .fold(Dd::ZERO, |s, (k, u)| s + t_score.data[k] * u.tanh())
        })
        .collect();
    let temporal = softmax(&temporal_scores);
    let mut context = vec![Dd::ZERO; h];
    for (ht, &a) in hidden.iter().zip(&temporal) {
        for (c, &v) in context.iter_mut().zip(ht) {
            *c = *c + a * v;
        }
    }
    let probs = softmax(&classifier.affine(Some(class_bias), &context));
    let mut loss = -clamped_ln(probs[label]);
    if weight != 0.0 {
        let frames = Dd::from(t_len as f64);
        let mean: Vec<Dd> = att_sum.into_iter().map(|s| s / frames).collect();
        let q = softmax(&mean);
        let mut cross = Dd::ZERO;
        for (&p, &qj) in reference.iter().zip(&q) {
            cross = cross - Dd::from(p) * clamped_ln(qj);
        }
        loss = loss + Dd::from(weight) * cross;
    }
    loss
}
