//! Generalized bell membership `1 / (1 + |(x − c)/a|^{2b})` fitted by
//! damped Gauss-Newton (Levenberg-Marquardt) on `(c, ln a, ln b)`.

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};

const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellFit {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    /// Sum of squared residuals at the fitted parameters.
    pub residual: f64,
    pub iterations: usize,
}

impl BellFit {
    pub fn value(&self, x: f64) -> f64 {
        bell(x, self.c, self.a, self.b)
    }
}

pub fn bell(x: f64, c: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + ((x - c) / a).abs().powf(2.0 * b))
}

fn sse(x: &[f64], y: &[f64], p: [f64; 3]) -> f64 {
    let (a, b) = (p[1].exp(), p[2].exp());
    x.iter().zip(y).map(|(&xi, &yi)| (bell(xi, p[0], a, b) - yi).powi(2)).sum()
}

/// Value and gradient with respect to `(c, ln a, ln b)`.
fn bell_grad(x: f64, p: [f64; 3]) -> (f64, [f64; 3]) {
    let (c, a, b) = (p[0], p[1].exp(), p[2].exp());
    let r = (x - c) / a;
    if r == 0.0 {
        return (1.0, [0.0; 3]);
    }
    let u = r.abs().powf(2.0 * b);
    let f = 1.0 / (1.0 + u);
    let df_du = -f * f;
    (
        f,
        [
            df_du * (-2.0 * b * u / (r * a)),
            df_du * (-2.0 * b * u),
            df_du * (2.0 * b * u * r.abs().ln()),
        ],
    )
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let k = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= k * m[col][c];
            }
            v[row] -= k * v[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|c| m[row][c] * out[c]).sum();
        out[row] = (v[row] - tail) / m[row][row];
    }
    Some(out)
}

/// Least-squares fit from a membership-weighted moment initialization:
/// `c` is the weighted mean, `a` the weighted standard deviation, `b = 1`.
pub fn fit_bell_membership(x: &[f64], y: &[f64]) -> Result<BellFit> {
    if x.len() != y.len() {
        return Err(KifaError::DegenerateData(format!("{} weights vs {} scores", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(KifaError::DegenerateData("at least 3 points are required".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(KifaError::DegenerateData("non-finite input".into()));
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if lo == hi {
        return Err(KifaError::DegenerateData("all x values are equal".into()));
    }
    let total: f64 = y.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(KifaError::DegenerateData("scores carry no mass".into()));
    }
    let c0 = x.iter().zip(y).map(|(xi, yi)| xi * yi.max(0.0)).sum::<f64>() / total;
    let var = x.iter().zip(y).map(|(xi, yi)| (xi - c0).powi(2) * yi.max(0.0)).sum::<f64>() / total;
    let a0 = if var > 0.0 { var.sqrt() } else { (hi - lo) / 4.0 };

    let mut p = [c0, a0.ln(), 0.0];
    let mut err = sse(x, y, p);
    let mut damping = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jte = [0.0; 3];
        for (&xi, &yi) in x.iter().zip(y) {
            let (f, g) = bell_grad(xi, p);
            for r in 0..3 {
                jte[r] += g[r] * (f - yi);
                for c in 0..3 {
                    jtj[r][c] += g[r] * g[c];
                }
            }
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut m = jtj;
            for d in 0..3 {
                m[d][d] += damping * jtj[d][d].max(1e-12);
            }
            let Some(step) = solve3(m, [-jte[0], -jte[1], -jte[2]]) else {
                damping *= 4.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let trial_err = sse(x, y, trial);
            if trial_err.is_finite() && trial_err < err {
                let gain = err - trial_err;
                p = trial;
                err = trial_err;
                damping = (damping / 3.0).max(1e-15);
                improved = gain > 1e-15 * err.max(1e-300);
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Ok(BellFit {
        c: p[0],
        a: p[1].exp(),
        b: p[2].exp(),
        residual: err,
        iterations,
    })
}
