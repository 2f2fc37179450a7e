//! CSV exports of a sequence's attention for plotting.
//!
//! `temporal.csv` holds `t,a_t,d_t`; `joint.csv` holds `j,t,a_joint`. Values
//! are written with 17 significant digits and read back exactly.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{KifaError, Result};
use crate::kinetics::{intensity_score, KineticScore};
use crate::net::forward;
use crate::pipeline::PipelineSession;
use crate::skeleton::{displacement_magnitudes, fmt_f64, SkeletonSequence};

pub const TEMPORAL_FILE: &str = "temporal.csv";
pub const JOINT_FILE: &str = "joint.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport {
    pub temporal_path: PathBuf,
    pub joint_path: PathBuf,
    pub score: KineticScore,
}

/// Attention read back from an export directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedAttention {
    pub temporal: Vec<f64>,
    pub displacement: Vec<f64>,
    /// `joint[j][t]`.
    pub joint: Vec<Vec<f64>>,
}

pub fn export_attention(session: &PipelineSession, seq: &SkeletonSequence, out_dir: &Path, force: bool) -> Result<AttentionExport> {
    seq.validate()?;
    let out = forward(&session.params, seq)?;
    let d = displacement_magnitudes(seq);
    let score = intensity_score(&out.temporal, &out.joint, &d, session.config.eps)?;
    let temporal_path = out_dir.join(TEMPORAL_FILE);
    let joint_path = out_dir.join(JOINT_FILE);
    if !force {
        if let Some(p) = [&temporal_path, &joint_path].into_iter().find(|p| p.exists()) {
            return Err(KifaError::IoFailure(format!(
                "{} already exists (use --force to overwrite)",
                p.display()
            )));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| KifaError::io(out_dir, e))?;

    let mut temporal = String::from("t,a_t,d_t\n");
    for (t, (a, dt)) in out.temporal.iter().zip(&d).enumerate() {
        temporal.push_str(&format!("{t},"));
        fmt_f64(&mut temporal, *a);
        temporal.push(',');
        fmt_f64(&mut temporal, *dt);
        temporal.push('\n');
    }
    let mut joint = String::from("j,t,a_joint\n");
    for (j, row) in out.joint.iter().enumerate() {
        for (t, a) in row.iter().enumerate() {
            joint.push_str(&format!("{j},{t},"));
            fmt_f64(&mut joint, *a);
            joint.push('\n');
        }
    }
    fs::write(&temporal_path, temporal).map_err(|e| KifaError::io(&temporal_path, e))?;
    fs::write(&joint_path, joint).map_err(|e| KifaError::io(&joint_path, e))?;
    Ok(AttentionExport {
        temporal_path,
        joint_path,
        score,
    })
}

fn rows(path: &Path, header: &str, width: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| KifaError::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(header) {
        return Err(KifaError::MalformedHeader(format!("{}: expected `{header}`", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let cols: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cols.len() != width {
                return Err(KifaError::MalformedRow {
                    line: i + 2,
                    expected: width,
                    found: cols.len(),
                });
            }
            Ok(cols)
        })
        .collect()
}

fn number<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| KifaError::BadValue {
        line,
        reason: format!("cannot parse `{s}`"),
    })
}

pub fn read_attention_export(dir: &Path) -> Result<ImportedAttention> {
    let temporal_rows = rows(&dir.join(TEMPORAL_FILE), "t,a_t,d_t", 3)?;
    let mut temporal = Vec::with_capacity(temporal_rows.len());
    let mut displacement = Vec::with_capacity(temporal_rows.len());
    for (i, r) in temporal_rows.iter().enumerate() {
        if number::<usize>(&r[0], i + 2)? != i {
            return Err(KifaError::Format(format!("temporal row {} out of order", i + 2)));
        }
        temporal.push(number(&r[1], i + 2)?);
        displacement.push(number(&r[2], i + 2)?);
    }
    let frames = temporal.len();
    let mut joint: Vec<Vec<f64>> = Vec::new();
    for (i, r) in rows(&dir.join(JOINT_FILE), "j,t,a_joint", 3)?.iter().enumerate() {
        let (j, t): (usize, usize) = (number(&r[0], i + 2)?, number(&r[1], i + 2)?);
        if j == joint.len() && t == 0 {
            joint.push(Vec::with_capacity(frames));
        }
        if j + 1 != joint.len() || t != joint[j].len() || t >= frames {
            return Err(KifaError::Format(format!("joint row {} out of order", i + 2)));
        }
        joint[j].push(number(&r[2], i + 2)?);
    }
    if joint.iter().any(|row| row.len() != frames) {
        return Err(KifaError::Format("joint export does not cover every frame".into()));
    }
    Ok(ImportedAttention {
        temporal,
        displacement,
        joint,
    })
}
