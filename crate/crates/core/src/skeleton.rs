//! Skeleton sequences: the data model, the CSV file format, normalization and
//! per-frame displacement magnitudes.
//!
//! A sequence file looks like
//!
//! ```text
//! #kifa-skeleton v1,S=1,J=2
//! 0,x00,y00,z00,x01,y01,z01
//! 1,...
//! ```
//!
//! with one row per frame, coordinates ordered subject-major then joint-major
//! and every decimal written with 17 significant digits so that a
//! parse/serialize cycle is bit-exact.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};

pub const HEADER_TAG: &str = "#kifa-skeleton v1";
pub const DEFAULT_JOINTS: usize = 15;

pub type Point3 = [f64; 3];

/// The five recognizable actions, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Approaching,
    Punching,
    Kicking,
    Hugging,
    Pushing,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Approaching,
        Action::Punching,
        Action::Kicking,
        Action::Hugging,
        Action::Pushing,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Approaching => "approaching",
            Action::Punching => "punching",
            Action::Kicking => "kicking",
            Action::Hugging => "hugging",
            Action::Pushing => "pushing",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = KifaError;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| KifaError::Config(format!("unknown action `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Mild,
    Intense,
    Unlabeled,
}

impl Intensity {
    pub fn name(self) -> &'static str {
        match self {
            Intensity::Mild => "mild",
            Intensity::Intense => "intense",
            Intensity::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Intensity {
    type Err = KifaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mild" => Ok(Intensity::Mild),
            "intense" => Ok(Intensity::Intense),
            "unlabeled" => Ok(Intensity::Unlabeled),
            _ => Err(KifaError::Config(format!("unknown intensity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// `subject_count * joint_count` positions, subject-major.
    pub joints: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<Frame>,
    pub subject_count: usize,
    pub joint_count: usize,
    pub sequence_id: String,
}

impl SkeletonSequence {
    /// Builds a sequence and checks every invariant.
    pub fn new(
        frames: Vec<Frame>,
        subject_count: usize,
        joint_count: usize,
        sequence_id: impl Into<String>,
    ) -> Result<Self> {
        let seq = SkeletonSequence {
            frames,
            subject_count,
            joint_count,
            sequence_id: sequence_id.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.subject_count) {
            return Err(KifaError::ShapeMismatch(format!(
                "subject count {} not in 1..=2",
                self.subject_count
            )));
        }
        if self.joint_count == 0 {
            return Err(KifaError::ShapeMismatch("joint count is zero".into()));
        }
        if self.frames.len() < 2 {
            return Err(KifaError::TooShort {
                frames: self.frames.len(),
            });
        }
        let width = self.total_joints();
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.joints.len() != width {
                return Err(KifaError::ShapeMismatch(format!(
                    "frame {} has {} joints, expected {width}",
                    frame.index,
                    frame.joints.len()
                )));
            }
            if frame.joints.iter().flatten().any(|v| !v.is_finite()) {
                return Err(KifaError::NonFiniteValue { line: i + 2 });
            }
            if i > 0 && frame.index <= self.frames[i - 1].index {
                return Err(KifaError::BadValue {
                    line: i + 2,
                    reason: "frame indices must be strictly increasing".into(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// S·J, the number of tracked points per frame.
    pub fn total_joints(&self) -> usize {
        self.subject_count * self.joint_count
    }

    pub fn map_coords(&self, mut f: impl FnMut(Point3) -> Point3) -> SkeletonSequence {
        let frames = self
            .frames
            .iter()
            .map(|fr| Frame {
                index: fr.index,
                joints: fr.joints.iter().map(|&p| f(p)).collect(),
            })
            .collect();
        SkeletonSequence {
            frames,
            subject_count: self.subject_count,
            joint_count: self.joint_count,
            sequence_id: self.sequence_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sequence: SkeletonSequence,
    pub action: Action,
    pub intensity: Intensity,
}

fn header_line(subjects: usize, joints: usize) -> String {
    format!("{HEADER_TAG},S={subjects},J={joints}")
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || KifaError::MalformedHeader(line.to_string());
    let mut parts = line.trim().split(',');
    if parts.next().map(str::trim) != Some(HEADER_TAG) {
        return Err(bad());
    }
    let mut field = |key: &str| -> Result<usize> {
        let part = parts.next().ok_or_else(bad)?.trim();
        part.strip_prefix(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)
    };
    let s = field("S=")?;
    let j = field("J=")?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((s, j))
}

/// Parses the CSV sequence format. The returned sequence has an empty id;
/// callers loading from disk usually set it from the file name.
pub fn parse_sequence(raw_text: &str) -> Result<SkeletonSequence> {
    let mut lines = raw_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| KifaError::MalformedHeader("empty input".into()))?;
    let (subjects, joints) = parse_header(header)?;
    if !(1..=2).contains(&subjects) || joints == 0 {
        return Err(KifaError::MalformedHeader(header.to_string()));
    }
    let width = subjects * joints;
    let expected = 1 + 3 * width;

    let mut frames = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != expected {
            return Err(KifaError::MalformedRow {
                line: line_no,
                expected,
                found: cols.len(),
            });
        }
        let index: usize = cols[0].parse().map_err(|_| KifaError::BadValue {
            line: line_no,
            reason: format!("bad frame index `{}`", cols[0]),
        })?;
        let mut values = Vec::with_capacity(3 * width);
        for c in &cols[1..] {
            let v: f64 = c.parse().map_err(|_| KifaError::BadValue {
                line: line_no,
                reason: format!("bad number `{c}`"),
            })?;
            if !v.is_finite() {
                return Err(KifaError::NonFiniteValue { line: line_no });
            }
            values.push(v);
        }
        if let Some(prev) = frames.last().map(|f: &Frame| f.index) {
            if index <= prev {
                return Err(KifaError::BadValue {
                    line: line_no,
                    reason: "frame indices must be strictly increasing".into(),
                });
            }
        }
        let joints = values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        frames.push(Frame { index, joints });
    }
    if frames.len() < 2 {
        return Err(KifaError::TooShort {
            frames: frames.len(),
        });
    }
    SkeletonSequence::new(frames, subjects, joints, String::new())
}

/// Writes a decimal with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

pub fn serialize_sequence(seq: &SkeletonSequence) -> String {
    let mut out = header_line(seq.subject_count, seq.joint_count);
    out.push('\n');
    for frame in &seq.frames {
        write!(out, "{}", frame.index).unwrap();
        for v in frame.joints.iter().flatten() {
            out.push(',');
            fmt_f64(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// Moves each subject's anchor joint to the origin in every frame and scales
/// all coordinates so the frame-0 distance between the scale pair (taken on
/// subject 0) is one.
pub fn normalize_sequence(
    seq: &SkeletonSequence,
    anchor_joint: usize,
    scale_pair: (usize, usize),
) -> Result<SkeletonSequence> {
    let j = seq.joint_count;
    for index in [anchor_joint, scale_pair.0, scale_pair.1] {
        if index >= j {
            return Err(KifaError::JointOutOfRange { index, joints: j });
        }
    }
    let f0 = &seq.frames[0].joints;
    let scale = distance(f0[scale_pair.0], f0[scale_pair.1]);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(KifaError::DegenerateScale);
    }
    let frames = seq
        .frames
        .iter()
        .map(|fr| {
            let mut joints = Vec::with_capacity(fr.joints.len());
            for s in 0..seq.subject_count {
                let anchor = fr.joints[s * j + anchor_joint];
                for p in &fr.joints[s * j..(s + 1) * j] {
                    joints.push([
                        (p[0] - anchor[0]) / scale,
                        (p[1] - anchor[1]) / scale,
                        (p[2] - anchor[2]) / scale,
                    ]);
                }
            }
            Frame {
                index: fr.index,
                joints,
            }
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        subject_count: seq.subject_count,
        joint_count: seq.joint_count,
        sequence_id: seq.sequence_id.clone(),
    })
}

fn distance(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Per-frame motion magnitude: element 0 is zero, element t is the Euclidean
/// norm of the stacked joint displacement from frame t-1, divided by √(S·J).
pub fn displacement_magnitudes(seq: &SkeletonSequence) -> Vec<f64> {
    let norm = (seq.total_joints() as f64).sqrt();
    let mut out = Vec::with_capacity(seq.len());
    out.push(0.0);
    for pair in seq.frames.windows(2) {
        let sq: f64 = pair[1]
            .joints
            .iter()
            .zip(&pair[0].joints)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
            .sum();
        out.push(sq.sqrt() / norm);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_from(frames: Vec<Vec<Point3>>, s: usize, j: usize) -> SkeletonSequence {
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(index, joints)| Frame { index, joints })
            .collect();
        SkeletonSequence::new(frames, s, j, "t").unwrap()
    }

    #[test]
    fn parses_minimal_file() {
        let text = "#kifa-skeleton v1,S=1,J=2\n0,0,0,0,1,1,1\n1,0.5,0,0,1,1,1.5\n";
        let seq = parse_sequence(text).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.subject_count, 1);
        assert_eq!(seq.joint_count, 2);
        assert_eq!(seq.frames[1].joints[1], [1.0, 1.0, 1.5]);
    }

    #[test]
    fn rejects_short_row() {
        let text = "#kifa-skeleton v1,S=1,J=2\n0,0,0,0,1\n1,0,0,0,1,1,1\n";
        match parse_sequence(text) {
            Err(KifaError::MalformedRow {
                expected, found, ..
            }) => assert_eq!((expected, found), (7, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_single_frame() {
        let text = "#kifa-skeleton v1,S=1,J=2\n0,0,0,0,1,1,1\n";
        assert!(matches!(
            parse_sequence(text),
            Err(KifaError::TooShort { frames: 1 })
        ));
    }

    #[test]
    fn rejects_non_finite_and_bad_header() {
        let text = "#kifa-skeleton v1,S=1,J=1\n0,0,0,NaN\n1,0,0,0\n";
        assert!(matches!(
            parse_sequence(text),
            Err(KifaError::NonFiniteValue { line: 2 })
        ));
        assert!(matches!(
            parse_sequence("#skeleton,S=1,J=1\n"),
            Err(KifaError::MalformedHeader(_))
        ));
        let unordered = "#kifa-skeleton v1,S=1,J=1\n1,0,0,0\n0,0,0,0\n";
        assert!(matches!(
            parse_sequence(unordered),
            Err(KifaError::BadValue { .. })
        ));
    }

    #[test]
    fn displacement_hand_values() {
        let seq = seq_from(vec![vec![[0.0, 0.0, 0.0]], vec![[3.0, 4.0, 0.0]]], 1, 1);
        assert_eq!(displacement_magnitudes(&seq), vec![0.0, 5.0]);

        let still = seq_from(vec![vec![[1.0, 2.0, 3.0]; 2]; 4], 1, 2);
        assert!(displacement_magnitudes(&still).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn displacement_is_homogeneous() {
        let seq = seq_from(
            vec![
                vec![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]],
                vec![[0.4, 0.1, 0.3], [1.2, -0.7, 0.1]],
                vec![[0.9, 0.3, 0.2], [1.1, -0.2, 0.6]],
            ],
            1,
            2,
        );
        let base = displacement_magnitudes(&seq);
        let doubled = displacement_magnitudes(&seq.map_coords(|p| [2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]));
        for (a, b) in base.iter().zip(&doubled) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_properties() {
        let seq = seq_from(
            vec![
                vec![[1.0, 1.0, 1.0], [1.0, 3.0, 1.0], [2.0, 2.0, 0.0]],
                vec![[1.5, 1.0, 1.0], [1.0, 3.5, 1.0], [2.0, 2.5, 0.0]],
            ],
            1,
            3,
        );
        let n = normalize_sequence(&seq, 0, (0, 1)).unwrap();
        for f in &n.frames {
            assert_eq!(f.joints[0], [0.0, 0.0, 0.0]);
        }
        let d = distance(n.frames[0].joints[0], n.frames[0].joints[1]);
        assert!((d - 1.0).abs() < 1e-12);

        let again = normalize_sequence(&n, 0, (0, 1)).unwrap();
        for (a, b) in again.frames.iter().zip(&n.frames) {
            for (p, q) in a.joints.iter().zip(&b.joints) {
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() < 1e-12);
                }
            }
        }

        let scaled = seq.map_coords(|p| [10.0 * p[0], 10.0 * p[1], 10.0 * p[2]]);
        let ns = normalize_sequence(&scaled, 0, (0, 1)).unwrap();
        for (a, b) in ns.frames.iter().zip(&n.frames) {
            for (p, q) in a.joints.iter().zip(&b.joints) {
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalize_rejects_degenerate_scale() {
        let seq = seq_from(vec![vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]; 2], 1, 2);
        assert!(matches!(
            normalize_sequence(&seq, 0, (0, 1)),
            Err(KifaError::DegenerateScale)
        ));
        assert!(matches!(
            normalize_sequence(&seq, 5, (0, 1)),
            Err(KifaError::JointOutOfRange { .. })
        ));
    }

    fn arb_sequence() -> impl Strategy<Value = SkeletonSequence> {
        (1usize..=2, 1usize..=4, 2usize..=6).prop_flat_map(|(s, j, t)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::array::uniform3(-1e3f64..1e3), s * j),
                t,
            )
            .prop_map(move |frames| seq_from(frames, s, j))
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(seq in arb_sequence()) {
            let text = serialize_sequence(&seq);
            let mut back = parse_sequence(&text).unwrap();
            back.sequence_id = seq.sequence_id.clone();
            prop_assert_eq!(back, seq);
        }

        #[test]
        fn displacement_translation_invariant(
            seq in arb_sequence(),
            shift in proptest::array::uniform3(-10f64..10.0),
        ) {
            let moved = seq.map_coords(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]);
            let a = displacement_magnitudes(&seq);
            let b = displacement_magnitudes(&moved);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
