//! Dataset manifests and stratified k-fold splitting.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{KifaError, Result};
use crate::rng::seeded;
use crate::skeleton::{parse_sequence, Action, Intensity, LabeledSample};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub action: Action,
    pub intensity: Intensity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(seed: u64, entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            seed,
            entries,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(KifaError::Format(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KifaError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| KifaError::io(path, e))
    }

    /// Loads every referenced sequence. Sequence ids come from the file stem
    /// and must be unique.
    pub fn load_samples(&self, base_dir: &Path) -> Result<Vec<LabeledSample>> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|entry| {
                let path = base_dir.join(&entry.path);
                let text = fs::read_to_string(&path).map_err(|e| KifaError::io(&path, e))?;
                let mut sequence = parse_sequence(&text)
                    .map_err(|e| KifaError::Format(format!("{}: {e}", path.display())))?;
                sequence.sequence_id = entry
                    .path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                if !seen.insert(sequence.sequence_id.clone()) {
                    return Err(KifaError::Format(format!(
                        "duplicate sequence id `{}`",
                        sequence.sequence_id
                    )));
                }
                Ok(LabeledSample {
                    sequence,
                    action: entry.action,
                    intensity: entry.intensity,
                })
            })
            .collect()
    }
}

/// One cross-validation split, as sorted indices into the manifest entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split over (action, intensity) strata. Within a stratum
/// the members are shuffled with the seed, then dealt round-robin.
pub fn split_kfold(entries: &[(Action, Intensity)], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(KifaError::Config(format!("k must be at least 2, got {k}")));
    }
    let mut strata: BTreeMap<(Action, Intensity), Vec<usize>> = BTreeMap::new();
    for (i, key) in entries.iter().enumerate() {
        strata.entry(*key).or_default().push(i);
    }
    let mut fold_of = vec![0usize; entries.len()];
    let mut rng = seeded(seed, 0x6b66_6f6c_64);
    for ((action, intensity), members) in strata.iter_mut() {
        if members.len() < k {
            return Err(KifaError::InsufficientSamples(format!(
                "stratum {action}/{intensity} has {} entries, need at least {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, &idx) in members.iter().enumerate() {
            fold_of[idx] = pos % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..entries.len()).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

pub fn manifest_strata(manifest: &DatasetManifest) -> Vec<(Action, Intensity)> {
    manifest
        .entries
        .iter()
        .map(|e| (e.action, e.intensity))
        .collect()
}
