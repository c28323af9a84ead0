//! Dataset layout on disk and the train/validation split.
//!
//! Directory convention: `<root>/<snr>/<machine>/<machine_id>/{normal,abnormal}/*.wav`.
//! The last `M` normal files by name (where `M` is the abnormal count) are
//! held out for validation; all remaining normal files form the training set.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::AudioClip;
use crate::metrics::Label;
use crate::pipeline::synth::SynthSet;
use crate::pipeline::wav::{load_wav, write_wav, WavEncoding};

/// Environment variable consulted for the dataset root when none is given.
pub const DATA_ROOT_ENV: &str = "SPECDENOISE_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub machine: String,
    pub machine_id: String,
    pub snr_tag: String,
}

/// Identifies the machine a set of results belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunIdent {
    pub machine: String,
    pub machine_id: String,
    pub snr: String,
}

#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub label: Label,
    pub clip: AudioClip,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub train: Vec<Recording>,
    pub valid: Vec<Recording>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<PathBuf>,
    pub valid: Vec<(PathBuf, Label)>,
}

impl DatasetLayout {
    pub fn new(
        root: impl Into<PathBuf>,
        machine: impl Into<String>,
        machine_id: impl Into<String>,
        snr_tag: impl Into<String>,
    ) -> Self {
        Self {
            root: root.into(),
            machine: machine.into(),
            machine_id: machine_id.into(),
            snr_tag: snr_tag.into(),
        }
    }

    pub fn ident(&self) -> RunIdent {
        RunIdent {
            machine: self.machine.clone(),
            machine_id: self.machine_id.clone(),
            snr: self.snr_tag.clone(),
        }
    }

    pub fn machine_dir(&self) -> PathBuf {
        self.root
            .join(&self.snr_tag)
            .join(&self.machine)
            .join(&self.machine_id)
    }

    pub fn class_dir(&self, label: Label) -> PathBuf {
        self.machine_dir().join(label.to_string())
    }

    /// Sorted `.wav` files of one class.
    pub fn list(&self, label: Label) -> Result<Vec<PathBuf>> {
        let dir = self.class_dir(label);
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", dir.display())))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry?.path();
            let is_wav = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if path.is_file() && is_wav {
                files.push(path);
            }
        }
        files.sort();
        Ok(files)
    }

    pub fn split(&self) -> Result<DatasetSplit> {
        let normal = self.list(Label::Normal)?;
        let abnormal = self.list(Label::Abnormal)?;
        let (train, held_out) = split_normals(normal, abnormal.len())?;
        let valid = held_out
            .into_iter()
            .map(|p| (p, Label::Normal))
            .chain(abnormal.into_iter().map(|p| (p, Label::Abnormal)))
            .collect();
        let split = DatasetSplit { train, valid };
        split.assert_disjoint()?;
        Ok(split)
    }

    pub fn load(&self) -> Result<LoadedDataset> {
        let split = self.split()?;
        let read = |path: &Path, label| -> Result<Recording> {
            Ok(Recording {
                id: recording_id(path),
                label,
                clip: load_wav(path)?,
            })
        };
        Ok(LoadedDataset {
            train: split
                .train
                .iter()
                .map(|p| read(p, Label::Normal))
                .collect::<Result<_>>()?,
            valid: split
                .valid
                .iter()
                .map(|(p, l)| read(p, *l))
                .collect::<Result<_>>()?,
        })
    }

    /// Writes a synthetic set under this layout as `normal/NNNNNN.wav` and
    /// `abnormal/NNNNNN.wav`.
    pub fn write_synth(&self, set: &SynthSet, encoding: WavEncoding) -> Result<()> {
        for label in [Label::Normal, Label::Abnormal] {
            std::fs::create_dir_all(self.class_dir(label))?;
        }
        let mut counters = [0usize; 2];
        for (clip, label) in set.clips.iter().zip(&set.labels) {
            let slot = &mut counters[*label as usize];
            let path = self.class_dir(*label).join(format!("{:06}.wav", *slot));
            *slot += 1;
            write_wav(path, clip, encoding)?;
        }
        Ok(())
    }
}

impl DatasetSplit {
    pub fn assert_disjoint(&self) -> Result<()> {
        let train: HashSet<&PathBuf> = self.train.iter().collect();
        if let Some((p, _)) = self.valid.iter().find(|(p, _)| train.contains(p)) {
            return Err(Error::Dataset(format!(
                "{} appears in both training and validation",
                p.display()
            )));
        }
        Ok(())
    }
}

/// `(train, held-out)`: the last `n_abnormal` normals are held out.
fn split_normals<T>(mut normal: Vec<T>, n_abnormal: usize) -> Result<(Vec<T>, Vec<T>)> {
    if n_abnormal == 0 {
        return Err(Error::Dataset("no abnormal recordings for validation".into()));
    }
    if normal.len() <= n_abnormal {
        return Err(Error::Dataset(format!(
            "{} normal recordings cannot cover {n_abnormal} validation normals plus training",
            normal.len()
        )));
    }
    let held = normal.split_off(normal.len() - n_abnormal);
    Ok((normal, held))
}

fn recording_id(path: &Path) -> String {
    let parent = path
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{parent}/{stem}")
}

impl LoadedDataset {
    /// Applies the same split rule to an in-memory synthetic set (clips keep
    /// their order within each class).
    pub fn from_synth(set: &SynthSet) -> Result<Self> {
        let mut normal = Vec::new();
        let mut abnormal = Vec::new();
        for (clip, label) in set.clips.iter().zip(&set.labels) {
            let (bucket, tag) = match label {
                Label::Normal => (&mut normal, "normal"),
                Label::Abnormal => (&mut abnormal, "abnormal"),
            };
            bucket.push(Recording {
                id: format!("{tag}/{:06}", bucket.len()),
                label: *label,
                clip: clip.clone(),
            });
        }
        let n_abnormal = abnormal.len();
        let (train, held) = split_normals(normal, n_abnormal)?;
        let valid = held.into_iter().chain(abnormal).collect();
        Ok(Self { train, valid })
    }
}
