//! In-memory dataset types shared by the aggregation and evaluation stages.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dialogue::TurnRecord;
use crate::error::{Error, Result};

/// One speaker turn's time-ordered feature matrix, frames × dim, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    names: Arc<[String]>,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(names: Arc<[String]>, data: Vec<f64>) -> Result<Self> {
        let dim = names.len();
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.is_empty() {
            return Err(Error::EmptySequence);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InconsistentDimension {
                index: data.len() / dim,
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Self { names, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(names: Arc<[String]>, rows: &[R]) -> Result<Self> {
        let dim = names.len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (index, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::InconsistentDimension {
                    index,
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(names, data)
    }

    pub fn names(&self) -> &Arc<[String]> {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_schema(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.names, &other.names) || self.names == other.names
    }
}

/// Builds an `Arc<[String]>` schema from string-like names.
pub fn schema<S: AsRef<str>>(names: &[S]) -> Arc<[String]> {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    H,
    BD,
    BPD,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnosis::H => "H",
            Diagnosis::BD => "BD",
            Diagnosis::BPD => "BPD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Participant,
    Interviewer,
}

/// Whose turns feed aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerConfig {
    Participant,
    Interviewer,
    /// All turns interleaved chronologically.
    Both,
}

impl SpeakerConfig {
    pub fn includes(self, speaker: Speaker) -> bool {
        match self {
            SpeakerConfig::Participant => speaker == Speaker::Participant,
            SpeakerConfig::Interviewer => speaker == Speaker::Interviewer,
            SpeakerConfig::Both => true,
        }
    }
}

impl fmt::Display for SpeakerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeakerConfig::Participant => "participant",
            SpeakerConfig::Interviewer => "interviewer",
            SpeakerConfig::Both => "both",
        })
    }
}

/// A binary classification task over two diagnoses; the second is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    HvsBD,
    HvsBPD,
    BDvsBPD,
}

impl Task {
    pub fn classes(self) -> (Diagnosis, Diagnosis) {
        match self {
            Task::HvsBD => (Diagnosis::H, Diagnosis::BD),
            Task::HvsBPD => (Diagnosis::H, Diagnosis::BPD),
            Task::BDvsBPD => (Diagnosis::BD, Diagnosis::BPD),
        }
    }

    /// 0 for the negative class, 1 for the positive class, `None` if outside the task.
    pub fn label(self, d: Diagnosis) -> Option<u8> {
        let (neg, pos) = self.classes();
        if d == neg {
            Some(0)
        } else if d == pos {
            Some(1)
        } else {
            None
        }
    }

    pub fn all() -> [Task; 3] {
        [Task::HvsBD, Task::HvsBPD, Task::BDvsBPD]
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.classes();
        write!(f, "{a}/{b}")
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace(' ', "").to_ascii_uppercase().as_str() {
            "H/BD" => Ok(Task::HvsBD),
            "H/BPD" => Ok(Task::HvsBPD),
            "BD/BPD" => Ok(Task::BDvsBPD),
            _ => Err(Error::InvalidParameter(format!("unknown task {s:?}"))),
        }
    }
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Task {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Categorical control variables used for interaction screening.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Controls {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interviewer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
}

impl Controls {
    pub const NAMES: [&'static str; 3] = ["environment", "interviewer", "gender"];

    pub fn get(&self, name: &str) -> Option<&str> {
        match name {
            "environment" => self.environment.as_deref(),
            "interviewer" => self.interviewer.as_deref(),
            "gender" => self.gender.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectInfo {
    pub id: String,
    pub diagnosis: Diagnosis,
    pub severity: Option<f64>,
    pub controls: Controls,
}

/// One turn: timing metadata plus frame-level matrices keyed by feature-set name.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub record: TurnRecord,
    pub frames: BTreeMap<String, FeatureSequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interview {
    pub subject: SubjectInfo,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLevel {
    /// One matrix row per audio frame, supplied as per-turn files.
    Frame,
    /// One row per turn, computed from timing metadata.
    Turn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetDecl {
    pub name: String,
    pub level: FeatureLevel,
    pub columns: Vec<String>,
    /// Frame values are expected in [-1, 1] (per-turn amplitude scaling).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub turn_scaled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_sets: Vec<FeatureSetDecl>,
    pub interviews: Vec<Interview>,
}

impl Dataset {
    pub fn feature_set(&self, name: &str) -> Option<&FeatureSetDecl> {
        self.feature_sets.iter().find(|f| f.name == name)
    }
}
