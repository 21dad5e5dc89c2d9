//! Manifest JSON and per-turn CSV matrices: parsing, validation, ingestion.
//!
//! ```json
//! {
//!   "name": "study",
//!   "min_turn_s": 2.0,
//!   "feature_sets": [
//!     {"name": "acoustic", "level": "frame", "columns": ["f1", "f2"], "turn_scaled": true},
//!     {"name": "dialogue", "level": "turn", "columns": ["TL", "WPS", "TSO"]}
//!   ],
//!   "subjects": [{
//!     "id": "S001", "diagnosis": "BD", "severity": 12.0,
//!     "controls": {"environment": "room", "interviewer": "I1", "gender": "F"},
//!     "turns": [{
//!       "speaker": "participant", "start_s": 0.0, "end_s": 4.2, "word_count": 9,
//!       "voiced_segments": [[0.1, 2.0], [2.4, 4.0]],
//!       "matrices": {"acoustic": "S001/turn_000.csv"}
//!     }]
//!   }]
//! }
//! ```
//!
//! Matrix paths are relative to the manifest's directory. Turn-level sets are
//! computed from timing metadata; their columns must be dialogue feature names.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    Controls, Dataset, Diagnosis, FeatureLevel, FeatureSequence, FeatureSetDecl, Interview,
    SubjectInfo, Turn,
};
use crate::dialogue::{filter_short_turns, validate_turns, TurnRecord, DIALOGUE_FEATURES, MIN_TURN_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_turn_s: Option<f64>,
    pub feature_sets: Vec<FeatureSetDecl>,
    pub subjects: Vec<ManifestSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSubject {
    pub id: String,
    pub diagnosis: Diagnosis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<f64>,
    #[serde(default)]
    pub controls: Controls,
    pub turns: Vec<ManifestTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTurn {
    #[serde(flatten)]
    pub record: TurnRecord,
    /// Feature-set name to CSV path.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub matrices: BTreeMap<String, String>,
}

/// One problem found while ingesting, located by subject and file where known.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub subject: Option<String>,
    pub path: Option<PathBuf>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.subject {
            write!(f, "[{s}] ")?;
        }
        if let Some(p) = &self.path {
            write!(f, "{}: ", p.display())?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} ingestion error(s); first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
pub struct IngestError(pub Vec<Diagnostic>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestSummary {
    pub subjects: usize,
    pub turns: usize,
    pub removed_short_turns: usize,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Shape { path: PathBuf, message: String },
}

/// A parsed CSV matrix: header names plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub header: Vec<String>,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn rows(&self) -> usize {
        self.data.len() / self.header.len().max(1)
    }
}

/// Reads a header-first CSV of finite numbers. Row numbers in errors are
/// 1-based file lines; columns are 1-based.
pub fn read_matrix(path: &Path) -> Result<Matrix, MatrixError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| MatrixError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| MatrixError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(MatrixError::Shape {
            path: path.to_path_buf(),
            message: "missing header row".into(),
        });
    }
    let mut data = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| MatrixError::Parse {
            path: path.to_path_buf(),
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(MatrixError::Shape {
                path: path.to_path_buf(),
                message: format!("row {row} has {} columns, header has {}", rec.len(), header.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| MatrixError::Parse {
                path: path.to_path_buf(),
                row,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(MatrixError::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: c + 1,
                    message: "non-finite value".into(),
                });
            }
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(MatrixError::Shape {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    Ok(Matrix { header, data })
}

/// Writes a matrix in the format [`read_matrix`] accepts.
pub fn write_matrix(path: &Path, header: &[String], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()
}

/// Parses and validates a manifest, loads its matrices, and drops short turns.
pub fn ingest(manifest_path: &Path) -> Result<(Dataset, IngestSummary), IngestError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| {
        IngestError(vec![Diagnostic {
            subject: None,
            path: Some(manifest_path.to_path_buf()),
            message: e.to_string(),
        }])
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        IngestError(vec![Diagnostic {
            subject: None,
            path: Some(manifest_path.to_path_buf()),
            message: format!("invalid manifest: {e}"),
        }])
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    ingest_manifest(manifest, base)
}

/// [`ingest`] for an already-parsed manifest whose matrix paths are relative to `base`.
pub fn ingest_manifest(manifest: Manifest, base: &Path) -> Result<(Dataset, IngestSummary), IngestError> {
    let mut errors = Vec::new();
    let mut summary = IngestSummary::default();
    let err = |subject: Option<&str>, path: Option<PathBuf>, message: String| Diagnostic {
        subject: subject.map(str::to_string),
        path,
        message,
    };

    let mut set_names = BTreeSet::new();
    for fs in &manifest.feature_sets {
        if !set_names.insert(fs.name.clone()) {
            errors.push(err(None, None, format!("duplicate feature set {:?}", fs.name)));
        }
        if fs.columns.is_empty() {
            errors.push(err(None, None, format!("feature set {:?} has no columns", fs.name)));
        }
        if fs.level == FeatureLevel::Turn {
            for c in &fs.columns {
                if !DIALOGUE_FEATURES.contains(&c.as_str()) {
                    errors.push(err(
                        None,
                        None,
                        format!("feature set {:?}: {c:?} is not a dialogue feature", fs.name),
                    ));
                }
            }
        }
    }
    let schemas: BTreeMap<&str, Arc<[String]>> = manifest
        .feature_sets
        .iter()
        .filter(|f| f.level == FeatureLevel::Frame)
        .map(|f| (f.name.as_str(), f.columns.iter().cloned().collect()))
        .collect();

    let min_turn = manifest.min_turn_s.unwrap_or(MIN_TURN_S);
    let mut seen = BTreeSet::new();
    let mut interviews = Vec::with_capacity(manifest.subjects.len());

    for subj in &manifest.subjects {
        let sid = Some(subj.id.as_str());
        if !seen.insert(subj.id.clone()) {
            errors.push(err(sid, None, "duplicate subject id".into()));
            continue;
        }
        if let Some(s) = subj.severity {
            if !s.is_finite() {
                errors.push(err(sid, None, "non-finite severity".into()));
            }
        }
        let records: Vec<TurnRecord> = subj.turns.iter().map(|t| t.record.clone()).collect();
        if let Err(e) = validate_turns(&records) {
            errors.push(err(sid, None, e.to_string()));
            continue;
        }
        let before = subj.turns.len();
        let (kept_records, removed) = filter_short_turns(records, min_turn);
        summary.removed_short_turns += removed;
        let kept: Vec<&ManifestTurn> = subj
            .turns
            .iter()
            .filter(|t| t.record.duration() >= min_turn)
            .collect();
        debug_assert_eq!(kept.len(), kept_records.len());
        if kept.is_empty() {
            errors.push(err(
                sid,
                None,
                format!("all {before} turns are shorter than {min_turn} s"),
            ));
            continue;
        }

        let mut turns = Vec::with_capacity(kept.len());
        for mt in kept {
            let mut frames = BTreeMap::new();
            for (set, rel) in &mt.matrices {
                let path = base.join(rel);
                let Some(decl) = manifest.feature_sets.iter().find(|f| &f.name == set) else {
                    errors.push(err(sid, Some(path), format!("unknown feature set {set:?}")));
                    continue;
                };
                if decl.level != FeatureLevel::Frame {
                    errors.push(err(
                        sid,
                        Some(path),
                        format!("feature set {set:?} is turn-level and takes no matrices"),
                    ));
                    continue;
                }
                let m = match read_matrix(&path) {
                    Ok(m) => m,
                    Err(e) => {
                        errors.push(err(sid, Some(path), e.to_string()));
                        continue;
                    }
                };
                if m.header.len() != decl.columns.len() {
                    errors.push(err(
                        sid,
                        Some(path),
                        format!(
                            "{} columns, feature set {set:?} declares {}",
                            m.header.len(),
                            decl.columns.len()
                        ),
                    ));
                    continue;
                }
                if m.header != decl.columns {
                    summary.warnings.push(err(
                        sid,
                        Some(path.clone()),
                        "header names differ from the declared columns".into(),
                    ));
                }
                if decl.turn_scaled && m.data.iter().any(|v| v.abs() > 1.0) {
                    summary.warnings.push(err(
                        sid,
                        Some(path.clone()),
                        "values outside [-1, 1] in a turn-scaled feature set".into(),
                    ));
                }
                let seq = FeatureSequence::new(schemas[set.as_str()].clone(), m.data)
                    .expect("shape checked above");
                frames.insert(set.clone(), seq);
            }
            turns.push(Turn {
                record: mt.record.clone(),
                frames,
            });
        }
        summary.turns += turns.len();
        interviews.push(Interview {
            subject: SubjectInfo {
                id: subj.id.clone(),
                diagnosis: subj.diagnosis,
                severity: subj.severity,
                controls: subj.controls.clone(),
            },
            turns,
        });
    }

    if !errors.is_empty() {
        return Err(IngestError(errors));
    }
    summary.subjects = interviews.len();
    Ok((
        Dataset {
            name: manifest.name,
            feature_sets: manifest.feature_sets,
            interviews,
        },
        summary,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, rel: &str, body: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    fn manifest_json(turn2_end: f64) -> String {
        format!(
            r#"{{
  "name": "toy",
  "feature_sets": [
    {{"name": "acoustic", "level": "frame", "columns": ["a", "b"]}},
    {{"name": "dialogue", "level": "turn", "columns": ["TL", "TSO"]}}
  ],
  "subjects": [
    {{"id": "S1", "diagnosis": "BD", "severity": 3.5,
      "controls": {{"environment": "room"}},
      "turns": [
        {{"speaker": "interviewer", "start_s": 0.0, "end_s": 3.0}},
        {{"speaker": "participant", "start_s": 3.2, "end_s": 6.0, "word_count": 7,
          "voiced_segments": [[3.2, 4.0], [4.6, 6.0]],
          "matrices": {{"acoustic": "m/s1_t1.csv"}}}}
      ]}},
    {{"id": "S2", "diagnosis": "H",
      "turns": [
        {{"speaker": "participant", "start_s": 0.0, "end_s": 2.5,
          "matrices": {{"acoustic": "m/s2_t0.csv"}}}},
        {{"speaker": "participant", "start_s": 3.0, "end_s": {turn2_end}}}
      ]}}
  ]
}}"#
        )
    }

    #[test]
    fn well_formed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m/s1_t1.csv", "a,b\n0.1,0.2\n0.3,-0.4\n");
        write(dir.path(), "m/s2_t0.csv", "a,b\n1,2\n");
        write(dir.path(), "manifest.json", &manifest_json(4.5));
        let (ds, summary) = ingest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(ds.interviews.len(), 2);
        assert_eq!(summary.removed_short_turns, 1);
        assert!(summary.warnings.is_empty());
        let t = &ds.interviews[0].turns[1];
        assert_eq!(t.frames["acoustic"].as_flat(), &[0.1, 0.2, 0.3, -0.4]);
        assert_eq!(ds.interviews[1].turns.len(), 1);
    }

    #[test]
    fn column_count_mismatch_names_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m/s1_t1.csv", "a\n0.1\n");
        write(dir.path(), "m/s2_t0.csv", "a,b\n1,2\n");
        write(dir.path(), "manifest.json", &manifest_json(6.0));
        let e = ingest(&dir.path().join("manifest.json")).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].subject.as_deref(), Some("S1"));
        assert!(e.0[0].path.as_ref().unwrap().ends_with("m/s1_t1.csv"));
    }

    #[test]
    fn missing_file_and_bad_value_reported() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m/s2_t0.csv", "a,b\n1,x\n");
        write(dir.path(), "manifest.json", &manifest_json(6.0));
        let e = ingest(&dir.path().join("manifest.json")).unwrap_err();
        assert_eq!(e.0.len(), 2);
        assert!(e.0[1].message.contains("row 2, column 2"), "{}", e.0[1].message);
    }

    #[test]
    fn unordered_turns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{"name": "x", "feature_sets": [],
          "subjects": [{"id": "A", "diagnosis": "H", "turns": [
            {"speaker": "participant", "start_s": 5.0, "end_s": 9.0},
            {"speaker": "participant", "start_s": 1.0, "end_s": 4.0}]}]}"#;
        write(dir.path(), "manifest.json", json);
        let e = ingest(&dir.path().join("manifest.json")).unwrap_err();
        assert!(e.0[0].message.contains("not ordered"));
    }

    #[test]
    fn turn_scaled_range_warning() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "t.csv", "a\n0.5\n1.5\n");
        let json = r#"{"name": "x",
          "feature_sets": [{"name": "ac", "level": "frame", "columns": ["a"], "turn_scaled": true}],
          "subjects": [{"id": "A", "diagnosis": "H", "turns": [
            {"speaker": "participant", "start_s": 0.0, "end_s": 3.0, "matrices": {"ac": "t.csv"}}]}]}"#;
        write(dir.path(), "manifest.json", json);
        let (_, summary) = ingest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(summary.warnings.len(), 1);
    }

    #[test]
    fn everything_filtered_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{"name": "x", "feature_sets": [],
          "subjects": [{"id": "A", "diagnosis": "H", "turns": [
            {"speaker": "participant", "start_s": 0.0, "end_s": 1.5}]}]}"#;
        write(dir.path(), "manifest.json", json);
        assert!(ingest(&dir.path().join("manifest.json")).is_err());
    }
}
