//! Experiment grid: tasks × speakers × feature sets × aggregations × normalizations.
//!
//! Every cell runs a nested leave-one-subject-out evaluation. A failed cell is
//! recorded with its reason and the run moves on. Reports are a JSON document
//! with a stable field order and a fixed-width text table.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{Aggregation, AggregationConfig, Normalization};
use crate::data::{Dataset, FeatureLevel, FeatureSequence, Interview, Speaker, SpeakerConfig, Task};
use crate::dialogue::dialogue_turn_sequences;
use crate::error::{Error, Result};
use crate::eval::{
    late_fusion, nested_loso, EvalConfig, EvalSubject, FoldResult, SelectionTarget, SequenceFeatures,
    DEFAULT_LAMBDA_GRID,
};
use crate::metrics::{auroc, macro_f1, threshold_labels};
use crate::stats::SelectionConfig;

/// How statistics are fitted when both speakers' turns are modelled together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BothNormalization {
    #[default]
    Shared,
    PerSpeaker,
}

fn default_tasks() -> Vec<Task> {
    vec![Task::HvsBD]
}

fn default_speakers() -> Vec<SpeakerConfig> {
    vec![SpeakerConfig::Participant]
}

fn default_aggregations() -> Vec<Aggregation> {
    vec![Aggregation::Hsf, Aggregation::Sig, Aggregation::VtSig]
}

fn default_normalizations() -> Vec<Normalization> {
    vec![Normalization::None, Normalization::Global, Normalization::Person]
}

fn default_level() -> usize {
    3
}

fn default_alpha() -> Option<f64> {
    Some(0.05)
}

fn default_lambdas() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default = "default_speakers")]
    pub speakers: Vec<SpeakerConfig>,
    #[serde(default = "default_aggregations")]
    pub aggregations: Vec<Aggregation>,
    #[serde(default = "default_normalizations")]
    pub normalizations: Vec<Normalization>,
    #[serde(default = "default_level")]
    pub level: usize,
    /// Feature sets evaluated separately; empty means every declared set.
    #[serde(default)]
    pub feature_sets: Vec<String>,
    /// Average the per-subject probabilities of all feature sets as an extra row.
    #[serde(default)]
    pub fusion: bool,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub target: SelectionTarget,
    /// `null` disables interaction screening.
    #[serde(default = "default_alpha")]
    pub screening_alpha: Option<f64>,
    #[serde(default = "default_lambdas")]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub both_normalization: BothNormalization,
    /// Shuffle labels (with severities) across subjects; a leakage check.
    #[serde(default)]
    pub permute_labels: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            tasks: default_tasks(),
            speakers: default_speakers(),
            aggregations: default_aggregations(),
            normalizations: default_normalizations(),
            level: default_level(),
            feature_sets: Vec::new(),
            fusion: false,
            selection: SelectionConfig::default(),
            target: SelectionTarget::default(),
            screening_alpha: default_alpha(),
            lambda_grid: default_lambdas(),
            both_normalization: BothNormalization::default(),
            permute_labels: false,
            seed,
        }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.tasks.is_empty() || self.speakers.is_empty() {
            return bad("tasks and speakers must be non-empty".into());
        }
        if self.aggregations.is_empty() || self.normalizations.is_empty() {
            return bad("aggregations and normalizations must be non-empty".into());
        }
        if self.level == 0 {
            return bad("signature level must be at least 1".into());
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("lambda grid must hold positive finite values".into());
        }
        let th = &self.selection.thresholds;
        if th.is_empty() || th.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return bad("selection thresholds must lie in (0, 1]".into());
        }
        if th.windows(2).any(|w| w[1] < w[0]) {
            return bad("selection thresholds must be non-decreasing".into());
        }
        if let Some(a) = self.screening_alpha {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("screening alpha {a} outside (0, 1)"));
            }
        }
        for name in &self.feature_sets {
            if ds.feature_set(name).is_none() {
                return bad(format!("unknown feature set {name:?}"));
            }
        }
        if self.fusion && self.feature_set_names(ds).len() < 2 {
            return bad("fusion needs at least two feature sets".into());
        }
        Ok(())
    }

    fn feature_set_names(&self, ds: &Dataset) -> Vec<String> {
        if self.feature_sets.is_empty() {
            ds.feature_sets.iter().map(|f| f.name.clone()).collect()
        } else {
            self.feature_sets.clone()
        }
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            selection: self.selection.clone(),
            target: self.target,
            screening_alpha: self.screening_alpha,
            lambda_grid: self.lambda_grid.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldFailure {
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub task: Task,
    pub speaker: SpeakerConfig,
    pub feature_set: String,
    pub aggregation: Aggregation,
    pub normalization: Normalization,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub n_subjects: usize,
    pub n_positive: usize,
    pub auroc: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Loosest threshold that produced a fold selection; top-k fallbacks are flagged separately.
    pub max_threshold: Option<f64>,
    pub any_fallback: bool,
    pub folds: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| c.status == CellStatus::Failed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width table per speaker and feature set: rows are aggregation ×
    /// normalization, columns are tasks.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let tasks = &self.config.tasks;
        let mut blocks: Vec<(SpeakerConfig, &str)> = Vec::new();
        for c in &self.cells {
            if !blocks.contains(&(c.speaker, c.feature_set.as_str())) {
                blocks.push((c.speaker, c.feature_set.as_str()));
            }
        }
        for (metric, pick) in [("AUROC", true), ("macro-F1", false)] {
            for &(speaker, set) in &blocks {
                let _ = writeln!(out, "{metric}  speaker={speaker}  features={set}");
                let mut header = format!("{:<8}{:<8}", "Aggr", "Norm");
                for t in tasks {
                    let _ = write!(header, "{:>12}", t.to_string());
                }
                let rule = "-".repeat(header.len());
                let _ = writeln!(out, "{rule}\n{header}\n{rule}");
                for &agg in &self.config.aggregations {
                    for &norm in &self.config.normalizations {
                        let mut line = format!("{:<8}{:<8}", agg.to_string(), norm.to_string());
                        for &t in tasks {
                            let cell = self.cells.iter().find(|c| {
                                c.task == t
                                    && c.speaker == speaker
                                    && c.feature_set == set
                                    && c.aggregation == agg
                                    && c.normalization == norm
                            });
                            let text = match cell {
                                Some(c) if c.status == CellStatus::Ok => {
                                    let v = if pick { c.auroc } else { c.macro_f1 };
                                    format!("{:.3}{:<3}", v.unwrap_or(f64::NAN), threshold_code(c))
                                }
                                Some(_) => format!("{:<8}", "fail"),
                                None => format!("{:<8}", "-"),
                            };
                            let _ = write!(line, "{text:>12}");
                        }
                        let _ = writeln!(out, "{line}");
                    }
                }
                let _ = writeln!(out, "{rule}\n");
            }
        }
        out.push_str("selection codes: loosest selection threshold ** 0.001, * 0.005, + 0.01, ^ above 0.01; k top-k fallback\n");
        out
    }
}

fn threshold_code(c: &CellReport) -> &'static str {
    if c.any_fallback {
        return "k";
    }
    match c.max_threshold {
        Some(t) if t <= 0.001 => "**",
        Some(t) if t <= 0.005 => "*",
        Some(t) if t <= 0.01 => "+",
        Some(_) => "^",
        None => "",
    }
}

/// Per-interview turn sequences of one feature set, plus per-turn normalization tags.
pub fn turn_sequences(
    ds: &Dataset,
    interviews: &[&Interview],
    set: &str,
    speakers: SpeakerConfig,
    per_speaker: bool,
) -> Result<(Vec<Vec<FeatureSequence>>, Vec<Vec<u8>>)> {
    let decl = ds
        .feature_set(set)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown feature set {set:?}")))?;
    let tag = |s: Speaker| u8::from(per_speaker && s == Speaker::Interviewer);
    let mut seqs = Vec::with_capacity(interviews.len());
    let mut groups = Vec::with_capacity(interviews.len());
    for iv in interviews {
        let kept: Vec<_> = iv.turns.iter().filter(|t| speakers.includes(t.record.speaker)).collect();
        if kept.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "subject {} has no {speakers} turns",
                iv.subject.id
            )));
        }
        let s = match decl.level {
            FeatureLevel::Frame => kept
                .iter()
                .map(|t| {
                    t.frames.get(set).cloned().ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "subject {}: turn at {} s has no {set:?} matrix",
                            iv.subject.id, t.record.start_s
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            FeatureLevel::Turn => {
                let records: Vec<_> = iv.turns.iter().map(|t| t.record.clone()).collect();
                dialogue_turn_sequences(&records, |s| speakers.includes(s), &decl.columns)?
            }
        };
        groups.push(kept.iter().map(|t| tag(t.record.speaker)).collect());
        seqs.push(s);
    }
    Ok((seqs, groups))
}

fn task_subjects<'a>(
    ds: &'a Dataset,
    task: Task,
    cfg: &ExperimentConfig,
) -> (Vec<&'a Interview>, Vec<EvalSubject>) {
    let mut chosen: Vec<&Interview> = ds
        .interviews
        .iter()
        .filter(|iv| task.label(iv.subject.diagnosis).is_some())
        .collect();
    chosen.sort_by(|a, b| a.subject.id.cmp(&b.subject.id));
    let mut targets: Vec<(u8, Option<f64>)> = chosen
        .iter()
        .map(|iv| (task.label(iv.subject.diagnosis).expect("filtered"), iv.subject.severity))
        .collect();
    if cfg.permute_labels {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(task as u64);
        targets.shuffle(&mut rng);
    }
    let subjects = chosen
        .iter()
        .zip(targets)
        .map(|(iv, (label, severity))| {
            let mut info = iv.subject.clone();
            info.severity = severity;
            EvalSubject { info, label }
        })
        .collect();
    (chosen, subjects)
}

struct CellKey {
    task: Task,
    speaker: SpeakerConfig,
    aggregation: Aggregation,
    normalization: Normalization,
}

fn failed_cell(key: &CellKey, set: &str, subjects: &[EvalSubject], reason: String) -> CellReport {
    CellReport {
        task: key.task,
        speaker: key.speaker,
        feature_set: set.to_string(),
        aggregation: key.aggregation,
        normalization: key.normalization,
        status: CellStatus::Failed,
        reason: Some(reason),
        n_subjects: subjects.len(),
        n_positive: subjects.iter().filter(|s| s.label == 1).count(),
        auroc: None,
        macro_f1: None,
        max_threshold: None,
        any_fallback: false,
        folds: Vec::new(),
        failures: Vec::new(),
    }
}

fn finish_cell(
    key: &CellKey,
    set: &str,
    subjects: &[EvalSubject],
    folds: Vec<FoldResult>,
    failures: Vec<FoldFailure>,
    auroc: Option<f64>,
    macro_f1: Option<f64>,
) -> CellReport {
    let any_fallback = folds.iter().any(|f| f.threshold.is_none());
    let max_threshold = folds
        .iter()
        .filter_map(|f| f.threshold)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
    let failed = !failures.is_empty();
    CellReport {
        task: key.task,
        speaker: key.speaker,
        feature_set: set.to_string(),
        aggregation: key.aggregation,
        normalization: key.normalization,
        status: if failed { CellStatus::Failed } else { CellStatus::Ok },
        reason: failed.then(|| format!("{} fold(s) failed", failures.len())),
        n_subjects: subjects.len(),
        n_positive: subjects.iter().filter(|s| s.label == 1).count(),
        auroc,
        macro_f1,
        max_threshold,
        any_fallback,
        folds,
        failures,
    }
}

fn run_cell(
    ds: &Dataset,
    chosen: &[&Interview],
    subjects: &[EvalSubject],
    set: &str,
    key: &CellKey,
    cfg: &ExperimentConfig,
) -> CellReport {
    let per_speaker =
        key.speaker == SpeakerConfig::Both && cfg.both_normalization == BothNormalization::PerSpeaker;
    let outcome = turn_sequences(ds, chosen, set, key.speaker, per_speaker).and_then(|(seqs, groups)| {
        let agg = AggregationConfig {
            method: key.aggregation,
            level: cfg.level,
            normalization: key.normalization,
        };
        let features = SequenceFeatures::new(seqs, groups, agg)?;
        nested_loso(subjects, &features, &cfg.eval_config())
    });
    match outcome {
        Ok(r) => {
            let failures = r
                .failures
                .into_iter()
                .map(|(subject, reason)| FoldFailure { subject, reason })
                .collect();
            finish_cell(key, set, subjects, r.folds, failures, r.auroc, r.macro_f1)
        }
        Err(e) => failed_cell(key, set, subjects, e.to_string()),
    }
}

fn fuse_cells(key: &CellKey, members: &[&CellReport], subjects: &[EvalSubject]) -> CellReport {
    let name = format!(
        "fusion({})",
        members.iter().map(|c| c.feature_set.as_str()).collect::<Vec<_>>().join("+")
    );
    if let Some(bad) = members.iter().find(|c| c.status == CellStatus::Failed) {
        return failed_cell(key, &name, subjects, format!("member {} failed", bad.feature_set));
    }
    let probs: Vec<Vec<(String, f64)>> = members
        .iter()
        .map(|c| c.folds.iter().map(|f| (f.subject.clone(), f.probability)).collect())
        .collect();
    let fused = match late_fusion(&probs) {
        Ok(f) => f,
        Err(e) => return failed_cell(key, &name, subjects, e.to_string()),
    };
    let labels: Vec<u8> = subjects.iter().map(|s| s.label).collect();
    let p: Vec<f64> = fused.iter().map(|(_, p)| *p).collect();
    let folds: Vec<FoldResult> = members[0]
        .folds
        .iter()
        .zip(&fused)
        .map(|(f, (_, prob))| {
            let mut selected = Vec::new();
            for m in members {
                let g = m.folds.iter().find(|g| g.subject == f.subject).expect("same subjects");
                selected.extend(g.selected_features.iter().map(|s| format!("{}:{s}", m.feature_set)));
            }
            FoldResult {
                probability: *prob,
                selected_features: selected,
                screened_out: Vec::new(),
                // serialized as null
                lambda: f64::NAN,
                ..f.clone()
            }
        })
        .collect();
    let mut cell = finish_cell(
        key,
        &name,
        subjects,
        folds,
        Vec::new(),
        auroc(&p, &labels).ok(),
        macro_f1(&threshold_labels(&p), &labels).ok(),
    );
    // fused rows keep the loosest member threshold
    cell.any_fallback = members.iter().any(|c| c.any_fallback);
    cell.max_threshold = members
        .iter()
        .filter_map(|c| c.max_threshold)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
    cell
}

/// Runs every grid cell in a fixed order. Outer folds run in parallel inside each cell.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate(ds)?;
    let sets = cfg.feature_set_names(ds);
    let mut cells = Vec::new();
    for &task in &cfg.tasks {
        let (chosen, subjects) = task_subjects(ds, task, cfg);
        for &speaker in &cfg.speakers {
            for &aggregation in &cfg.aggregations {
                for &normalization in &cfg.normalizations {
                    let key = CellKey {
                        task,
                        speaker,
                        aggregation,
                        normalization,
                    };
                    let start = cells.len();
                    for set in &sets {
                        log::info!("{task} {speaker} {set} {aggregation} {normalization}");
                        cells.push(run_cell(ds, &chosen, &subjects, set, &key, cfg));
                    }
                    if cfg.fusion {
                        let members: Vec<&CellReport> = cells[start..].iter().collect();
                        let fused = fuse_cells(&key, &members, &subjects);
                        cells.push(fused);
                    }
                }
            }
        }
    }
    Ok(ExperimentReport {
        dataset: ds.name.clone(),
        config: cfg.clone(),
        cells,
    })
}

/// Writes `report.json` and `report.txt` into `out_dir`.
pub fn write_report(report: &ExperimentReport, out_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.json"), report.to_json())?;
    std::fs::write(out_dir.join("report.txt"), report.to_table())
}
