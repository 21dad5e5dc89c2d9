//! Nested leave-one-subject-out evaluation and late fusion.
//!
//! For each held-out subject everything that is fitted (normalization
//! statistics, feature selection, interaction screening, column scaling,
//! the L2 strength and the final model) sees the training subjects only. The
//! L2 strength is chosen by an inner leave-one-subject-out pass over the
//! training subjects, using the outer fold's selected columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_interview, normalize_grouped, AggregationConfig, NormStats, Normalization};
use crate::data::{Controls, FeatureSequence, SubjectInfo};
use crate::error::{Error, Result};
use crate::logreg::fit_logreg_l2;
use crate::metrics::{auroc, macro_f1, threshold_labels};
use crate::stats::{interaction_screen, select_filtered, ScreenOutcome, SelectionConfig};

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Column correlated against features during selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionTarget {
    /// Severity score; falls back to the binary label when any training subject lacks one.
    #[default]
    Severity,
    Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub selection: SelectionConfig,
    pub target: SelectionTarget,
    /// `None` disables interaction screening.
    pub screening_alpha: Option<f64>,
    pub lambda_grid: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            target: SelectionTarget::Severity,
            screening_alpha: Some(0.05),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSubject {
    pub info: SubjectInfo,
    pub label: u8,
}

/// Feature matrix of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldMatrix {
    pub rows: Vec<Vec<f64>>,
    pub norm: Option<Vec<NormStats>>,
}

/// Produces per-subject feature rows for a fold, fitting anything it needs on `train` only.
pub trait FoldFeatures: Sync {
    fn names(&self) -> &[String];
    fn matrix(&self, train: &[usize]) -> Result<FoldMatrix>;
}

/// A precomputed matrix that needs no fold-specific fitting.
#[derive(Debug, Clone)]
pub struct FixedFeatures {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FoldFeatures for FixedFeatures {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn matrix(&self, _train: &[usize]) -> Result<FoldMatrix> {
        Ok(FoldMatrix {
            rows: self.rows.clone(),
            norm: None,
        })
    }
}

/// Per-interview turn sequences aggregated under one configuration.
///
/// `groups[i][t]` tags turn `t` of interview `i`; normalization statistics are
/// fitted separately per tag (all zeros for shared statistics).
pub struct SequenceFeatures {
    interviews: Vec<Vec<FeatureSequence>>,
    groups: Vec<Vec<u8>>,
    config: AggregationConfig,
    names: Vec<String>,
    fixed: Option<Vec<Vec<f64>>>,
}

impl SequenceFeatures {
    pub fn new(
        interviews: Vec<Vec<FeatureSequence>>,
        groups: Vec<Vec<u8>>,
        config: AggregationConfig,
    ) -> Result<Self> {
        let base = interviews
            .iter()
            .find_map(|t| t.first())
            .ok_or(Error::NoTurns)?
            .names()
            .clone();
        let names = crate::aggregate::aggregate_names(config.method, config.level, &base);
        let mut this = Self {
            interviews,
            groups,
            config,
            names,
            fixed: None,
        };
        if config.normalization != Normalization::Global {
            let all: Vec<usize> = (0..this.interviews.len()).collect();
            this.fixed = Some(this.compute(&all)?.rows);
        }
        Ok(this)
    }

    fn compute(&self, train: &[usize]) -> Result<FoldMatrix> {
        let (normed, _, stats) =
            normalize_grouped(&self.interviews, &self.groups, self.config.normalization, train)?;
        let rows = normed
            .iter()
            .map(|t| aggregate_interview(t, &self.config))
            .collect::<Result<Vec<_>>>()?;
        Ok(FoldMatrix { rows, norm: stats })
    }
}

impl FoldFeatures for SequenceFeatures {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn matrix(&self, train: &[usize]) -> Result<FoldMatrix> {
        match &self.fixed {
            Some(rows) => Ok(FoldMatrix {
                rows: rows.clone(),
                norm: None,
            }),
            None => self.compute(train),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub subject: String,
    pub label: u8,
    pub probability: f64,
    pub lambda: f64,
    /// Threshold that produced the selection; `None` when the top-k fallback was used.
    pub threshold: Option<f64>,
    pub escalated: bool,
    pub selected_features: Vec<String>,
    pub screened_out: Vec<String>,
    #[serde(skip)]
    pub inner_auroc: Option<f64>,
    #[serde(skip)]
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub bias: f64,
    #[serde(skip)]
    pub norm: Option<Vec<NormStats>>,
    #[serde(skip)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoReport {
    pub folds: Vec<FoldResult>,
    /// Held-out subjects whose fold could not be completed, with the reason.
    pub failures: Vec<(String, String)>,
    pub auroc: Option<f64>,
    pub macro_f1: Option<f64>,
}

impl LosoReport {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn probabilities(&self) -> Vec<(String, f64)> {
        self.folds.iter().map(|f| (f.subject.clone(), f.probability)).collect()
    }
}

fn column(rows: &[Vec<f64>], idx: &[usize], j: usize) -> Vec<f64> {
    idx.iter().map(|&i| rows[i][j]).collect()
}

fn standardize(train: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = train.first().map_or(0, |r| r.len());
    let n = train.len() as f64;
    let mut mean = vec![0.0; k];
    for r in train {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; k];
    for r in train {
        for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd = sd
        .into_iter()
        .map(|s| {
            let s = (s / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

fn scale_row(row: &[f64], mean: &[f64], sd: &[f64]) -> Vec<f64> {
    row.iter().zip(mean).zip(sd).map(|((v, m), s)| (v - m) / s).collect()
}

fn inner_auroc(x: &[Vec<f64>], y: &[u8], lambda: f64) -> Option<f64> {
    let mut preds = Vec::with_capacity(x.len());
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut ys: Vec<u8> = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        xs.clear();
        ys.clear();
        for i in (0..x.len()).filter(|&i| i != j) {
            xs.push(x[i].clone());
            ys.push(y[i]);
        }
        let model = fit_logreg_l2(&xs, &ys, lambda).ok()?;
        preds.push(model.predict_proba(&x[j]));
    }
    auroc(&preds, y).ok()
}

/// One outer fold: everything is fitted on all subjects except `held_out`.
pub fn run_fold(
    subjects: &[EvalSubject],
    features: &dyn FoldFeatures,
    config: &EvalConfig,
    held_out: usize,
) -> Result<FoldResult> {
    let train: Vec<usize> = (0..subjects.len()).filter(|&i| i != held_out).collect();
    let fm = features.matrix(&train)?;
    let names = features.names();
    let mut notes = Vec::new();

    let labels: Vec<u8> = train.iter().map(|&i| subjects[i].label).collect();
    let severities: Option<Vec<f64>> = train.iter().map(|&i| subjects[i].info.severity).collect();
    let target: Vec<f64> = match (config.target, severities) {
        (SelectionTarget::Severity, Some(s)) => s,
        (SelectionTarget::Severity, None) => {
            notes.push("severity missing; selecting against the label".to_string());
            labels.iter().map(|&l| l as f64).collect()
        }
        (SelectionTarget::Label, _) => labels.iter().map(|&l| l as f64).collect(),
    };
    let train_rows: Vec<Vec<f64>> = train.iter().map(|&i| fm.rows[i].clone()).collect();

    // escalation and the top-k fallback operate on columns that pass the
    // interaction screen
    let controls: Vec<(&str, Vec<&str>)> = Controls::NAMES
        .iter()
        .filter_map(|&c| {
            let v: Option<Vec<&str>> = train.iter().map(|&i| subjects[i].info.controls.get(c)).collect();
            v.map(|v| (c, v))
        })
        .collect();
    let screen = |j: usize, notes: &mut Vec<String>| -> Result<bool> {
        let Some(alpha) = config.screening_alpha else {
            return Ok(true);
        };
        let col = column(&fm.rows, &train, j);
        for (ctrl, values) in &controls {
            match interaction_screen(&col, &labels, values, alpha)? {
                ScreenOutcome::Drop { .. } => return Ok(false),
                ScreenOutcome::Keep { .. } => {}
                ScreenOutcome::Skipped { reason } => {
                    notes.push(format!("{} / {ctrl}: screen skipped ({reason})", names[j]));
                }
            }
        }
        Ok(true)
    };
    let (sel, rejected) =
        select_filtered(&train_rows, &target, &config.selection, |j| screen(j, &mut notes))?;
    let sel = sel.ok_or_else(|| Error::NoFeaturesSelected {
        subject: subjects[held_out].info.id.clone(),
    })?;
    let kept = sel.selection.indices.clone();
    let screened_out: Vec<String> = rejected.iter().map(|&j| names[j].clone()).collect();

    let x_raw: Vec<Vec<f64>> = train_rows
        .iter()
        .map(|r| kept.iter().map(|&j| r[j]).collect())
        .collect();
    let (mean, sd) = standardize(&x_raw);
    let x: Vec<Vec<f64>> = x_raw.iter().map(|r| scale_row(r, &mean, &sd)).collect();

    // highest inner AUROC; ties go to the stronger penalty
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &config.lambda_grid {
        if let Some(score) = inner_auroc(&x, &labels, lambda) {
            match best {
                Some((s, l)) if score < s || (score == s && lambda <= l) => {}
                _ => best = Some((score, lambda)),
            }
        }
    }
    let (inner, lambda) = match best {
        Some((s, l)) => (Some(s), l),
        None => {
            let l = config.lambda_grid[config.lambda_grid.len() / 2];
            notes.push(format!("inner loop could not score any lambda; using {l}"));
            (None, l)
        }
    };

    let model = fit_logreg_l2(&x, &labels, lambda)?;
    let held_row: Vec<f64> = kept.iter().map(|&j| fm.rows[held_out][j]).collect();
    let probability = model.predict_proba(&scale_row(&held_row, &mean, &sd));

    Ok(FoldResult {
        subject: subjects[held_out].info.id.clone(),
        label: subjects[held_out].label,
        probability,
        lambda,
        threshold: sel.threshold,
        escalated: sel.escalated,
        selected_features: kept.iter().map(|&j| names[j].clone()).collect(),
        screened_out,
        inner_auroc: inner,
        weights: model.weights,
        bias: model.bias,
        norm: fm.norm,
        notes,
    })
}

/// Outer leave-one-subject-out over `subjects` (assumed sorted by id).
pub fn nested_loso(
    subjects: &[EvalSubject],
    features: &dyn FoldFeatures,
    config: &EvalConfig,
) -> Result<LosoReport> {
    if config.lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let n_pos = subjects.iter().filter(|s| s.label == 1).count();
    if n_pos < 2 || subjects.len() - n_pos < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: n_pos.min(subjects.len() - n_pos),
        });
    }
    let outcomes: Vec<Result<FoldResult>> = (0..subjects.len())
        .into_par_iter()
        .map(|i| run_fold(subjects, features, config, i))
        .collect();

    let mut folds = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(f) => folds.push(f),
            Err(e) => failures.push((subjects[i].info.id.clone(), e.to_string())),
        }
    }
    let (auroc_v, f1) = if failures.is_empty() {
        let probs: Vec<f64> = folds.iter().map(|f| f.probability).collect();
        let labels: Vec<u8> = folds.iter().map(|f| f.label).collect();
        (
            Some(auroc(&probs, &labels)?),
            Some(macro_f1(&threshold_labels(&probs), &labels)?),
        )
    } else {
        (None, None)
    };
    Ok(LosoReport {
        folds,
        failures,
        auroc: auroc_v,
        macro_f1: f1,
    })
}

/// Unweighted mean of per-subject probabilities from several feature sets.
pub fn late_fusion(members: &[Vec<(String, f64)>]) -> Result<Vec<(String, f64)>> {
    if members.len() < 2 {
        return Err(Error::InvalidParameter(
            "fusion needs at least two probability lists".into(),
        ));
    }
    let first = &members[0];
    for m in &members[1..] {
        if m.len() != first.len() || m.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(Error::MisalignedSubjects);
        }
    }
    let k = members.len() as f64;
    Ok(first
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let sum: f64 = members.iter().map(|m| m[i].1).sum();
            (id.clone(), sum / k)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Diagnosis;

    fn subject(i: usize, label: u8) -> EvalSubject {
        EvalSubject {
            info: SubjectInfo {
                id: format!("S{i:03}"),
                diagnosis: if label == 1 { Diagnosis::BD } else { Diagnosis::H },
                severity: None,
                controls: Controls::default(),
            },
            label,
        }
    }

    #[test]
    fn oracle_feature_is_perfect() {
        let subjects: Vec<_> = (0..12).map(|i| subject(i, (i % 2) as u8)).collect();
        let rows: Vec<Vec<f64>> = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| vec![s.label as f64, ((i * 7) % 5) as f64])
            .collect();
        let feats = FixedFeatures {
            names: vec!["oracle".into(), "noise".into()],
            rows,
        };
        let rep = nested_loso(&subjects, &feats, &EvalConfig::default()).unwrap();
        assert!(!rep.failed());
        assert_eq!(rep.auroc, Some(1.0));
        assert_eq!(rep.macro_f1, Some(1.0));
        assert!(rep.folds.iter().all(|f| f.selected_features == ["oracle"]));
    }

    #[test]
    fn empty_selection_fails_the_configuration() {
        let subjects: Vec<_> = (0..8).map(|i| subject(i, (i % 2) as u8)).collect();
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![((i * 3) % 4) as f64]).collect();
        let feats = FixedFeatures {
            names: vec!["noise".into()],
            rows,
        };
        let rep = nested_loso(&subjects, &feats, &EvalConfig::default()).unwrap();
        assert!(rep.failed());
        assert_eq!(rep.auroc, None);
    }

    #[test]
    fn fusion() {
        let a = vec![("s1".to_string(), 0.2), ("s2".to_string(), 0.9)];
        let b = vec![("s1".to_string(), 0.8), ("s2".to_string(), 0.9)];
        let fused = late_fusion(&[a.clone(), b]).unwrap();
        assert_eq!(fused[0].1, 0.5);
        assert_eq!(fused[1].1, 0.9);
        assert_eq!(late_fusion(&[a.clone(), a.clone()]).unwrap(), a);
        let c = vec![("s2".to_string(), 0.1), ("s1".to_string(), 0.3)];
        assert_eq!(late_fusion(&[a.clone(), c]).unwrap_err(), Error::MisalignedSubjects);
        assert!(late_fusion(&[a]).is_err());
    }
}
