//! Fixed-size aggregation of turn sequences (HSF, SIG, VT-SIG) and z-normalization.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSequence, SubjectInfo};
use crate::error::{Error, Result};
use crate::signature::{path_signature, term_names, PiecewiseLinearPath};
use crate::visibility::{visibility_names, vt_signature};

/// Per-dimension statistics emitted by [`hsf_aggregate`], in order.
pub const HSF_STATS: [&str; 12] = [
    "mean",
    "std",
    "min",
    "max",
    "range",
    "median",
    "q25",
    "q75",
    "skew",
    "kurt",
    "slope",
    "intercept",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aggregation {
    #[serde(rename = "HSF")]
    Hsf,
    #[serde(rename = "SIG")]
    Sig,
    #[serde(rename = "VT_SIG")]
    VtSig,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Hsf => "HSF",
            Aggregation::Sig => "SIG",
            Aggregation::VtSig => "VT-SIG",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Normalization {
    None,
    Global,
    Person,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub method: Aggregation,
    pub level: usize,
    pub normalization: Normalization,
}

impl AggregationConfig {
    pub fn new(method: Aggregation, normalization: Normalization) -> Self {
        Self {
            method,
            level: 3,
            normalization,
        }
    }
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The 12 statistics of one pooled column, `HSF_STATS` order.
pub fn hsf_column(values: &[f64]) -> [f64; 12] {
    let n = values.len();
    assert!(n > 0, "empty column");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    // order-free statistics come from the sorted copy only, so any permutation
    // of the input yields bit-identical values
    let nf = n as f64;
    let mean = sorted.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in &sorted {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = m2.sqrt();
    let degenerate = n < 2 || std <= 1e-12 * (1.0 + mean.abs());
    let (std, skew, kurt) = if degenerate {
        (if n < 2 { 0.0 } else { std }, 0.0, 0.0)
    } else {
        (std, m3 / (m2 * std), m4 / (m2 * m2) - 3.0)
    };
    let min = sorted[0];
    let max = sorted[n - 1];

    let (slope, intercept) = if n < 2 {
        (0.0, values[0])
    } else {
        let x_mean = (nf - 1.0) / 2.0;
        let y_mean = values.iter().sum::<f64>() / nf;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, &y) in values.iter().enumerate() {
            let dx = i as f64 - x_mean;
            sxy += dx * (y - y_mean);
            sxx += dx * dx;
        }
        let slope = sxy / sxx;
        (slope, y_mean - slope * x_mean)
    };

    [
        mean,
        std,
        min,
        max,
        max - min,
        percentile_sorted(&sorted, 0.5),
        percentile_sorted(&sorted, 0.25),
        percentile_sorted(&sorted, 0.75),
        skew,
        kurt,
        slope,
        intercept,
    ]
}

fn pooled_columns(turns: &[FeatureSequence]) -> Result<Vec<Vec<f64>>> {
    let first = turns.first().ok_or(Error::EmptySequence)?;
    let d = first.dim();
    let total: usize = turns.iter().map(|t| t.n_frames()).sum();
    let mut cols = vec![Vec::with_capacity(total); d];
    for (i, t) in turns.iter().enumerate() {
        if !t.same_schema(first) {
            return Err(Error::SchemaMismatch { turn: i });
        }
        for frame in t.frames() {
            for (c, &v) in cols.iter_mut().zip(frame) {
                c.push(v);
            }
        }
    }
    Ok(cols)
}

/// High-level statistical functions over frames pooled across turns, feature-major.
pub fn hsf_aggregate(turns: &[FeatureSequence]) -> Result<Vec<f64>> {
    let cols = pooled_columns(turns)?;
    Ok(cols.iter().flat_map(|c| hsf_column(c)).collect())
}

/// `"{feature}_{stat}"` names matching [`hsf_aggregate`] output.
pub fn hsf_names(names: &[String]) -> Vec<String> {
    names
        .iter()
        .flat_map(|n| HSF_STATS.iter().map(move |s| format!("{n}_{s}")))
        .collect()
}

/// Signature of all turn frames concatenated into one path, no visibility transform.
pub fn sig_aggregate(turns: &[FeatureSequence], level: usize) -> Result<Vec<f64>> {
    let first = turns.first().ok_or(Error::EmptySequence)?;
    let mut data = Vec::with_capacity(turns.iter().map(|t| t.as_flat().len()).sum());
    for (i, t) in turns.iter().enumerate() {
        if !t.same_schema(first) {
            return Err(Error::SchemaMismatch { turn: i });
        }
        data.extend_from_slice(t.as_flat());
    }
    let path = PiecewiseLinearPath::new(first.dim(), data)?;
    Ok(path_signature(&path, level)?.into_coeffs())
}

/// Output feature names for a method applied to sequences with these column names.
pub fn aggregate_names(method: Aggregation, level: usize, names: &[String]) -> Vec<String> {
    match method {
        Aggregation::Hsf => hsf_names(names),
        Aggregation::Sig => term_names(names.len(), level, names),
        Aggregation::VtSig => {
            let vn = visibility_names(names);
            term_names(vn.len(), level, &vn)
        }
    }
}

/// Fixed-size representation of one interview. Normalization must already be applied.
pub fn aggregate_interview(turns: &[FeatureSequence], config: &AggregationConfig) -> Result<Vec<f64>> {
    if config.level == 0 {
        return Err(Error::ZeroLevel);
    }
    let out = match config.method {
        Aggregation::Hsf => hsf_aggregate(turns)?,
        Aggregation::Sig => sig_aggregate(turns, config.level)?,
        Aggregation::VtSig => vt_signature(turns, config.level)?.into_coeffs(),
    };
    if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    Ok(out)
}

/// Per-dimension location and scale used for z-normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// `None` marks a zero-variance dimension: centered only.
    pub scale: Vec<Option<f64>>,
}

impl NormStats {
    /// Population mean and standard deviation of all frames in `seqs`.
    pub fn fit<'a, I>(seqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureSequence>,
    {
        let mut iter = seqs.into_iter().peekable();
        let d = iter.peek().ok_or(Error::EmptySequence)?.dim();
        let mut sum = vec![0.0; d];
        let mut frames: Vec<&[f64]> = Vec::new();
        for s in iter {
            if s.dim() != d {
                return Err(Error::InconsistentDimension {
                    index: frames.len(),
                    expected: d,
                    got: s.dim(),
                });
            }
            for f in s.frames() {
                for (a, v) in sum.iter_mut().zip(f) {
                    *a += v;
                }
                frames.push(f);
            }
        }
        let n = frames.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut ss = vec![0.0; d];
        for f in &frames {
            for ((a, v), m) in ss.iter_mut().zip(*f).zip(&mean) {
                *a += (v - m) * (v - m);
            }
        }
        let scale = ss
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                (sd > 1e-12 * (1.0 + m.abs())).then_some(sd)
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, seq: &mut FeatureSequence) {
        let d = self.mean.len();
        for frame in seq.as_flat_mut().chunks_exact_mut(d) {
            for ((v, m), s) in frame.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v -= m;
                if let Some(s) = s {
                    *v /= s;
                }
            }
        }
    }

    pub fn zero_variance_dims(&self) -> Vec<usize> {
        self.scale
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.is_none().then_some(i))
            .collect()
    }
}

/// Normalizes each interview's turn list.
///
/// `train` lists the interviews that may contribute statistics in `Global`
/// mode; the fitted statistics are then applied to every interview. Returns
/// the normalized copy, warnings, and the global statistics when fitted.
pub fn normalize(
    interviews: &[Vec<FeatureSequence>],
    mode: Normalization,
    train: &[usize],
) -> Result<(Vec<Vec<FeatureSequence>>, Vec<String>, Option<NormStats>)> {
    let groups: Vec<Vec<u8>> = interviews.iter().map(|t| vec![0; t.len()]).collect();
    let (out, warnings, stats) = normalize_grouped(interviews, &groups, mode, train)?;
    Ok((out, warnings, stats.and_then(|s| s.into_iter().next())))
}

/// [`normalize`] with separate statistics per turn tag (`groups[i][t]` for
/// turn `t` of interview `i`), e.g. one tag per speaker.
pub fn normalize_grouped(
    interviews: &[Vec<FeatureSequence>],
    groups: &[Vec<u8>],
    mode: Normalization,
    train: &[usize],
) -> Result<(Vec<Vec<FeatureSequence>>, Vec<String>, Option<Vec<NormStats>>)> {
    if groups.len() != interviews.len()
        || groups.iter().zip(interviews).any(|(g, t)| g.len() != t.len())
    {
        return Err(Error::InvalidParameter("turn tags do not match interviews".into()));
    }
    let tags: Vec<u8> = {
        let mut t: Vec<u8> = groups.iter().flatten().copied().collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let mut out = interviews.to_vec();
    let mut warnings = Vec::new();
    match mode {
        Normalization::None => Ok((out, warnings, None)),
        Normalization::Person => {
            for (i, turns) in out.iter_mut().enumerate() {
                for &tag in &tags {
                    let members: Vec<usize> =
                        (0..turns.len()).filter(|&t| groups[i][t] == tag).collect();
                    if members.is_empty() {
                        continue;
                    }
                    let stats = NormStats::fit(members.iter().map(|&t| &turns[t]))?;
                    for dim in stats.zero_variance_dims() {
                        warnings.push(format!(
                            "interview {i}: dimension {dim} has zero variance; centered only"
                        ));
                    }
                    for &t in &members {
                        stats.apply(&mut turns[t]);
                    }
                }
            }
            Ok((out, warnings, None))
        }
        Normalization::Global => {
            let mut fitted = Vec::with_capacity(tags.len());
            for &tag in &tags {
                let stats = NormStats::fit(train.iter().flat_map(|&i| {
                    interviews[i]
                        .iter()
                        .zip(&groups[i])
                        .filter(move |(_, &g)| g == tag)
                        .map(|(s, _)| s)
                }))?;
                for dim in stats.zero_variance_dims() {
                    warnings.push(format!(
                        "dimension {dim} has zero variance in training data; centered only"
                    ));
                }
                for (turns, g) in out.iter_mut().zip(groups) {
                    for (t, &gt) in turns.iter_mut().zip(g) {
                        if gt == tag {
                            stats.apply(t);
                        }
                    }
                }
                fitted.push(stats);
            }
            Ok((out, warnings, Some(fitted)))
        }
    }
}

/// Per-interview fixed-size vectors for one aggregation/normalization setting.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDataset {
    pub subjects: Vec<SubjectInfo>,
    pub matrix: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub config: AggregationConfig,
    pub feature_set: String,
}

/// Normalizes (with all interviews as the training set) and aggregates.
pub fn aggregate_dataset(
    subjects: Vec<SubjectInfo>,
    interviews: &[Vec<FeatureSequence>],
    config: AggregationConfig,
    feature_set: &str,
) -> Result<AggregatedDataset> {
    let all: Vec<usize> = (0..interviews.len()).collect();
    let (normed, _, _) = normalize(interviews, config.normalization, &all)?;
    let names = interviews
        .first()
        .and_then(|t| t.first())
        .ok_or(Error::EmptySequence)?
        .names()
        .clone();
    let matrix = normed
        .iter()
        .map(|t| aggregate_interview(t, &config))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregatedDataset {
        subjects,
        matrix,
        feature_names: aggregate_names(config.method, config.level, &names),
        config,
        feature_set: feature_set.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema;

    fn seq1(vals: &[f64]) -> FeatureSequence {
        FeatureSequence::new(schema(&["x"]), vals.to_vec()).unwrap()
    }

    #[test]
    fn constant_column() {
        let h = hsf_aggregate(&[seq1(&[2.5, 2.5, 2.5])]).unwrap();
        assert_eq!(h[0], 2.5);
        assert_eq!(h[1], 0.0);
        assert_eq!(h[4], 0.0);
        assert_eq!(h[8], 0.0);
        assert_eq!(h[9], 0.0);
        assert_eq!(h[10], 0.0);
    }

    #[test]
    fn ramp() {
        let h = hsf_aggregate(&[seq1(&[0.0, 1.0]), seq1(&[2.0, 3.0])]).unwrap();
        assert_eq!(h[10], 1.0);
        assert_eq!(h[11], 0.0);
        assert_eq!(h[0], 1.5);
        assert_eq!(h[3], 3.0);
        assert_eq!(h[5], 1.5);
        assert_eq!(h[6], 0.75);
        assert_eq!(h[7], 2.25);
        assert_eq!(h[8], 0.0);
        // uniform on 4 points: m4/m2^2 = 1.64
        assert!((h[9] - (1.64 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn single_frame() {
        let h = hsf_aggregate(&[seq1(&[4.0])]).unwrap();
        assert_eq!(&h[..], &[4.0, 0.0, 4.0, 4.0, 0.0, 4.0, 4.0, 4.0, 0.0, 0.0, 0.0, 4.0]);
        assert!(hsf_aggregate(&[]).is_err());
    }

    #[test]
    fn hsf_lengths_and_names() {
        let names = schema(&["a", "b", "c", "d", "e", "f", "g"]);
        let s = FeatureSequence::new(names.clone(), (0..21).map(|v| v as f64).collect()).unwrap();
        assert_eq!(hsf_aggregate(&[s]).unwrap().len(), 84);
        let hn = hsf_names(&names);
        assert_eq!(hn.len(), 84);
        assert_eq!(hn[0], "a_mean");
        assert_eq!(hn[13], "b_std");
    }

    #[test]
    fn skewed_sample() {
        // values 0,0,0,4: mean 1, m2 3, m3 = (3*(-1) + 27)/4 = 6, skew = 6 / 3^1.5
        let h = hsf_column(&[0.0, 0.0, 0.0, 4.0]);
        assert!((h[8] - 6.0 / 3f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn aggregate_lengths() {
        let names7 = schema(&["a", "b", "c", "d", "e", "f", "g"]);
        let s = FeatureSequence::new(names7, (0..21).map(|v| (v as f64).sin()).collect()).unwrap();
        let turns = [s];
        let hsf = AggregationConfig::new(Aggregation::Hsf, Normalization::None);
        assert_eq!(aggregate_interview(&turns, &hsf).unwrap().len(), 84);
        let vt = AggregationConfig::new(Aggregation::VtSig, Normalization::None);
        assert_eq!(aggregate_interview(&turns, &vt).unwrap().len(), 584);
        let names13: Vec<String> = (0..13).map(|i| format!("d{i}")).collect();
        let s = FeatureSequence::new(schema(&names13), vec![0.5; 26]).unwrap();
        let sig = AggregationConfig::new(Aggregation::Sig, Normalization::None);
        assert_eq!(aggregate_interview(&[s], &sig).unwrap().len(), 2379);
        assert_eq!(aggregate_names(Aggregation::VtSig, 3, &schema(&["a"]))[3], "(a, c)");
    }

    #[test]
    fn sig_single_frame_and_shift() {
        let names = schema(&["a", "b"]);
        let one = FeatureSequence::new(names.clone(), vec![1.0, 2.0]).unwrap();
        assert!(sig_aggregate(&[one], 3).unwrap().iter().all(|&v| v == 0.0));
        let a = FeatureSequence::new(names.clone(), vec![0.0, 1.0, 2.0, -1.0]).unwrap();
        let b = FeatureSequence::new(names.clone(), vec![1.0, 1.0]).unwrap();
        let a2 = FeatureSequence::new(names.clone(), vec![8.0, -3.0, 10.0, -5.0]).unwrap();
        let b2 = FeatureSequence::new(names, vec![9.0, -3.0]).unwrap();
        assert_eq!(sig_aggregate(&[a, b], 3).unwrap(), sig_aggregate(&[a2, b2], 3).unwrap());
    }

    #[test]
    fn normalization_modes() {
        let names = schema(&["x"]);
        let a = vec![FeatureSequence::new(names.clone(), vec![0.0, 2.0]).unwrap()];
        let b = vec![FeatureSequence::new(names.clone(), vec![10.0, 12.0]).unwrap()];
        let data = vec![a, b];

        let (none, w, _) = normalize(&data, Normalization::None, &[0, 1]).unwrap();
        assert_eq!(none, data);
        assert!(w.is_empty());

        let (person, _, _) = normalize(&data, Normalization::Person, &[]).unwrap();
        assert_eq!(person[0][0].as_flat(), &[-1.0, 1.0]);
        assert_eq!(person[1][0].as_flat(), &[-1.0, 1.0]);

        // pooled 0,2,10,12: mean 6, population sd sqrt((36+16+16+36)/4) = sqrt(26)
        let (global, _, stats) = normalize(&data, Normalization::Global, &[0, 1]).unwrap();
        let sd = 26f64.sqrt();
        assert_eq!(stats.unwrap().mean, vec![6.0]);
        assert_eq!(global[0][0].as_flat(), &[-6.0 / sd, -4.0 / sd]);
        assert_eq!(global[1][0].as_flat(), &[4.0 / sd, 6.0 / sd]);

        // fitted on interview 0 only
        let (train_only, _, _) = normalize(&data, Normalization::Global, &[0]).unwrap();
        assert_eq!(train_only[1][0].as_flat(), &[9.0, 11.0]);
    }

    #[test]
    fn zero_variance_is_centered_with_warning() {
        let names = schema(&["x", "y"]);
        let a = vec![FeatureSequence::new(names, vec![3.0, 1.0, 3.0, 5.0]).unwrap()];
        let (out, warnings, _) = normalize(&[a], Normalization::Person, &[]).unwrap();
        assert_eq!(out[0][0].as_flat(), &[0.0, -1.0, 0.0, 1.0]);
        assert_eq!(warnings.len(), 1);
    }
}
