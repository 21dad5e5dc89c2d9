//! Correlation-based feature selection and control-variable interaction screening.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

fn is_constant(values: &[f64]) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() <= 1e-12 * (1.0 + mean.abs())
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::TooFewObservations {
            needed: 3,
            got: x.len(),
        });
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::ConstantInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `t = r sqrt((n-2)/(1-r^2))` against Student's t with `n-2` df.
pub fn pearson_pvalue(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: n });
    }
    if r.is_nan() || r.abs() > 1.0 {
        return Err(Error::InvalidParameter(format!("correlation {r} outside [-1, 1]")));
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(two_sided_t(t, df))
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected column indices, ascending p-value.
    pub indices: Vec<usize>,
    /// p-values aligned with `indices`.
    pub pvalues: Vec<f64>,
    /// Columns skipped because they (or the target) were constant.
    pub constant: Vec<usize>,
}

/// p-value of every non-constant column against the target.
pub fn column_pvalues(rows: &[Vec<f64>], target: &[f64]) -> Result<(Vec<(usize, f64)>, Vec<usize>)> {
    if rows.len() != target.len() {
        return Err(Error::LengthMismatch(rows.len(), target.len()));
    }
    let k = rows.first().map_or(0, |r| r.len());
    let mut col = vec![0.0; rows.len()];
    let mut scored = Vec::with_capacity(k);
    let mut constant = Vec::new();
    for j in 0..k {
        for (c, r) in col.iter_mut().zip(rows) {
            *c = r[j];
        }
        match pearson(&col, target) {
            Ok(r) => scored.push((j, pearson_pvalue(r, rows.len())?)),
            Err(Error::ConstantInput) => constant.push(j),
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok((scored, constant))
}

/// Columns whose correlation with `target` has p below `threshold`.
pub fn select_features(rows: &[Vec<f64>], target: &[f64], threshold: f64) -> Result<Selection> {
    check_threshold(threshold)?;
    let (scored, constant) = column_pvalues(rows, target)?;
    let (indices, pvalues) = scored.into_iter().filter(|&(_, p)| p < threshold).unzip();
    Ok(Selection {
        indices,
        pvalues,
        constant,
    })
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold {t} outside (0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Tried in order until a threshold selects at least one column.
    pub thresholds: Vec<f64>,
    /// When every threshold selects nothing, keep this many lowest-p columns
    /// instead of failing. `None` means the fold fails.
    #[serde(default)]
    pub fallback_top_k: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.001, 0.005, 0.01],
            fallback_top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalatedSelection {
    pub selection: Selection,
    /// The threshold that produced the selection; `None` when the fallback was used.
    pub threshold: Option<f64>,
    pub escalated: bool,
}

/// Escalating selection; `Ok(None)` when nothing survives and no fallback is configured.
pub fn select_with_escalation(
    rows: &[Vec<f64>],
    target: &[f64],
    config: &SelectionConfig,
) -> Result<Option<EscalatedSelection>> {
    Ok(select_filtered(rows, target, config, |_| Ok(true))?.0)
}

/// [`select_with_escalation`] over the columns accepted by `keep`.
///
/// Each threshold's candidates are passed through `keep` and the first
/// threshold with a survivor wins. The top-k fallback walks the whole
/// ranking until k columns are accepted. Also returns the rejected columns,
/// in rank order.
pub fn select_filtered(
    rows: &[Vec<f64>],
    target: &[f64],
    config: &SelectionConfig,
    mut keep: impl FnMut(usize) -> Result<bool>,
) -> Result<(Option<EscalatedSelection>, Vec<usize>)> {
    if config.thresholds.is_empty() {
        return Err(Error::InvalidParameter("no selection thresholds".into()));
    }
    for t in &config.thresholds {
        check_threshold(*t)?;
    }
    let (scored, constant) = column_pvalues(rows, target)?;
    let mut decided: Vec<Option<bool>> = vec![None; rows.first().map_or(0, |r| r.len())];
    let mut accept = |j: usize| -> Result<bool> {
        if decided[j].is_none() {
            decided[j] = Some(keep(j)?);
        }
        Ok(decided[j] == Some(true))
    };

    let mut chosen: Option<(Vec<(usize, f64)>, Option<f64>, bool)> = None;
    for (i, &t) in config.thresholds.iter().enumerate() {
        let mut picked = Vec::new();
        for &(j, p) in scored.iter().take_while(|&&(_, p)| p < t) {
            if accept(j)? {
                picked.push((j, p));
            }
        }
        if !picked.is_empty() {
            chosen = Some((picked, Some(t), i > 0));
            break;
        }
    }
    if chosen.is_none() {
        if let Some(k) = config.fallback_top_k.filter(|&k| k > 0) {
            let mut picked = Vec::new();
            for &(j, p) in &scored {
                if picked.len() == k {
                    break;
                }
                if accept(j)? {
                    picked.push((j, p));
                }
            }
            if !picked.is_empty() {
                chosen = Some((picked, None, true));
            }
        }
    }
    let rejected = scored
        .iter()
        .filter(|&&(j, _)| decided[j] == Some(false))
        .map(|&(j, _)| j)
        .collect();
    let selection = chosen.map(|(picked, threshold, escalated)| {
        let (indices, pvalues) = picked.into_iter().unzip();
        EscalatedSelection {
            selection: Selection {
                indices,
                pvalues,
                constant,
            },
            threshold,
            escalated,
        }
    });
    Ok((selection, rejected))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScreenOutcome {
    Keep { p: f64 },
    Drop { p: f64 },
    Skipped { reason: String },
}

impl ScreenOutcome {
    pub fn dropped(&self) -> bool {
        matches!(self, ScreenOutcome::Drop { .. })
    }
}

/// OLS of `label ~ 1 + f + ctrl + f:ctrl` with a t-test on the interaction terms.
///
/// Multi-level controls are dummy-coded against their first level (sorted);
/// the smallest interaction p decides.
pub fn interaction_screen(
    feature: &[f64],
    labels: &[u8],
    control: &[&str],
    alpha: f64,
) -> Result<ScreenOutcome> {
    let n = feature.len();
    if labels.len() != n {
        return Err(Error::LengthMismatch(n, labels.len()));
    }
    if control.len() != n {
        return Err(Error::LengthMismatch(n, control.len()));
    }
    let mut levels: Vec<&str> = control.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Ok(ScreenOutcome::Skipped {
            reason: "control is constant".into(),
        });
    }
    let extra = levels.len() - 1;
    let p = 2 + 2 * extra;
    if n <= p {
        return Ok(ScreenOutcome::Skipped {
            reason: format!("{n} observations for {p} parameters"),
        });
    }
    let x = DMatrix::from_fn(n, p, |i, j| {
        let f = feature[i];
        match j {
            0 => 1.0,
            1 => f,
            _ => {
                let lvl = (j - 2) % extra + 1;
                let d = if control[i] == levels[lvl] { 1.0 } else { 0.0 };
                if j < 2 + extra {
                    d
                } else {
                    d * f
                }
            }
        }
    });
    let y = DVector::from_iterator(n, labels.iter().map(|&l| l as f64));

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Ok(ScreenOutcome::Skipped {
            reason: "rank-deficient design".into(),
        });
    }
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let s = &svd.singular_values;
    // beta = V S^-1 U^T y, (X^T X)^-1 = V S^-2 V^T
    let uty = u.transpose() * &y;
    let scaled = DVector::from_iterator(p, uty.iter().zip(s.iter()).map(|(a, b)| a / b));
    let beta = v_t.transpose() * scaled;
    let resid = &y - &x * &beta;
    let dof = (n - p) as f64;
    let sigma2 = resid.norm_squared() / dof;

    let mut min_p = 1.0f64;
    for j in (2 + extra)..p {
        let var_j: f64 = (0..p).map(|k| (v_t[(k, j)] / s[k]).powi(2)).sum::<f64>() * sigma2;
        let pj = if var_j > 0.0 {
            two_sided_t(beta[j] / var_j.sqrt(), dof)
        } else if beta[j].abs() > 0.0 {
            0.0
        } else {
            1.0
        };
        min_p = min_p.min(pj);
    }
    Ok(if min_p < alpha {
        ScreenOutcome::Drop { p: min_p }
    } else {
        ScreenOutcome::Keep { p: min_p }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn pearson_cases() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ConstantInput));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pvalue_limits() {
        assert_eq!(pearson_pvalue(0.0, 10).unwrap(), 1.0);
        assert_eq!(pearson_pvalue(1.0, 10).unwrap(), 0.0);
        assert_eq!(pearson_pvalue(-1.0, 10).unwrap(), 0.0);
        let p = pearson_pvalue(0.8, 20).unwrap();
        assert!((p - 2.2e-5).abs() < 0.1e-5, "{p}");
        assert!(pearson_pvalue(0.5, 2).is_err());
    }

    #[test]
    fn pvalue_monotone_in_r() {
        let mut last = 1.0;
        for i in 1..100 {
            let p = pearson_pvalue(i as f64 / 100.0, 15).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn exact_copy_selected_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let rows: Vec<Vec<f64>> = target
            .iter()
            .map(|&t| vec![rng.sample(StandardNormal), t, 5.0])
            .collect();
        let sel = select_features(&rows, &target, 0.001).unwrap();
        assert_eq!(sel.indices[0], 1);
        assert_eq!(sel.pvalues[0], 0.0);
        assert_eq!(sel.constant, vec![2]);
    }

    #[test]
    fn null_selection_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0;
        for _ in 0..100 {
            let target: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
            let rows: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..50).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            total += select_features(&rows, &target, 0.001).unwrap().indices.len();
        }
        assert!((total as f64 / 100.0) < 0.2, "{total}");
    }

    #[test]
    fn filtered_selection_escalates_past_rejected_columns() {
        // column 0 is an exact copy of the target, column 1 strongly related, column 2 noise
        let target = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let rows: Vec<Vec<f64>> = target
            .iter()
            .enumerate()
            .map(|(i, &t)| vec![t, t + [0.3, -0.2, 0.1, -0.4, 0.2, 0.0, -0.1, 0.3][i], (i as f64 * 2.3).sin()])
            .collect();
        let cfg = SelectionConfig {
            thresholds: vec![1e-12, 0.01],
            fallback_top_k: Some(2),
        };
        let (sel, rejected) = select_filtered(&rows, &target, &cfg, |j| Ok(j != 0)).unwrap();
        let sel = sel.unwrap();
        assert_eq!(sel.selection.indices, vec![1]);
        assert_eq!(sel.threshold, Some(0.01));
        assert_eq!(rejected, vec![0]);

        // nothing passes any threshold: the fallback fills up to k accepted columns
        let (sel, rejected) = select_filtered(&rows, &target, &cfg, |j| Ok(j == 2)).unwrap();
        let sel = sel.unwrap();
        assert_eq!(sel.selection.indices, vec![2]);
        assert_eq!(sel.threshold, None);
        assert_eq!(rejected, vec![0, 1]);
    }

    #[test]
    fn escalation_tags_threshold() {
        // r between the 0.001 and 0.005 cut-offs for n = 20
        let n = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut found = None;
        for _ in 0..2000 {
            let target: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let col: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let p = pearson_pvalue(pearson(&col, &target).unwrap(), n).unwrap();
            if (0.001..0.005).contains(&p) {
                found = Some((col, target));
                break;
            }
        }
        let (col, target) = found.expect("seeded search finds a column");
        let rows: Vec<Vec<f64>> = col.iter().map(|&c| vec![c]).collect();
        let out = select_with_escalation(&rows, &target, &SelectionConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(out.threshold, Some(0.005));
        assert!(out.escalated);
        assert_eq!(out.selection.indices, vec![0]);

        let strict = SelectionConfig {
            thresholds: vec![0.001],
            fallback_top_k: None,
        };
        assert!(select_with_escalation(&rows, &target, &strict).unwrap().is_none());
        let fallback = SelectionConfig {
            thresholds: vec![0.001],
            fallback_top_k: Some(1),
        };
        let fb = select_with_escalation(&rows, &target, &fallback).unwrap().unwrap();
        assert_eq!(fb.threshold, None);
        assert_eq!(fb.selection.indices, vec![0]);
    }

    #[test]
    fn scaling_does_not_change_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let target: Vec<f64> = (0..25).map(|_| rng.sample(StandardNormal)).collect();
        let rows: Vec<Vec<f64>> = target
            .iter()
            .map(|&t| (0..6).map(|j| t * j as f64 * 0.3 + rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| v * (j as f64 + 0.5) * 7.0).collect())
            .collect();
        let a = select_features(&rows, &target, 0.01).unwrap();
        let b = select_features(&scaled, &target, 0.01).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn flipped_association_dropped() {
        let mut f = Vec::new();
        let mut y = Vec::new();
        let mut env = Vec::new();
        for i in 0..40 {
            let v = (i % 10) as f64 - 4.5;
            let room = i < 20;
            f.push(v);
            y.push(u8::from((v > 0.0) == room));
            env.push(if room { "room" } else { "phone" });
        }
        let out = interaction_screen(&f, &y, &env, 0.05).unwrap();
        assert!(out.dropped(), "{out:?}");
    }

    #[test]
    fn constant_control_skipped() {
        let f = [0.1, 0.5, -0.3, 0.9, 1.2];
        let y = [0, 1, 0, 1, 1];
        let env = ["room"; 5];
        assert!(matches!(
            interaction_screen(&f, &y, &env, 0.05).unwrap(),
            ScreenOutcome::Skipped { .. }
        ));
    }

    #[test]
    fn independent_control_drop_rate_near_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trials = 400;
        let mut drops = 0;
        for _ in 0..trials {
            let n = 40;
            let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<u8> = f
                .iter()
                .map(|&v| u8::from(v + 2.0 * rng.sample::<f64, _>(StandardNormal) > 0.0))
                .collect();
            let env: Vec<&str> = (0..n)
                .map(|_| if rng.random_bool(0.5) { "room" } else { "phone" })
                .collect();
            if interaction_screen(&f, &y, &env, 0.05).unwrap().dropped() {
                drops += 1;
            }
        }
        let rate = drops as f64 / trials as f64;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
    }

    #[test]
    fn multilevel_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 45;
        let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let who = ["I1", "I2", "I3"];
        let ctrl: Vec<&str> = (0..n).map(|i| who[i % 3]).collect();
        // association only for I3
        let y: Vec<u8> = f
            .iter()
            .zip(&ctrl)
            .map(|(&v, &c)| u8::from(if c == "I3" { v > 0.0 } else { rng.random_bool(0.5) }))
            .collect();
        let out = interaction_screen(&f, &y, &ctrl, 0.05).unwrap();
        assert!(out.dropped(), "{out:?}");
    }
}
