use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic; ties earn half credit.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // midranks, 1-based
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if labels[o] == 1 {
                pos_rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Unweighted mean of the two per-class F1 scores. A class that is neither
/// present nor predicted is left out of the mean.
pub fn macro_f1(predicted: &[u8], labels: &[u8]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch(predicted.len(), labels.len()));
    }
    let mut total = 0.0;
    let mut classes = 0;
    for class in [0u8, 1] {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p == class, l == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        if tp + fp + fn_ == 0 {
            continue;
        }
        total += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        classes += 1;
    }
    Ok(if classes == 0 { 0.0 } else { total / classes as f64 })
}

/// Hard labels at the 0.5 threshold.
pub fn threshold_labels(probabilities: &[f64]) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= 0.5)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_cases() {
        let s = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(auroc(&s, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auroc(&s, &[0, 1, 0, 1]).unwrap(), 0.25);
        assert_eq!(auroc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auroc(&s, &[1, 1, 1, 1]).unwrap_err(), Error::SingleClass);
    }

    #[test]
    fn auroc_partial_ties() {
        // positives 0.5, 0.7; negatives 0.5, 0.1 -> pairs: tie(0.5), win, win, win
        assert_eq!(auroc(&[0.5, 0.7, 0.5, 0.1], &[1, 1, 0, 0]).unwrap(), 3.5 / 4.0);
    }

    #[test]
    fn auroc_monotone_invariance() {
        let s = [0.12, 0.55, 0.31, 0.98, 0.47, 0.05, 0.77];
        let l = [0, 1, 0, 1, 1, 0, 0];
        let t: Vec<f64> = s.iter().map(|v| (v * 3.0f64).exp() - 7.0).collect();
        assert_eq!(auroc(&s, &l).unwrap(), auroc(&t, &l).unwrap());
    }

    #[test]
    fn f1_cases() {
        assert_eq!(macro_f1(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert!((macro_f1(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        // only one class anywhere: the other class is skipped
        assert_eq!(macro_f1(&[1, 1], &[1, 1]).unwrap(), 1.0);
    }
}
