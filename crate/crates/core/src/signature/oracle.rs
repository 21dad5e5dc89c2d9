//! Direct numerical evaluation of iterated integrals.
//!
//! Used as an independent check on [`super::path_signature`]: no tensor
//! exponentials, no Chen products. Each segment is cut into equal steps and
//! every level is integrated against the level below with the trapezoidal
//! rule, which is exact for levels 1 and 2 and converges as `O(h^2)` above.
//! [`extrapolated_signature`] removes the leading `h^2` term by Richardson
//! extrapolation over two grids; plain `O(h^2)` is too coarse to resolve
//! high levels whose entries nearly cancel.

use super::{PiecewiseLinearPath, SignatureVector};
use crate::error::{Error, Result};

pub fn brute_force_signature(
    path: &PiecewiseLinearPath,
    level: usize,
    subdivisions: usize,
) -> Result<SignatureVector> {
    if subdivisions == 0 {
        return Err(Error::InvalidParameter(
            "subdivisions must be at least 1".into(),
        ));
    }
    let dim = path.dim();
    // validates dim/level
    SignatureVector::zeros(dim, level)?;

    let mut levels: Vec<Vec<f64>> = (1..=level).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
    let mut step = vec![0.0; dim];
    let mut prev_old: Vec<f64> = Vec::new();
    let mut cur_old: Vec<f64> = Vec::new();

    for s in 0..path.len().saturating_sub(1) {
        let a = path.point(s);
        let b = path.point(s + 1);
        for ((d, x), y) in step.iter_mut().zip(a).zip(b) {
            *d = (y - x) / subdivisions as f64;
        }
        for _ in 0..subdivisions {
            prev_old.clear();
            prev_old.extend_from_slice(&levels[0]);
            for (v, d) in levels[0].iter_mut().zip(&step) {
                *v += d;
            }
            for k in 1..level {
                cur_old.clear();
                cur_old.extend_from_slice(&levels[k]);
                let (lower, upper) = levels.split_at_mut(k);
                let below_new = &lower[k - 1];
                let here = &mut upper[0];
                for (p, (old, new)) in prev_old.iter().zip(below_new).enumerate() {
                    let mid = 0.5 * (old + new);
                    for (j, d) in step.iter().enumerate() {
                        here[p * dim + j] += mid * d;
                    }
                }
                std::mem::swap(&mut prev_old, &mut cur_old);
            }
        }
    }

    let mut coeffs: Vec<f64> = levels.into_iter().flatten().collect();
    let first = path.point(0);
    let last = path.point(path.len() - 1);
    for ((c, x), y) in coeffs[..dim].iter_mut().zip(first).zip(last) {
        *c = y - x;
    }
    SignatureVector::from_coeffs(dim, level, coeffs)
}

/// `(4 S(2n) - S(n)) / 3` over the trapezoidal estimates with `n` and `2n` steps per segment.
pub fn extrapolated_signature(
    path: &PiecewiseLinearPath,
    level: usize,
    subdivisions: usize,
) -> Result<SignatureVector> {
    let coarse = brute_force_signature(path, level, subdivisions)?;
    let fine = brute_force_signature(path, level, 2 * subdivisions)?;
    let dim = path.dim();
    let mut coeffs: Vec<f64> = fine
        .coeffs()
        .iter()
        .zip(coarse.coeffs())
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect();
    // level 1 is exact on both grids
    coeffs[..dim].copy_from_slice(&fine.coeffs()[..dim]);
    SignatureVector::from_coeffs(dim, level, coeffs)
}
