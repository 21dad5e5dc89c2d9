#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtsig::data::{schema, FeatureSequence};
use vtsig::signature::{level_offset, sig_dim, PiecewiseLinearPath, SignatureVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Points with coordinates uniform in [-1, 1].
pub fn random_points(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_path(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> PiecewiseLinearPath {
    PiecewiseLinearPath::from_points(&random_points(rng, dim, n)).unwrap()
}

pub fn sequence(rows: &[Vec<f64>]) -> FeatureSequence {
    let names: Vec<String> = (1..=rows[0].len()).map(|j| format!("x{j}")).collect();
    FeatureSequence::from_rows(schema(&names), rows).unwrap()
}

/// Worst per-level normwise relative error, `max_k |a_k - b_k|_inf / |b_k|_inf`.
/// Levels whose reference block is exactly zero are compared absolutely.
pub fn rel_err(a: &SignatureVector, b: &SignatureVector) -> f64 {
    assert_eq!((a.dim(), a.level()), (b.dim(), b.level()));
    let (d, n) = (a.dim(), a.level());
    assert_eq!(a.len(), sig_dim(d, n).unwrap());
    let mut worst = 0.0f64;
    for k in 1..=n {
        let lo = level_offset(d, k);
        let hi = lo + d.pow(k as u32);
        let (x, y) = (&a.coeffs()[lo..hi], &b.coeffs()[lo..hi]);
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
    }
    worst
}

/// Worst level-`k` error relative to `L^k / k!`, where `L` is the path's
/// length in the l1 norm; that quantity bounds every level-`k` entry, so this
/// measures rounding without amplifying cancellation.
pub fn length_scaled_err(a: &SignatureVector, b: &SignatureVector, path: &PiecewiseLinearPath) -> f64 {
    let (d, n) = (a.dim(), a.level());
    let len: f64 = (1..path.len())
        .map(|i| path.point(i).iter().zip(path.point(i - 1)).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum();
    let mut worst = 0.0f64;
    let mut scale = 1.0;
    for k in 1..=n {
        scale *= len / k as f64;
        let lo = level_offset(d, k);
        let hi = lo + d.pow(k as u32);
        let diff = a.coeffs()[lo..hi]
            .iter()
            .zip(&b.coeffs()[lo..hi])
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
    }
    worst
}

pub fn translate(path: &PiecewiseLinearPath, shift: &[f64]) -> PiecewiseLinearPath {
    let pts: Vec<Vec<f64>> = path
        .points()
        .map(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect())
        .collect();
    PiecewiseLinearPath::from_points(&pts).unwrap()
}

/// Inserts the midpoint of segment `seg`.
pub fn insert_midpoint(path: &PiecewiseLinearPath, seg: usize) -> PiecewiseLinearPath {
    let mut pts: Vec<Vec<f64>> = path.points().map(<[f64]>::to_vec).collect();
    let mid: Vec<f64> = pts[seg].iter().zip(&pts[seg + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
    pts.insert(seg + 1, mid);
    PiecewiseLinearPath::from_points(&pts).unwrap()
}

/// `a` followed by `b` shifted to start where `a` ends.
pub fn concat(a: &PiecewiseLinearPath, b: &PiecewiseLinearPath) -> PiecewiseLinearPath {
    let end = a.point(a.len() - 1).to_vec();
    let start = b.point(0).to_vec();
    let mut pts: Vec<Vec<f64>> = a.points().map(<[f64]>::to_vec).collect();
    for p in b.points().skip(1) {
        pts.push(p.iter().zip(&start).zip(&end).map(|((v, s), e)| v - s + e).collect());
    }
    PiecewiseLinearPath::from_points(&pts).unwrap()
}

/// Two-sided Student-t tail by Simpson's rule after substituting `x = t / s`, which
/// maps `[t, inf)` onto `(0, 1]`. Integer degrees of freedom only.
pub fn t_two_sided_quadrature(t: f64, df: u32) -> f64 {
    let nu = df as f64;
    // Gamma((nu+1)/2) / Gamma(nu/2) from the recurrence, starting at Gamma(1)/Gamma(1/2) or Gamma(3/2)/Gamma(1)
    let pi = std::f64::consts::PI;
    let mut ratio = if df.is_multiple_of(2) { pi.sqrt() / 2.0 } else { 1.0 / pi.sqrt() };
    let mut k = if df.is_multiple_of(2) { 2 } else { 1 };
    while k < df {
        // Gamma(x+1) = x Gamma(x) on both numerator and denominator
        ratio *= ((k + 1) as f64 / 2.0) / (k as f64 / 2.0);
        k += 2;
    }
    let c = ratio / (nu * pi).sqrt();
    let density = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let t = t.abs();
    let integrand = |s: f64| if s == 0.0 { 0.0 } else { density(t / s) * t / (s * s) };
    let m = 200_000;
    let h = 1.0 / m as f64;
    let mut sum = integrand(0.0) + integrand(1.0);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(i as f64 * h);
    }
    2.0 * sum * h / 3.0
}
