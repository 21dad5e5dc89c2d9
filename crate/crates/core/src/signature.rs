//! Truncated path signatures.
//!
//! A signature truncated at level `n` over a `d`-dimensional path is stored as
//! one flat vector: level 1 (`d` terms), then level 2 (`d^2` terms), and so on,
//! each level in lexicographic multi-index order. The level-0 term is always 1
//! and is never stored.
//!
//! Discrete streams are read as piecewise-linear paths. The signature of a
//! linear segment with increment `v` is the truncated tensor exponential
//! `(v, v⊗v/2!, v⊗v⊗v/3!, ...)`, and the signature of a concatenation is the
//! truncated tensor product of the pieces (Chen's identity). [`path_signature`]
//! folds segments in one at a time, which is exact and costs `O(m d^n)`.

pub mod oracle;

use crate::error::{Error, Result};

/// Number of stored coefficients, `d + d^2 + ... + d^n`.
pub fn sig_dim(dim: usize, level: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if level == 0 {
        return Err(Error::ZeroLevel);
    }
    Ok(levels_total(dim, level))
}

fn levels_total(dim: usize, level: usize) -> usize {
    let mut total = 0;
    let mut width = 1;
    for _ in 0..level {
        width *= dim;
        total += width;
    }
    total
}

/// Offset of the first level-`k` coefficient in the flat layout.
#[inline]
pub fn level_offset(dim: usize, k: usize) -> usize {
    levels_total(dim, k.saturating_sub(1))
}

/// Flat position of a 1-based multi-index `(i_1, ..., i_k)`.
pub fn multi_index_to_flat(indices: &[usize], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let invalid = || Error::InvalidMultiIndex {
        indices: indices.to_vec(),
        dim,
        level: indices.len(),
    };
    if indices.is_empty() {
        return Err(invalid());
    }
    let mut within = 0usize;
    for &i in indices {
        if i == 0 || i > dim {
            return Err(invalid());
        }
        within = within * dim + (i - 1);
    }
    Ok(level_offset(dim, indices.len()) + within)
}

/// Inverse of [`multi_index_to_flat`] for a signature truncated at `level`.
pub fn flat_to_multi_index(pos: usize, dim: usize, level: usize) -> Result<Vec<usize>> {
    let len = sig_dim(dim, level)?;
    if pos >= len {
        return Err(Error::PositionOutOfRange { pos, len });
    }
    let mut k = 1;
    let mut width = dim;
    let mut start = 0;
    while pos >= start + width {
        start += width;
        width *= dim;
        k += 1;
    }
    let mut within = pos - start;
    let mut out = vec![0; k];
    for slot in out.iter_mut().rev() {
        *slot = within % dim + 1;
        within /= dim;
    }
    Ok(out)
}

/// Renders a multi-index as `"(c, apq, logE)"`.
pub fn render_term(indices: &[usize], names: &[String]) -> String {
    render_with(indices, names, ", ")
}

/// Renders a multi-index without spaces, `"(f1,f1)"`.
pub fn render_term_compact(indices: &[usize], names: &[String]) -> String {
    render_with(indices, names, ",")
}

fn render_with(indices: &[usize], names: &[String], sep: &str) -> String {
    let parts: Vec<&str> = indices.iter().map(|&i| names[i - 1].as_str()).collect();
    format!("({})", parts.join(sep))
}

/// Parses a rendered term back into its 1-based multi-index.
pub fn parse_term(term: &str, names: &[String]) -> Result<Vec<usize>> {
    let err = || Error::TermParse(term.to_string());
    let inner = term
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(err)?;
    inner
        .split(',')
        .map(|part| {
            let part = part.trim();
            names
                .iter()
                .position(|n| n == part)
                .map(|p| p + 1)
                .ok_or_else(err)
        })
        .collect()
}

/// Coefficients of a truncated signature, level 1 upward.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureVector {
    dim: usize,
    level: usize,
    coeffs: Vec<f64>,
}

impl SignatureVector {
    /// The signature of a constant path.
    pub fn zeros(dim: usize, level: usize) -> Result<Self> {
        let len = sig_dim(dim, level)?;
        Ok(Self {
            dim,
            level,
            coeffs: vec![0.0; len],
        })
    }

    pub fn from_coeffs(dim: usize, level: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = sig_dim(dim, level)?;
        if coeffs.len() != expected {
            return Err(Error::CoefficientCount {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self { dim, level, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The level-`k` block, `d^k` coefficients.
    pub fn level_block(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.level, "level {k} out of range");
        let start = level_offset(self.dim, k);
        &self.coeffs[start..start + self.dim.pow(k as u32)]
    }

    /// Coefficient at a 1-based multi-index.
    pub fn get(&self, indices: &[usize]) -> Result<f64> {
        if indices.len() > self.level {
            return Err(Error::InvalidMultiIndex {
                indices: indices.to_vec(),
                dim: self.dim,
                level: self.level,
            });
        }
        Ok(self.coeffs[multi_index_to_flat(indices, self.dim)?])
    }

    /// Rendered names for every coefficient, in storage order.
    pub fn term_names(&self, names: &[String]) -> Vec<String> {
        term_names(self.dim, self.level, names)
    }
}

/// Rendered names for every coefficient of a `(dim, level)` signature.
pub fn term_names(dim: usize, level: usize, names: &[String]) -> Vec<String> {
    assert_eq!(names.len(), dim, "one name per coordinate");
    let mut out = Vec::with_capacity(levels_total(dim, level));
    let mut idx = Vec::with_capacity(level);
    for k in 1..=level {
        idx.clear();
        idx.resize(k, 1);
        loop {
            out.push(render_term(&idx, names));
            // odometer increment over 1..=dim
            let mut p = k;
            loop {
                if p == 0 {
                    break;
                }
                p -= 1;
                if idx[p] < dim {
                    idx[p] += 1;
                    break;
                }
                idx[p] = 1;
            }
            if idx.iter().all(|&i| i == 1) {
                break;
            }
        }
    }
    out
}

/// A stream of `d`-dimensional points read as the linear interpolation through them.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    dim: usize,
    data: Vec<f64>,
}

impl PiecewiseLinearPath {
    /// Builds a path from row-major point data.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.is_empty() {
            return Err(Error::EmptyPath);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InconsistentDimension {
                index: data.len() / dim,
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyPath)?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut data = Vec::with_capacity(dim * points.len());
        for (index, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::InconsistentDimension {
                    index,
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Signature of a single linear segment: `increment^{⊗k} / k!` at level `k`.
pub fn segment_signature(increment: &[f64], level: usize) -> Result<SignatureVector> {
    let dim = increment.len();
    let mut sig = SignatureVector::zeros(dim, level)?;
    if let Some(pos) = increment.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    sig.coeffs[..dim].copy_from_slice(increment);
    let mut prev_start = 0;
    let mut prev_len = dim;
    for k in 2..=level {
        let start = prev_start + prev_len;
        let inv = 1.0 / k as f64;
        for p in 0..prev_len {
            let a = sig.coeffs[prev_start + p] * inv;
            let row = start + p * dim;
            for (j, &v) in increment.iter().enumerate() {
                sig.coeffs[row + j] = a * v;
            }
        }
        prev_start = start;
        prev_len *= dim;
    }
    Ok(sig)
}

/// Truncated tensor product with implicit level-0 ones.
///
/// For path signatures this is the signature of `a` followed by `b`.
pub fn chen_product(a: &SignatureVector, b: &SignatureVector) -> Result<SignatureVector> {
    if a.dim != b.dim || a.level != b.level {
        return Err(Error::ShapeMismatch {
            dim_a: a.dim,
            level_a: a.level,
            dim_b: b.dim,
            level_b: b.level,
        });
    }
    let dim = a.dim;
    let mut out = SignatureVector::zeros(dim, a.level)?;
    for k in 1..=a.level {
        let start = level_offset(dim, k);
        let width = dim.pow(k as u32);
        let block = &mut out.coeffs[start..start + width];
        for (o, (x, y)) in block
            .iter_mut()
            .zip(a.level_block(k).iter().zip(b.level_block(k)))
        {
            *o = x + y;
        }
        for j in 1..k {
            let left = a.level_block(j);
            let right = b.level_block(k - j);
            let rw = right.len();
            for (p, &l) in left.iter().enumerate() {
                let row = &mut block[p * rw..(p + 1) * rw];
                for (o, &r) in row.iter_mut().zip(right) {
                    *o += l * r;
                }
            }
        }
    }
    Ok(out)
}

/// Streaming signature accumulator: multiplies in one segment at a time.
#[derive(Debug, Clone)]
pub struct SignatureBuilder {
    dim: usize,
    level: usize,
    coeffs: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
}

impl SignatureBuilder {
    pub fn new(dim: usize, level: usize) -> Result<Self> {
        let len = sig_dim(dim, level)?;
        let scratch = dim.pow(level.saturating_sub(1) as u32);
        Ok(Self {
            dim,
            level,
            coeffs: vec![0.0; len],
            cur: Vec::with_capacity(scratch),
            next: Vec::with_capacity(scratch),
        })
    }

    /// Right-multiplies by the signature of a segment with this increment.
    ///
    /// Level `k` gains `Σ_{j<k} S_j ⊗ v^{⊗(k-j)}/(k-j)!`, evaluated in Horner
    /// form from the top level down so lower levels are still the old values.
    pub fn push_increment(&mut self, inc: &[f64]) {
        debug_assert_eq!(inc.len(), self.dim);
        let dim = self.dim;
        for k in (1..=self.level).rev() {
            // t_1 = v / k
            let inv = 1.0 / k as f64;
            self.cur.clear();
            self.cur.extend(inc.iter().map(|v| v * inv));
            for m in 2..=k {
                // t_m = (S_{m-1} + t_{m-1}) ⊗ v / (k - m + 1)
                let inv = 1.0 / (k - m + 1) as f64;
                let lower = &self.coeffs[level_offset(dim, m - 1)..level_offset(dim, m)];
                self.next.clear();
                for (s, t) in lower.iter().zip(&self.cur) {
                    let a = (s + t) * inv;
                    self.next.extend(inc.iter().map(|v| a * v));
                }
                std::mem::swap(&mut self.cur, &mut self.next);
            }
            let start = level_offset(dim, k);
            for (c, t) in self.coeffs[start..].iter_mut().zip(&self.cur) {
                *c += t;
            }
        }
    }

    pub fn finish(self) -> SignatureVector {
        SignatureVector {
            dim: self.dim,
            level: self.level,
            coeffs: self.coeffs,
        }
    }
}

/// Signature of a piecewise-linear path truncated at `level`.
pub fn path_signature(path: &PiecewiseLinearPath, level: usize) -> Result<SignatureVector> {
    if let Some(pos) = path.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let dim = path.dim;
    let mut builder = SignatureBuilder::new(dim, level)?;
    let mut inc = vec![0.0; dim];
    for w in path.data.windows(2 * dim).step_by(dim) {
        let (a, b) = w.split_at(dim);
        for ((d, x), y) in inc.iter_mut().zip(a).zip(b) {
            *d = y - x;
        }
        builder.push_increment(&inc);
    }
    let mut sig = builder.finish();
    // level 1 telescopes; store it exactly
    let first = path.point(0);
    let last = path.point(path.len() - 1);
    for ((c, x), y) in sig.coeffs[..dim].iter_mut().zip(first).zip(last) {
        *c = y - x;
    }
    Ok(sig)
}
