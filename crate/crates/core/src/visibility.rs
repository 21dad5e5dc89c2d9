//! Visibility transform and interview-level path assembly.
//!
//! Each turn `x_1..x_n` becomes `(x_1,1), ..., (x_n,1), (x_n,0), 0`: the
//! appended coordinate `c` drops to zero at the end of the turn and the path
//! then returns to the origin. Signature terms with a leading `c` therefore
//! only see the turn's last frame, and the turn start is marked by `c` rising
//! again on the join into the next block.

use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::signature::{path_signature, PiecewiseLinearPath, SignatureVector};

/// Name used for the appended binary coordinate.
pub const VISIBILITY_NAME: &str = "c";

/// Coordinate names after the transform: the feature names followed by `c`.
pub fn visibility_names(names: &[String]) -> Vec<String> {
    let mut out = names.to_vec();
    out.push(VISIBILITY_NAME.to_string());
    out
}

fn push_block(seq: &FeatureSequence, out: &mut Vec<f64>) {
    let d = seq.dim();
    for frame in seq.frames() {
        out.extend_from_slice(frame);
        out.push(1.0);
    }
    out.extend_from_slice(seq.frame(seq.n_frames() - 1));
    out.push(0.0);
    out.extend(std::iter::repeat_n(0.0, d + 1));
}

/// `(ap_1(x_1), ..., ap_1(x_n), ap_0(x_n), 0)` for one turn.
pub fn visibility_transform(seq: &FeatureSequence) -> Result<PiecewiseLinearPath> {
    if seq.n_frames() == 0 {
        return Err(Error::EmptySequence);
    }
    let mut data = Vec::with_capacity((seq.n_frames() + 2) * (seq.dim() + 1));
    push_block(seq, &mut data);
    PiecewiseLinearPath::new(seq.dim() + 1, data)
}

/// Concatenated per-turn visibility blocks for a whole interview.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityPath {
    pub base_dim: usize,
    pub path: PiecewiseLinearPath,
    /// Point index at which each turn's block starts.
    pub turn_boundaries: Vec<usize>,
}

pub fn assemble_interview_path(turns: &[FeatureSequence]) -> Result<VisibilityPath> {
    let first = turns.first().ok_or(Error::NoTurns)?;
    let d = first.dim();
    let total: usize = turns.iter().map(|t| t.n_frames() + 2).sum();
    let mut data = Vec::with_capacity(total * (d + 1));
    let mut turn_boundaries = Vec::with_capacity(turns.len());
    let mut at = 0;
    for (i, t) in turns.iter().enumerate() {
        if !t.same_schema(first) {
            return Err(Error::SchemaMismatch { turn: i });
        }
        turn_boundaries.push(at);
        push_block(t, &mut data);
        at += t.n_frames() + 2;
    }
    Ok(VisibilityPath {
        base_dim: d,
        path: PiecewiseLinearPath::new(d + 1, data)?,
        turn_boundaries,
    })
}

/// Level-`level` signature of the assembled visibility path, over `d + 1` coordinates.
pub fn vt_signature(turns: &[FeatureSequence], level: usize) -> Result<SignatureVector> {
    let vp = assemble_interview_path(turns)?;
    path_signature(&vp.path, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema;

    fn seq(names: &[&str], rows: &[&[f64]]) -> FeatureSequence {
        FeatureSequence::from_rows(schema(names), rows).unwrap()
    }

    #[test]
    fn single_frame_transform() {
        let p = visibility_transform(&seq(&["x"], &[&[5.0]])).unwrap();
        assert_eq!(p.as_flat(), &[5.0, 1.0, 5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_frame_transform() {
        let p = visibility_transform(&seq(&["a", "b"], &[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(
            p.as_flat(),
            &[1.0, 2.0, 1.0, 3.0, 4.0, 1.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn block_concatenation() {
        let names = schema(&["x"]);
        let a = FeatureSequence::from_rows(names.clone(), &[[5.0]]).unwrap();
        let b = FeatureSequence::from_rows(names, &[[7.0]]).unwrap();
        let vp = assemble_interview_path(&[a.clone(), b]).unwrap();
        assert_eq!(
            vp.path.as_flat(),
            &[5.0, 1.0, 5.0, 0.0, 0.0, 0.0, 7.0, 1.0, 7.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(vp.turn_boundaries, vec![0, 3]);
        let single = assemble_interview_path(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.path, visibility_transform(&a).unwrap());
    }

    #[test]
    fn block_lengths_and_markers() {
        let names = schema(&["a", "b"]);
        let lens = [1usize, 4, 2];
        let turns: Vec<_> = lens
            .iter()
            .map(|&n| {
                let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 + 0.5, -(i as f64)]).collect();
                FeatureSequence::from_rows(names.clone(), &rows).unwrap()
            })
            .collect();
        let vp = assemble_interview_path(&turns).unwrap();
        assert_eq!(vp.path.len(), lens.iter().map(|n| n + 2).sum::<usize>());
        for (t, &start) in vp.turn_boundaries.iter().enumerate() {
            let n = lens[t];
            for i in 0..n {
                assert_eq!(vp.path.point(start + i)[2], 1.0);
            }
            let penult = vp.path.point(start + n);
            assert_eq!(penult[2], 0.0);
            assert_eq!(&penult[..2], turns[t].frame(n - 1));
            assert!(vp.path.point(start + n + 1).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let a = seq(&["a"], &[&[1.0]]);
        let b = seq(&["b"], &[&[1.0]]);
        assert_eq!(
            assemble_interview_path(&[a, b]).unwrap_err(),
            Error::SchemaMismatch { turn: 1 }
        );
        assert_eq!(assemble_interview_path(&[]).unwrap_err(), Error::NoTurns);
    }

    #[test]
    fn leading_c_terms() {
        let s = seq(&["a", "b"], &[&[0.2, -0.4], &[1.5, 0.3], &[-0.7, 2.0]]);
        let sig = vt_signature(&[s], 3).unwrap();
        assert_eq!(sig.len(), 39);
        assert_eq!(sig.get(&[3]).unwrap(), -1.0);
        assert!((sig.get(&[3, 1]).unwrap() - (-0.7)).abs() < 1e-12);
        assert!((sig.get(&[3, 2]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_turn_level_one() {
        let s = seq(&["a", "b"], &[&[3.0, -1.0][..]; 4]);
        let sig = vt_signature(&[s], 2).unwrap();
        assert_eq!(sig.level_block(1), &[-3.0, 1.0, -1.0]);
    }
}
