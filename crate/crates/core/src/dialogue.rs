//! Turn-taking features computed from transcript timing metadata.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSequence, Speaker};
use crate::error::{Error, Result};

/// Gaps strictly above this (seconds) count as long pauses.
pub const LONG_PAUSE_S: f64 = 0.5;

/// Default minimum turn length in seconds.
pub const MIN_TURN_S: f64 = 2.0;

/// Column names, in emission order.
pub const DIALOGUE_FEATURES: [&str; 13] = [
    "TL", "WPS", "TSO", "THO", "n_consec", "n_OVL", "OVL_dur", "RFC_t", "RFC_n", "n_SP", "SP_m",
    "n_LP", "LP_m",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: Speaker,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub word_count: u32,
    /// Voiced intervals `(start, end)` inside the turn, in order.
    #[serde(default)]
    pub voiced_segments: Vec<(f64, f64)>,
}

impl TurnRecord {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Checks turn ordering, durations and voiced-segment layout.
pub fn validate_turns(turns: &[TurnRecord]) -> Result<()> {
    let bad = |index: usize, reason: &str| Error::InvalidTurn {
        index,
        reason: reason.to_string(),
    };
    for (i, t) in turns.iter().enumerate() {
        if !t.start_s.is_finite() || !t.end_s.is_finite() {
            return Err(bad(i, "non-finite timestamp"));
        }
        if t.end_s <= t.start_s {
            return Err(bad(i, "end must be after start"));
        }
        if i > 0 && t.start_s < turns[i - 1].start_s {
            return Err(bad(i, "turns are not ordered by start time"));
        }
        let mut prev_end = t.start_s;
        for &(s, e) in &t.voiced_segments {
            if !(s.is_finite() && e.is_finite()) || e < s {
                return Err(bad(i, "malformed voiced segment"));
            }
            if s < prev_end || e > t.end_s {
                return Err(bad(
                    i,
                    "voiced segments overlap, are unordered, or leave the turn",
                ));
            }
            prev_end = e;
        }
    }
    Ok(())
}

/// Drops turns shorter than `min_s`; returns the survivors and the number removed.
pub fn filter_short_turns(turns: Vec<TurnRecord>, min_s: f64) -> (Vec<TurnRecord>, usize) {
    let before = turns.len();
    let kept: Vec<_> = turns.into_iter().filter(|t| t.duration() >= min_s).collect();
    let removed = before - kept.len();
    (kept, removed)
}

fn overlap(a: &TurnRecord, b: &TurnRecord) -> f64 {
    (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0)
}

fn row_for(turns: &[TurnRecord], t: usize, cum_target: f64, cum_all: f64, n_target: usize) -> [f64; 13] {
    let turn = &turns[t];
    let tl = turn.duration();
    let wps = turn.word_count as f64 / tl;

    let tso = turns[..t]
        .iter()
        .rev()
        .find(|o| o.speaker != turn.speaker)
        .map_or(0.0, |o| turn.start_s - o.end_s);

    let (tho, n_consec) = {
        let mut run = 1usize;
        while run <= t && turns[t - run].speaker == turn.speaker {
            run += 1;
        }
        let tho = if t > 0 && turns[t - 1].speaker == turn.speaker {
            turn.start_s - turns[t - 1].end_s
        } else {
            0.0
        };
        (tho, run)
    };

    let (mut n_ovl, mut ovl_dur) = (0usize, 0.0);
    for other in turns.iter().filter(|o| o.speaker != turn.speaker) {
        let o = overlap(turn, other);
        if o > 0.0 {
            n_ovl += 1;
            ovl_dur += o;
        }
    }

    let (mut n_sp, mut sum_sp, mut n_lp, mut sum_lp) = (0usize, 0.0, 0usize, 0.0);
    for w in turn.voiced_segments.windows(2) {
        let gap = w[1].0 - w[0].1;
        if gap > LONG_PAUSE_S {
            n_lp += 1;
            sum_lp += gap;
        } else if gap > 0.0 {
            n_sp += 1;
            sum_sp += gap;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };

    [
        tl,
        wps,
        tso,
        tho,
        n_consec as f64,
        n_ovl as f64,
        ovl_dur,
        cum_target / cum_all,
        n_target as f64 / (t + 1) as f64,
        n_sp as f64,
        mean(sum_sp, n_sp),
        n_lp as f64,
        mean(sum_lp, n_lp),
    ]
}

/// Per-turn rows (one per turn by `keep`), with floor control measured for each row's own speaker.
fn rows_where(turns: &[TurnRecord], keep: impl Fn(Speaker) -> bool) -> Result<Vec<[f64; 13]>> {
    validate_turns(turns)?;
    let mut cum_all = 0.0;
    let mut cum_time = [0.0f64; 2];
    let mut cum_count = [0usize; 2];
    let slot = |s: Speaker| match s {
        Speaker::Participant => 0,
        Speaker::Interviewer => 1,
    };
    let mut rows = Vec::new();
    for (t, turn) in turns.iter().enumerate() {
        let k = slot(turn.speaker);
        cum_all += turn.duration();
        cum_time[k] += turn.duration();
        cum_count[k] += 1;
        if keep(turn.speaker) {
            rows.push(row_for(turns, t, cum_time[k], cum_all, cum_count[k]));
        }
    }
    if rows.is_empty() {
        return Err(Error::NoTurns);
    }
    Ok(rows)
}

/// The 13 turn-taking features for each turn of `target`, in turn order.
pub fn dialogue_features(turns: &[TurnRecord], target: Speaker) -> Result<FeatureSequence> {
    let rows = rows_where(turns, |s| s == target)?;
    FeatureSequence::from_rows(crate::data::schema(&DIALOGUE_FEATURES), &rows)
}

/// Dialogue rows for a speaker selection, restricted to `columns` (names from
/// [`DIALOGUE_FEATURES`]). Each row is returned as its own one-frame sequence
/// so turn-level features aggregate exactly like frame-level turns.
pub fn dialogue_turn_sequences(
    turns: &[TurnRecord],
    include: impl Fn(Speaker) -> bool,
    columns: &[String],
) -> Result<Vec<FeatureSequence>> {
    let picks: Vec<usize> = columns
        .iter()
        .map(|c| {
            DIALOGUE_FEATURES
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown dialogue feature {c:?}")))
        })
        .collect::<Result<_>>()?;
    let names: Arc<[String]> = columns.iter().cloned().collect();
    rows_where(turns, include)?
        .into_iter()
        .map(|row| {
            let data = picks.iter().map(|&p| row[p]).collect();
            FeatureSequence::new(names.clone(), data)
        })
        .collect()
}
