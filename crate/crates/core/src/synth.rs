//! Synthetic interviews whose classes differ only in the order of frames within a turn.
//!
//! Every turn's frames are drawn from the same distribution for both classes.
//! Even-indexed subjects (H, label 0) get their frames shuffled uniformly;
//! odd-indexed subjects (BD, label 1) get each column sorted ascending. Values
//! and orderings come from separate random streams, so the same value draw
//! ordered either way yields identical per-turn multisets. Each turn carries
//! a random per-dimension offset so that pooled trend statistics see mostly
//! between-turn noise.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Controls, Diagnosis, FeatureLevel, FeatureSetDecl, Speaker};
use crate::dialogue::{TurnRecord, DIALOGUE_FEATURES};
use crate::manifest::{write_matrix, Manifest, ManifestSubject, ManifestTurn};

pub const ACOUSTIC_SET: &str = "acoustic";
pub const DIALOGUE_SET: &str = "dialogue";

const OFFSET_SD: f64 = 3.0;
const ORDER_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub subjects: usize,
    /// Participant turns per subject; an interviewer turn precedes each.
    pub turns: usize,
    pub frames: usize,
    pub dim: usize,
    pub seed: u64,
}

/// An in-memory synthetic dataset: the manifest plus every matrix it references.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub manifest: Manifest,
    pub header: Vec<String>,
    /// `(relative path, rows)` in manifest order.
    pub matrices: Vec<(String, Vec<Vec<f64>>)>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn draw_turn(r: &mut ChaCha8Rng, frames: usize, dim: usize) -> Vec<Vec<f64>> {
    let offset = Normal::new(0.0, OFFSET_SD).expect("valid sd");
    let noise = Normal::new(0.0, 1.0).expect("valid sd");
    let mu: Vec<f64> = (0..dim).map(|_| offset.sample(r)).collect();
    (0..frames)
        .map(|_| mu.iter().map(|m| m + noise.sample(r)).collect())
        .collect()
}

fn sort_columns(rows: &mut [Vec<f64>]) {
    let dim = rows.first().map_or(0, Vec::len);
    for j in 0..dim {
        let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        for (r, v) in rows.iter_mut().zip(col) {
            r[j] = v;
        }
    }
}

/// Applies the class ordering to one turn: shuffled rows for label 0,
/// ascending columns for label 1.
pub fn order_turn(rows: &mut [Vec<f64>], label: u8, order: &mut ChaCha8Rng) {
    if label == 1 {
        sort_columns(rows);
    } else {
        rows.shuffle(order);
    }
}

/// Participant-turn matrices of subject `i`, in turn order.
pub fn participant_turns(spec: &SynthSpec, i: usize) -> Vec<Vec<Vec<f64>>> {
    let mut values = rng(spec.seed, i as u64);
    let mut order = rng(spec.seed, ORDER_STREAM | i as u64);
    (0..spec.turns)
        .map(|_| {
            let mut rows = draw_turn(&mut values, spec.frames, spec.dim);
            order_turn(&mut rows, (i % 2) as u8, &mut order);
            rows
        })
        .collect()
}

fn pick<'a>(r: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[r.random_range(0..options.len())]
}

/// Builds the dataset without touching the filesystem.
pub fn synth_build(spec: &SynthSpec) -> SynthData {
    let header: Vec<String> = (1..=spec.dim).map(|j| format!("f{j}")).collect();
    let mut subjects = Vec::with_capacity(spec.subjects);
    let mut matrices = Vec::new();

    for i in 0..spec.subjects {
        let id = format!("S{i:03}");
        let participant = participant_turns(spec, i);
        let mut shared = rng(spec.seed, (1 << 33) | i as u64);
        let mut own = rng(spec.seed, (1 << 34) | i as u64);

        let mut turns = Vec::with_capacity(2 * spec.turns);
        let mut t = 0.0f64;
        for (k, rows) in participant.into_iter().enumerate() {
            for speaker in [Speaker::Interviewer, Speaker::Participant] {
                let gap: f64 = shared.random_range(0.2..1.0);
                let dur: f64 = shared.random_range(2.5..8.0);
                let start = round_ms(t + gap);
                let end = round_ms(start + dur);
                let pause_at = round_ms(start + dur * shared.random_range(0.3..0.6));
                let pause: f64 = shared.random_range(0.1..0.9);
                let voiced = vec![(start, pause_at), (round_ms(pause_at + pause).min(end), end)];
                let words = (dur * shared.random_range(1.5..3.5)).round() as u32;
                t = end;

                let rows = match speaker {
                    Speaker::Participant => rows.clone(),
                    Speaker::Interviewer => {
                        let mut r = draw_turn(&mut shared, spec.frames, spec.dim);
                        r.shuffle(&mut own);
                        r
                    }
                };
                let tag = match speaker {
                    Speaker::Participant => "p",
                    Speaker::Interviewer => "i",
                };
                let rel = format!("{id}/turn_{k:03}_{tag}.csv");
                matrices.push((rel.clone(), rows));
                turns.push(ManifestTurn {
                    record: TurnRecord {
                        speaker,
                        start_s: start,
                        end_s: end,
                        word_count: words,
                        voiced_segments: voiced,
                    },
                    matrices: [(ACOUSTIC_SET.to_string(), rel)].into_iter().collect(),
                });
            }
        }

        let controls = Controls {
            environment: Some(pick(&mut own, &["room", "phone"]).into()),
            interviewer: Some(pick(&mut own, &["I1", "I2", "I3"]).into()),
            gender: Some(pick(&mut own, &["F", "M"]).into()),
        };
        subjects.push(ManifestSubject {
            id,
            diagnosis: if i % 2 == 1 { Diagnosis::BD } else { Diagnosis::H },
            severity: None,
            controls,
            turns,
        });
    }

    let manifest = Manifest {
        name: format!(
            "synthetic-n{}-t{}-f{}-d{}-s{}",
            spec.subjects, spec.turns, spec.frames, spec.dim, spec.seed
        ),
        min_turn_s: None,
        feature_sets: vec![
            FeatureSetDecl {
                name: ACOUSTIC_SET.into(),
                level: FeatureLevel::Frame,
                columns: header.clone(),
                turn_scaled: false,
            },
            FeatureSetDecl {
                name: DIALOGUE_SET.into(),
                level: FeatureLevel::Turn,
                columns: DIALOGUE_FEATURES.iter().map(|s| s.to_string()).collect(),
                turn_scaled: false,
            },
        ],
        subjects,
    };
    SynthData {
        manifest,
        header,
        matrices,
    }
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Writes `manifest.json` and the per-turn CSV files under `out_dir`.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> std::io::Result<Manifest> {
    if spec.subjects < 2 || spec.turns < 2 || spec.frames < 2 || spec.dim < 1 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "subjects, turns and frames must be at least 2 and dim at least 1",
        ));
    }
    let data = synth_build(spec);
    for (rel, rows) in &data.matrices {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_matrix(&path, &data.header, rows)?;
    }
    let json = serde_json::to_string_pretty(&data.manifest).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join("manifest.json"), json + "\n")?;
    Ok(data.manifest)
}
