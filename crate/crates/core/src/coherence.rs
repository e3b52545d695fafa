//! Turn pairing and similarity-distribution summaries.
//!
//! A scene's raw turns are first merged so that consecutive same-speaker
//! turns become one merged turn, giving an alternating sequence. Every
//! adjacent assessor→subject pair in that sequence contributes one cosine
//! score; a scene/encoder combination thus yields a distribution of scores
//! that is summarized into 7 statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Scene, Speaker};
use crate::embed::{cosine, TurnVector};

/// Statistic names in canonical feature order.
pub const STAT_NAMES: [&str; 7] = ["min", "max", "mean", "median", "stdev", "p90", "p10"];

#[derive(Debug, Error)]
pub enum CoherenceError {
    #[error("subject {subject_id} scene {scene_id} encoder {encoder_id}: no valid turn pairs")]
    NoValidPairs {
        subject_id: String,
        scene_id: u8,
        encoder_id: String,
    },
    #[error("cannot summarize an empty score distribution")]
    EmptyDistribution,
}

/// A maximal run of consecutive turns by one speaker, tokens concatenated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedTurn {
    pub speaker: Speaker,
    pub tokens: Vec<String>,
    /// 0-based indices of the raw turns that were merged, in order.
    pub source_indices: Vec<usize>,
}

/// Collapses consecutive same-speaker turns into merged turns.
pub fn merge_turns(scene: &Scene) -> Vec<MergedTurn> {
    let mut merged: Vec<MergedTurn> = Vec::new();
    for (idx, turn) in scene.turns.iter().enumerate() {
        match merged.last_mut() {
            Some(last) if last.speaker == turn.speaker => {
                last.tokens.extend(turn.tokens.iter().cloned());
                last.source_indices.push(idx);
            }
            _ => merged.push(MergedTurn {
                speaker: turn.speaker,
                tokens: turn.tokens.clone(),
                source_indices: vec![idx],
            }),
        }
    }
    merged
}

/// Indices into a merged-turn sequence of every adjacent assessor→subject
/// pair. A leading subject turn has no preceding assessor turn and is
/// dropped; a trailing assessor turn has no reply and is likewise dropped.
pub fn pair_indices(merged: &[MergedTurn]) -> Vec<(usize, usize)> {
    merged
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].speaker == Speaker::Assessor && w[1].speaker == Speaker::Subject)
        .map(|(i, _)| (i, i + 1))
        .collect()
}

/// Merge-then-pair over a scene, returning owned (assessor, subject) pairs.
pub fn pair_turns(scene: &Scene) -> Vec<(MergedTurn, MergedTurn)> {
    let merged = merge_turns(scene);
    pair_indices(&merged)
        .into_iter()
        .map(|(a, s)| (merged[a].clone(), merged[s].clone()))
        .collect()
}

/// Similarity scores for one subject/scene/encoder combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceDistribution {
    pub subject_id: String,
    pub scene_id: u8,
    pub encoder_id: String,
    /// One cosine score per surviving pair, in pair order.
    pub scores: Vec<f64>,
}

/// The 7 summary statistics of a score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub stdev: f64,
    pub p90: f64,
    pub p10: f64,
}

impl CoherenceStats {
    /// Values in `STAT_NAMES` order.
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.min,
            self.max,
            self.mean,
            self.median,
            self.stdev,
            self.p90,
            self.p10,
        ]
    }
}

/// Cosine score per pair whose two vectors are both valid. The second
/// element counts pairs skipped because either side was invalid.
pub fn score_pairs(vectors: &[TurnVector], pairs: &[(usize, usize)]) -> (Vec<f64>, usize) {
    let mut scores = Vec::with_capacity(pairs.len());
    let mut skipped = 0usize;
    for &(a, s) in pairs {
        let (va, vs) = (&vectors[a], &vectors[s]);
        if va.valid && vs.valid {
            scores.push(
                cosine(&va.vector, &vs.vector).expect("valid turn vectors have nonzero norm"),
            );
        } else {
            skipped += 1;
        }
    }
    (scores, skipped)
}

/// Pairs a scene's merged turns, encodes each merged turn with `encode`, and
/// scores the surviving pairs. Returns the distribution plus the count of
/// pairs skipped over invalid vectors.
pub fn score_scene<F>(
    subject_id: &str,
    scene: &Scene,
    encoder_id: &str,
    mut encode: F,
) -> Result<(CoherenceDistribution, usize), CoherenceError>
where
    F: FnMut(&MergedTurn) -> TurnVector,
{
    let merged = merge_turns(scene);
    let pairs = pair_indices(&merged);
    let vectors: Vec<TurnVector> = merged.iter().map(&mut encode).collect();
    let (scores, skipped) = score_pairs(&vectors, &pairs);
    if scores.is_empty() {
        return Err(CoherenceError::NoValidPairs {
            subject_id: subject_id.to_string(),
            scene_id: scene.scene_id,
            encoder_id: encoder_id.to_string(),
        });
    }
    Ok((
        CoherenceDistribution {
            subject_id: subject_id.to_string(),
            scene_id: scene.scene_id,
            encoder_id: encoder_id.to_string(),
            scores,
        },
        skipped,
    ))
}

/// p-th percentile (p in [0, 100]) of a sorted slice by linear interpolation
/// at rank p/100 × (n−1).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=100.0).contains(&p));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summarizes a non-empty score distribution into the 7 statistics.
/// Standard deviation uses the sample (n−1) denominator and is 0 when n=1.
pub fn summarize(scores: &[f64]) -> Result<CoherenceStats, CoherenceError> {
    if scores.is_empty() {
        return Err(CoherenceError::EmptyDistribution);
    }
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("cosine scores are not NaN"));
    // Mean and stdev accumulate over the sorted values so the result is
    // bitwise independent of input order.
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let stdev = if n == 1 {
        0.0
    } else {
        let ss: f64 = sorted.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(CoherenceStats {
        min: sorted[0],
        max: sorted[n - 1],
        mean,
        median: percentile(&sorted, 50.0),
        stdev,
        p90: percentile(&sorted, 90.0),
        p10: percentile(&sorted, 10.0),
    })
}
