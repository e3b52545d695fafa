//! Word-vector store, word-frequency table, and turn encoders.
//!
//! Two encoders are computed in-process: an unweighted bag-of-words average
//! and a smooth-inverse-frequency (SIF) weighted average with first principal
//! component removal at batch level. A third slot ingests precomputed turn
//! vectors from a sidecar file, covering encoders that are produced offline.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Transcript;

/// Default SIF weighting parameter.
pub const DEFAULT_SIF_A: f64 = 1e-3;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 1000;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedVectorFile {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: empty embedding file")]
    EmptyEmbeddingFile { path: PathBuf },
    #[error("SIF parameter a must be positive, got {a}")]
    BadSifParameter { a: f64 },
    #[error("cannot estimate first principal component from {valid} valid vectors (need at least 2)")]
    TooFewVectors { valid: usize },
    #[error("cosine similarity of a zero-norm vector is undefined")]
    ZeroNorm,
    #[error("{path}: external vector entries disagree on dimension (saw {a} and {b})")]
    ExternalDimensionMismatch { path: PathBuf, a: usize, b: usize },
    #[error("external vectors missing for {count} turn(s) used in pairing: {listing}")]
    MissingExternalVectors { count: usize, listing: String },
}

/// Immutable vocabulary of dense word vectors, all of one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

/// Load-time diagnostics for an embedding file.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbedLoadStats {
    /// Words that appeared more than once; the last occurrence wins.
    pub duplicate_words: usize,
}

impl EmbeddingStore {
    /// Builds a store from in-memory entries. Every vector must have length
    /// `dim` and the vocabulary must be non-empty.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<EmbeddingStore, EmbedError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = HashMap::new();
        for (i, (word, vec)) in entries.into_iter().enumerate() {
            if vec.len() != dim {
                return Err(EmbedError::MalformedVectorFile {
                    path: PathBuf::from("<memory>"),
                    line: i + 1,
                    message: format!("expected {dim} values, got {}", vec.len()),
                });
            }
            table.insert(word.into(), vec);
        }
        if table.is_empty() {
            return Err(EmbedError::EmptyEmbeddingFile {
                path: PathBuf::from("<memory>"),
            });
        }
        Ok(EmbeddingStore { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.table.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.table.contains_key(word)
    }
}

/// Loads a plain-text word-vector file: a `<vocab_size> <dimension>` header
/// line followed by one `word v1 v2 ... vd` line per word.
pub fn load_embeddings(path: &Path) -> Result<(EmbeddingStore, EmbedLoadStats), EmbedError> {
    let content = fs::read_to_string(path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| EmbedError::EmptyEmbeddingFile {
        path: path.to_path_buf(),
    })?;
    let mut parts = header.split_whitespace();
    let _vocab_size: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(path, 1, "header must be '<vocab_size> <dimension>'"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(path, 1, "header must be '<vocab_size> <dimension>'"))?;
    if dim == 0 {
        return Err(malformed(path, 1, "dimension must be positive"));
    }

    let mut table: HashMap<String, Vec<f64>> = HashMap::new();
    let mut duplicates = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let values: Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let values = values
            .map_err(|e| malformed(path, idx + 1, &format!("bad float: {e}")))?;
        if values.len() != dim {
            return Err(malformed(
                path,
                idx + 1,
                &format!("expected {dim} values, got {}", values.len()),
            ));
        }
        if table.insert(word.to_string(), values).is_some() {
            duplicates += 1;
        }
    }
    if table.is_empty() {
        return Err(EmbedError::EmptyEmbeddingFile {
            path: path.to_path_buf(),
        });
    }
    Ok((
        EmbeddingStore { dim, table },
        EmbedLoadStats {
            duplicate_words: duplicates,
        },
    ))
}

fn malformed(path: &Path, line: usize, message: &str) -> EmbedError {
    EmbedError::MalformedVectorFile {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Relative word frequencies p(w) in (0, 1]. Unseen words fall back to the
/// minimum observed frequency.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    probs: HashMap<String, f64>,
    default_prob: f64,
}

impl FrequencyTable {
    /// Builds a table from raw counts or unnormalized weights; values are
    /// normalized to relative frequencies.
    pub fn from_weights<I, S>(weights: I) -> Result<FrequencyTable, EmbedError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let raw: Vec<(String, f64)> = weights.into_iter().map(|(w, c)| (w.into(), c)).collect();
        let total: f64 = raw.iter().map(|(_, c)| c).sum();
        if raw.is_empty() || total <= 0.0 || !total.is_finite() {
            return Err(malformed(
                Path::new("<memory>"),
                0,
                "frequency table needs at least one positive weight",
            ));
        }
        let mut probs = HashMap::with_capacity(raw.len());
        let mut min_prob = f64::INFINITY;
        for (word, count) in raw {
            if count <= 0.0 || !count.is_finite() {
                return Err(malformed(
                    Path::new("<memory>"),
                    0,
                    &format!("non-positive frequency for '{word}'"),
                ));
            }
            let p = count / total;
            min_prob = min_prob.min(p);
            probs.insert(word, p);
        }
        Ok(FrequencyTable {
            probs,
            default_prob: min_prob,
        })
    }

    /// Loads `word count-or-probability` lines.
    pub fn load(path: &Path) -> Result<FrequencyTable, EmbedError> {
        let content = fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut weights = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line");
            let value: f64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed(path, idx + 1, "expected 'word value'"))?;
            if value <= 0.0 || !value.is_finite() {
                return Err(malformed(path, idx + 1, "frequency must be positive"));
            }
            weights.push((word.to_string(), value));
        }
        FrequencyTable::from_weights(weights).map_err(|_| EmbedError::EmptyEmbeddingFile {
            path: path.to_path_buf(),
        })
    }

    /// Derives relative frequencies from all tokens in a corpus. Used as a
    /// fallback when no external frequency file is available.
    pub fn from_corpus(transcripts: &[Transcript]) -> Result<FrequencyTable, EmbedError> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        for t in transcripts {
            for scene in &t.scenes {
                for turn in &scene.turns {
                    for token in &turn.tokens {
                        *counts.entry(token.clone()).or_insert(0.0) += 1.0;
                    }
                }
            }
        }
        FrequencyTable::from_weights(counts)
    }

    pub fn prob(&self, word: &str) -> f64 {
        self.probs.get(word).copied().unwrap_or(self.default_prob)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// A turn's vector representation. `valid` is false when no in-vocabulary
/// token contributed, in which case the vector is all zeros and must never
/// enter a similarity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnVector {
    pub vector: Vec<f64>,
    pub valid: bool,
}

impl TurnVector {
    pub fn invalid(dim: usize) -> TurnVector {
        TurnVector {
            vector: vec![0.0; dim],
            valid: false,
        }
    }

    fn from_vector(vector: Vec<f64>) -> TurnVector {
        // A degenerate all-zero result cannot enter a cosine pair, so it is
        // demoted to invalid rather than left as a trap for callers.
        let valid = vector.iter().any(|&x| x != 0.0);
        TurnVector { vector, valid }
    }
}

/// Unweighted bag-of-words average over in-vocabulary tokens.
/// Out-of-vocabulary tokens are skipped, not zero-imputed.
pub fn encode_bow<S: AsRef<str>>(tokens: &[S], store: &EmbeddingStore) -> TurnVector {
    let mut sum = vec![0.0; store.dim()];
    let mut k = 0usize;
    for token in tokens {
        if let Some(vec) = store.get(token.as_ref()) {
            for (s, v) in sum.iter_mut().zip(vec) {
                *s += v;
            }
            k += 1;
        }
    }
    if k == 0 {
        return TurnVector::invalid(store.dim());
    }
    for s in &mut sum {
        *s /= k as f64;
    }
    TurnVector::from_vector(sum)
}

/// SIF-weighted average: each in-vocabulary token contributes
/// `a / (a + p(token))` times its vector, normalized by the in-vocabulary
/// token count. First-PC removal happens separately at batch level.
pub fn encode_sif<S: AsRef<str>>(
    tokens: &[S],
    store: &EmbeddingStore,
    freq: &FrequencyTable,
    a: f64,
) -> Result<TurnVector, EmbedError> {
    if a <= 0.0 || !a.is_finite() {
        return Err(EmbedError::BadSifParameter { a });
    }
    let mut sum = vec![0.0; store.dim()];
    let mut k = 0usize;
    for token in tokens {
        let token = token.as_ref();
        if let Some(vec) = store.get(token) {
            let weight = a / (a + freq.prob(token));
            for (s, v) in sum.iter_mut().zip(vec) {
                *s += weight * v;
            }
            k += 1;
        }
    }
    if k == 0 {
        return Ok(TurnVector::invalid(store.dim()));
    }
    for s in &mut sum {
        *s /= k as f64;
    }
    Ok(TurnVector::from_vector(sum))
}

fn fix_sign(u: &mut [f64]) {
    let mut best = 0usize;
    for (i, &x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        for x in u.iter_mut() {
            *x = -*x;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First principal direction of the given vectors via power iteration on the
/// uncentered Gram matrix. Deterministic: fixed all-ones start, tolerance
/// 1e-10 on direction change, at most 1000 iterations, sign fixed so the
/// largest-magnitude coordinate is positive.
fn first_principal_direction(vectors: &[&[f64]], dim: usize) -> Vec<f64> {
    // Start candidates in case an iterate lands orthogonal to the span.
    let starts = std::iter::once(None).chain((0..dim).map(Some));
    for start in starts {
        let mut u = match start {
            None => vec![1.0 / (dim as f64).sqrt(); dim],
            Some(j) => {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                e
            }
        };
        fix_sign(&mut u);
        let mut ok = true;
        for _ in 0..POWER_ITER_MAX {
            let mut w = vec![0.0; dim];
            for v in vectors {
                let z = dot(v, &u);
                for (wi, vi) in w.iter_mut().zip(*v) {
                    *wi += z * vi;
                }
            }
            let n = norm(&w);
            if n < f64::MIN_POSITIVE {
                ok = false;
                break;
            }
            for x in &mut w {
                *x /= n;
            }
            fix_sign(&mut w);
            let delta = u
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            u = w;
            if delta < POWER_ITER_TOL {
                break;
            }
        }
        if ok {
            return u;
        }
    }
    // All vectors are zero; unreachable for valid TurnVectors.
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    e
}

/// First principal direction of pre-filtered valid (nonzero) vectors.
pub fn principal_direction(vectors: &[&[f64]]) -> Result<Vec<f64>, EmbedError> {
    if vectors.len() < 2 {
        return Err(EmbedError::TooFewVectors {
            valid: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    Ok(first_principal_direction(vectors, dim))
}

/// Subtracts the projection of `v` onto the unit direction `u`, in place.
pub fn subtract_projection(v: &mut [f64], u: &[f64]) {
    let z = dot(v, u);
    for (x, ui) in v.iter_mut().zip(u) {
        *x -= z * ui;
    }
}

/// Removes the projection onto the first principal direction of the valid
/// vectors from each valid vector, in place. Invalid vectors pass through
/// untouched. Returns the direction that was removed.
pub fn remove_first_pc(vectors: &mut [TurnVector]) -> Result<Vec<f64>, EmbedError> {
    let valid: Vec<&[f64]> = vectors
        .iter()
        .filter(|v| v.valid)
        .map(|v| v.vector.as_slice())
        .collect();
    let u = principal_direction(&valid)?;
    for tv in vectors.iter_mut().filter(|v| v.valid) {
        subtract_projection(&mut tv.vector, &u);
    }
    Ok(u)
}

/// Cosine similarity of two nonzero vectors. Callers must filter invalid
/// turn vectors before pairing.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb))
}

/// One record of the external turn-vector sidecar file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalVectorEntry {
    pub subject_id: String,
    pub scene_id: u8,
    /// 0-based turn index within the scene.
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    /// Explicitly marks a turn as having no usable vector.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub valid: bool,
}

fn default_true() -> bool {
    true
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_true(b: &bool) -> bool {
    *b
}

/// Precomputed per-turn vectors keyed by (subject, scene, turn index).
#[derive(Debug, Clone)]
pub struct ExternalVectors {
    dim: usize,
    map: HashMap<(String, u8, usize), TurnVector>,
}

impl ExternalVectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, subject_id: &str, scene_id: u8, turn_index: usize) -> Option<&TurnVector> {
        self.map
            .get(&(subject_id.to_string(), scene_id, turn_index))
    }

    /// Confirms that every `(subject, scene, turn)` key in `required` has an
    /// entry; reports all missing keys at once.
    pub fn check_coverage<'a, I>(&self, required: I) -> Result<(), EmbedError>
    where
        I: IntoIterator<Item = (&'a str, u8, usize)>,
    {
        let mut missing: Vec<String> = required
            .into_iter()
            .filter(|(s, sc, t)| self.get(s, *sc, *t).is_none())
            .map(|(s, sc, t)| format!("({s}, scene {sc}, turn {t})"))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        missing.sort();
        let count = missing.len();
        let listing = missing.join(", ");
        Err(EmbedError::MissingExternalVectors { count, listing })
    }
}

/// Loads the external turn-vector sidecar file (a JSON array of entries).
pub fn load_external_vectors(path: &Path) -> Result<ExternalVectors, EmbedError> {
    let bytes = fs::read(path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries: Vec<ExternalVectorEntry> = serde_json::from_slice(&bytes)
        .map_err(|e| malformed(path, 0, &format!("bad external vector file: {e}")))?;
    let mut dim: Option<usize> = None;
    let mut map = HashMap::with_capacity(entries.len());
    for entry in entries {
        let tv = match (entry.valid, entry.vector) {
            (true, Some(v)) if !v.is_empty() => {
                match dim {
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(EmbedError::ExternalDimensionMismatch {
                            path: path.to_path_buf(),
                            a: d,
                            b: v.len(),
                        })
                    }
                    _ => {}
                }
                TurnVector::from_vector(v)
            }
            _ => TurnVector::invalid(dim.unwrap_or(0)),
        };
        map.insert((entry.subject_id, entry.scene_id, entry.turn_index), tv);
    }
    Ok(ExternalVectors {
        dim: dim.unwrap_or(0),
        map,
    })
}

/// Serializes external vector entries in deterministic key order.
pub fn save_external_vectors(
    entries: &mut Vec<ExternalVectorEntry>,
    path: &Path,
) -> Result<(), EmbedError> {
    entries.sort_by(|a, b| {
        (&a.subject_id, a.scene_id, a.turn_index).cmp(&(&b.subject_id, b.scene_id, b.turn_index))
    });
    let mut body = serde_json::to_string_pretty(entries).expect("external vector serialization");
    body.push('\n');
    crate::io_util::write_atomic(path, body.as_bytes()).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })
}
