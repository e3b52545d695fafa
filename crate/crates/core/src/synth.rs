//! Seeded synthetic-corpus generator.
//!
//! Produces a full corpus directory — transcripts, a matching embedding
//! file, a token frequency file, per-subject parse-tree sidecars, and an
//! external turn-vector file — with controllable group-level differences
//! in coherence (topic drift) and lexical diversity (Zipf concentration).
//! Everything is driven by one ChaCha8 stream cipher seed: the same seed
//! yields a byte-identical corpus.
//!
//! Generation model: the vocabulary is partitioned into topics; every word
//! in a topic shares the topic's unit vector, so a turn drawn from a single
//! topic has exactly that vector under bag-of-words averaging. Assessor
//! turns use one topic; subject replies pick, per word, the topic nearest
//! the assessor's topic vector after Gaussian noise of scale `topic_drift`.
//! Zero drift therefore reproduces the assessor topic exactly (coherence 1),
//! and rising drift mixes in unrelated near-orthogonal topics, lowering
//! expected coherence monotonically.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{save_transcript, Group, Scene, Speaker, Transcript, Turn};
use crate::embed::{save_external_vectors, ExternalVectorEntry};
use crate::lexical::tag_with_lexicon;
use crate::syntax::ParseTree;

/// Default word-vector dimension; high enough that distinct topic vectors
/// are near-orthogonal, small enough for fast tests.
pub const DEFAULT_DIM: usize = 50;
const DEFAULT_TOPICS: usize = 40;
const DEFAULT_WORDS_PER_TOPIC: usize = 60;
/// Exchanges (assessor question + subject reply) per scene.
const EXCHANGES: std::ops::RangeInclusive<usize> = 5..=8;
/// Per-coordinate noise on the external turn vectors.
const EXT_NOISE: f64 = 0.03;
/// Closed-class filler inserted between content words. All of these carry
/// their real tags in the built-in lexicon, and none appears in the
/// synthetic embedding file, so they never perturb turn vectors.
const FUNCTION_WORDS: [&str; 24] = [
    "the", "a", "an", "and", "or", "but", "to", "of", "in", "on", "at", "with", "for", "from",
    "i", "you", "it", "we", "they", "um", "uh", "oh", "yeah", "okay",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one group profile")]
    NoProfiles,
    #[error("n_per_group must be at least 2, got {0}")]
    BadCount(usize),
    #[error("profile {group}: {message}")]
    BadProfile { group: String, message: String },
    #[error("duplicate group profile for {0}")]
    DuplicateGroup(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}

/// Linear map from a subject's latent parameters to a synthetic overall
/// social-skill score, clamped to [1, 5] after Gaussian noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub intercept: f64,
    pub drift: f64,
    pub concentration: f64,
    pub noise_sigma: f64,
}

/// One group's generation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupProfile {
    pub group: Group,
    /// σ of the Gaussian pushing subject replies off the assessor's topic.
    pub topic_drift: f64,
    /// Zipf exponent for word choice within a topic; higher → fewer types.
    pub vocab_concentration: f64,
    pub turn_len_mean: f64,
    pub turn_len_var: f64,
    /// Probability that a token slot holds a closed-class filler word.
    pub function_word_rate: f64,
    pub sentence_len_mean: f64,
    pub score_weights: ScoreWeights,
}

impl GroupProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |message: &str| SynthError::BadProfile {
            group: self.group.as_str().to_string(),
            message: message.to_string(),
        };
        if !(self.topic_drift >= 0.0 && self.topic_drift.is_finite()) {
            return Err(bad("topic_drift must be finite and >= 0"));
        }
        if !(self.vocab_concentration >= 0.0 && self.vocab_concentration.is_finite()) {
            return Err(bad("vocab_concentration must be finite and >= 0"));
        }
        if !(self.turn_len_mean >= 6.0 && self.turn_len_mean.is_finite()) {
            return Err(bad("turn_len_mean must be finite and >= 6"));
        }
        if !(self.turn_len_var >= 0.0 && self.turn_len_var.is_finite()) {
            return Err(bad("turn_len_var must be finite and >= 0"));
        }
        if !(0.0..0.8).contains(&self.function_word_rate) {
            return Err(bad("function_word_rate must lie in [0, 0.8)"));
        }
        if !(self.sentence_len_mean >= 3.0 && self.sentence_len_mean.is_finite()) {
            return Err(bad("sentence_len_mean must be finite and >= 3"));
        }
        if !(self.score_weights.noise_sigma >= 0.0 && self.score_weights.noise_sigma.is_finite()) {
            return Err(bad("score noise_sigma must be finite and >= 0"));
        }
        for (name, w) in [
            ("intercept", self.score_weights.intercept),
            ("drift weight", self.score_weights.drift),
            ("concentration weight", self.score_weights.concentration),
        ] {
            if !w.is_finite() {
                return Err(bad(&format!("score {name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Two well-separated profiles: fluent controls versus a high-drift,
/// low-diversity clinical group.
pub fn default_profiles() -> Vec<GroupProfile> {
    vec![
        GroupProfile {
            group: Group::Control,
            topic_drift: 0.15,
            vocab_concentration: 0.6,
            turn_len_mean: 16.0,
            turn_len_var: 9.0,
            function_word_rate: 0.35,
            sentence_len_mean: 8.0,
            score_weights: ScoreWeights {
                intercept: 4.8,
                drift: -2.0,
                concentration: -0.8,
                noise_sigma: 0.15,
            },
        },
        GroupProfile {
            group: Group::SzSza,
            topic_drift: 0.9,
            vocab_concentration: 1.1,
            turn_len_mean: 13.0,
            turn_len_var: 9.0,
            function_word_rate: 0.40,
            sentence_len_mean: 7.0,
            score_weights: ScoreWeights {
                intercept: 4.8,
                drift: -2.0,
                concentration: -0.8,
                noise_sigma: 0.15,
            },
        },
    ]
}

/// Structural knobs shared by the whole corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateOptions {
    pub n_per_group: usize,
    pub seed: u64,
    pub dim: usize,
    pub topics: usize,
    pub words_per_topic: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            n_per_group: 30,
            seed: 7,
            dim: DEFAULT_DIM,
            topics: DEFAULT_TOPICS,
            words_per_topic: DEFAULT_WORDS_PER_TOPIC,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub out_dir: PathBuf,
    pub subjects: Vec<String>,
    pub vocab_size: usize,
    pub dim: usize,
}

/// Generates a corpus with default structural options.
pub fn generate(
    profiles: &[GroupProfile],
    n_per_group: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<GenerateSummary, SynthError> {
    let options = GenerateOptions {
        n_per_group,
        seed,
        ..GenerateOptions::default()
    };
    generate_with(profiles, &options, out_dir)
}

struct Vocabulary {
    /// Word strings indexed `topic * words_per_topic + rank`.
    words: Vec<String>,
    /// One unit vector per topic; each word carries its topic's vector.
    centers: Vec<Vec<f64>>,
    words_per_topic: usize,
}

impl Vocabulary {
    fn word(&self, topic: usize, rank: usize) -> &str {
        &self.words[topic * self.words_per_topic + rank]
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn build_vocabulary(rng: &mut ChaCha8Rng, options: &GenerateOptions) -> Vocabulary {
    let mut words = Vec::with_capacity(options.topics * options.words_per_topic);
    for t in 0..options.topics {
        for j in 0..options.words_per_topic {
            words.push(format!("t{t:02}w{j:02}"));
        }
    }
    let centers = (0..options.topics)
        .map(|_| unit_gaussian(rng, options.dim))
        .collect();
    Vocabulary {
        words,
        centers,
        words_per_topic: options.words_per_topic,
    }
}

/// Cumulative Zipf weights over within-topic ranks for inverse-CDF sampling.
fn zipf_cumulative(words_per_topic: usize, exponent: f64) -> Vec<f64> {
    let mut cum = Vec::with_capacity(words_per_topic);
    let mut total = 0.0;
    for r in 1..=words_per_topic {
        total += (r as f64).powf(-exponent);
        cum.push(total);
    }
    cum
}

fn sample_rank(rng: &mut ChaCha8Rng, cum: &[f64]) -> usize {
    let total = *cum.last().expect("non-empty cumulative table");
    let u = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(StandardNormal)
}

/// Nearest topic to `center + drift·g`. The Gaussian is always drawn so the
/// random stream advances identically for every drift setting.
fn drifted_topic(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    topic: usize,
    drift: f64,
) -> usize {
    let dim = vocab.centers[0].len();
    let g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    if drift == 0.0 {
        return topic;
    }
    let target: Vec<f64> = vocab.centers[topic]
        .iter()
        .zip(&g)
        .map(|(c, n)| c + drift * n)
        .collect();
    let mut best = topic;
    let mut best_dot = f64::NEG_INFINITY;
    for (t, center) in vocab.centers.iter().enumerate() {
        let d: f64 = center.iter().zip(&target).map(|(a, b)| a * b).sum();
        if d > best_dot {
            best_dot = d;
            best = t;
        }
    }
    best
}

/// One turn's worth of tokens: content words from the topic sampler mixed
/// with closed-class filler, at least two content words guaranteed.
#[allow(clippy::too_many_arguments)]
fn turn_tokens(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    base_topic: usize,
    drift: Option<f64>,
    zipf: &[f64],
    len_mean: f64,
    len_sd: f64,
    function_word_rate: f64,
) -> Vec<String> {
    let len = normal(rng, len_mean, len_sd).round().max(6.0) as usize;
    let mut tokens: Vec<String> = Vec::with_capacity(len);
    let mut content_slots: Vec<usize> = Vec::new();
    for slot in 0..len {
        if rng.random::<f64>() < function_word_rate && slot != 0 {
            let w = FUNCTION_WORDS[rng.random_range(0..FUNCTION_WORDS.len())];
            tokens.push(w.to_string());
        } else {
            let topic = match drift {
                Some(d) => drifted_topic(rng, vocab, base_topic, d),
                None => base_topic,
            };
            let rank = sample_rank(rng, zipf);
            tokens.push(vocab.word(topic, rank).to_string());
            content_slots.push(slot);
        }
    }
    // A pair-scoring turn needs at least two in-vocabulary words.
    while content_slots.len() < 2 {
        let slot = tokens.iter().position(|t| {
            FUNCTION_WORDS.contains(&t.as_str())
        });
        let slot = slot.expect("length >= 6 guarantees a replaceable slot");
        let topic = match drift {
            Some(d) => drifted_topic(rng, vocab, base_topic, d),
            None => base_topic,
        };
        let rank = sample_rank(rng, zipf);
        tokens[slot] = vocab.word(topic, rank).to_string();
        content_slots.push(slot);
    }
    tokens
}

/// Splits tokens into sentences of roughly `sentence_len_mean` words and
/// renders the turn text plus one right-branching tree per sentence.
fn render_turn(
    rng: &mut ChaCha8Rng,
    tokens: &[String],
    sentence_len_mean: f64,
) -> (String, Vec<ParseTree>) {
    let mut sentences: Vec<&[String]> = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let want = normal(rng, sentence_len_mean, 1.5).round().max(3.0) as usize;
        let end = (start + want).min(tokens.len());
        // Avoid a trailing fragment shorter than 2 words.
        let end = if tokens.len() - end == 1 { tokens.len() } else { end };
        sentences.push(&tokens[start..end]);
        start = end;
    }
    let text = sentences
        .iter()
        .map(|s| format!("{}.", s.join(" ")))
        .collect::<Vec<_>>()
        .join(" ");
    let trees = sentences.iter().map(|s| right_branching(s)).collect();
    (text, trees)
}

fn preterminal(tag: &str, word: &str) -> ParseTree {
    ParseTree::Node {
        label: tag.to_string(),
        children: vec![ParseTree::Leaf {
            token: word.to_string(),
        }],
    }
}

/// `(S (NP (T w) (T w)) (VP (T w) (NP (T w) (NP … ))))` — a two-word subject
/// chunk, then a right-branching spine. Tags come from the built-in lexicon
/// so closed-class density survives preterminal tagging.
fn right_branching(tokens: &[String]) -> ParseTree {
    let tagged = tag_with_lexicon(tokens);
    let pre: Vec<ParseTree> = tagged
        .iter()
        .map(|(w, tag)| preterminal(tag, w))
        .collect();
    let np_len = pre.len().min(2);
    let mut pre = pre;
    let rest = pre.split_off(np_len);
    let np = ParseTree::Node {
        label: "NP".to_string(),
        children: pre,
    };
    if rest.is_empty() {
        return ParseTree::Node {
            label: "S".to_string(),
            children: vec![np],
        };
    }
    let mut rest = rest;
    let verb = rest.remove(0);
    let mut chain: Option<ParseTree> = None;
    for node in rest.into_iter().rev() {
        let children = match chain.take() {
            None => vec![node],
            Some(c) => vec![node, c],
        };
        chain = Some(ParseTree::Node {
            label: "NP".to_string(),
            children,
        });
    }
    let vp_children = match chain {
        None => vec![verb],
        Some(c) => vec![verb, c],
    };
    let vp = ParseTree::Node {
        label: "VP".to_string(),
        children: vp_children,
    };
    ParseTree::Node {
        label: "S".to_string(),
        children: vec![np, vp],
    }
}

struct SubjectArtifacts {
    transcript: Transcript,
    trees: Vec<ParseTree>,
    ext_entries: Vec<ExternalVectorEntry>,
}

fn generate_subject(
    rng: &mut ChaCha8Rng,
    subject_id: &str,
    profile: &GroupProfile,
    vocab: &Vocabulary,
    options: &GenerateOptions,
) -> SubjectArtifacts {
    // Per-subject latent parameters jitter around the profile and drive both
    // the generated text and the synthetic score. The jitter scales with the
    // profile value so a zero-drift profile stays exactly at zero.
    let drift = normal(rng, profile.topic_drift, 0.15 * profile.topic_drift).abs();
    let concentration = normal(
        rng,
        profile.vocab_concentration,
        0.1 * profile.vocab_concentration,
    )
    .abs();
    let zipf = zipf_cumulative(vocab.words_per_topic, concentration);
    let len_sd = profile.turn_len_var.sqrt();

    let w = &profile.score_weights;
    let raw_score = w.intercept
        + w.drift * drift
        + w.concentration * concentration
        + normal(rng, 0.0, w.noise_sigma);
    let sspa = raw_score.clamp(1.0, 5.0);

    let mut scenes = Vec::with_capacity(3);
    let mut trees = Vec::new();
    let mut ext_entries = Vec::new();
    for scene_id in 1..=3u8 {
        let exchanges = rng.random_range(EXCHANGES);
        let mut turns = Vec::with_capacity(exchanges * 2);
        for _ in 0..exchanges {
            let topic = rng.random_range(0..vocab.centers.len());
            let assessor_tokens = turn_tokens(
                rng,
                vocab,
                topic,
                None,
                &zipf,
                profile.turn_len_mean.min(12.0),
                1.5,
                profile.function_word_rate,
            );
            let (assessor_text, _) = render_turn(rng, &assessor_tokens, profile.sentence_len_mean);
            turns.push(Turn::new(Speaker::Assessor, assessor_text));

            let subject_tokens = turn_tokens(
                rng,
                vocab,
                topic,
                Some(drift),
                &zipf,
                profile.turn_len_mean,
                len_sd,
                profile.function_word_rate,
            );
            let (subject_text, subject_trees) =
                render_turn(rng, &subject_tokens, profile.sentence_len_mean);
            turns.push(Turn::new(Speaker::Subject, subject_text));
            trees.extend(subject_trees);
        }
        // External vectors: the turn's bag-of-words mean plus seeded noise.
        for (turn_index, turn) in turns.iter().enumerate() {
            let mut sum = vec![0.0; options.dim];
            let mut k = 0usize;
            for token in &turn.tokens {
                if let Some(stripped) = topic_of(token, vocab) {
                    for (s, c) in sum.iter_mut().zip(&vocab.centers[stripped]) {
                        *s += c;
                    }
                    k += 1;
                }
            }
            if k > 0 {
                for s in &mut sum {
                    *s /= k as f64;
                }
            }
            for s in &mut sum {
                *s += EXT_NOISE * rng.sample::<f64, _>(StandardNormal);
            }
            ext_entries.push(ExternalVectorEntry {
                subject_id: subject_id.to_string(),
                scene_id,
                turn_index,
                vector: Some(sum),
                valid: true,
            });
        }
        scenes.push(Scene { scene_id, turns });
    }

    SubjectArtifacts {
        transcript: Transcript {
            subject_id: subject_id.to_string(),
            group: Some(profile.group),
            sspa_overall: Some(sspa),
            scenes,
        },
        trees,
        ext_entries,
    }
}

/// Parses `t<topic>w<rank>` back to its topic; filler words return `None`.
fn topic_of(token: &str, vocab: &Vocabulary) -> Option<usize> {
    let rest = token.strip_prefix('t')?;
    let (topic_str, _) = rest.split_once('w')?;
    let topic: usize = topic_str.parse().ok()?;
    if topic < vocab.centers.len() {
        Some(topic)
    } else {
        None
    }
}

/// Generates the corpus into `out_dir`, creating it if needed. Deterministic
/// for a fixed seed: subject `i` always consumes RNG stream `i + 1`, and the
/// vocabulary consumes stream 0, so output is independent of scheduling.
pub fn generate_with(
    profiles: &[GroupProfile],
    options: &GenerateOptions,
    out_dir: &Path,
) -> Result<GenerateSummary, SynthError> {
    if profiles.is_empty() {
        return Err(SynthError::NoProfiles);
    }
    if options.n_per_group < 2 {
        return Err(SynthError::BadCount(options.n_per_group));
    }
    let mut seen = std::collections::HashSet::new();
    for profile in profiles {
        profile.validate()?;
        if !seen.insert(profile.group) {
            return Err(SynthError::DuplicateGroup(profile.group.as_str().to_string()));
        }
    }

    // Stream 0 is the vocabulary; subject i gets its own stream i + 1, so a
    // subject's text depends only on the seed, its index, and its profile.
    let stream_rng = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(options.seed);
        r.set_stream(stream);
        r
    };
    let vocab = build_vocabulary(&mut stream_rng(0), options);

    let mut subjects = Vec::new();
    let mut all_ext: Vec<ExternalVectorEntry> = Vec::new();
    let mut token_counts: std::collections::BTreeMap<String, u64> = std::collections::BTreeMap::new();
    let transcripts_dir = out_dir.join("transcripts");
    let trees_dir = out_dir.join("trees");

    let mut subject_index = 0u64;
    for profile in profiles {
        for i in 0..options.n_per_group {
            let subject_id = format!("{}_{:03}", profile.group.as_str(), i);
            let mut rng = stream_rng(subject_index + 1);
            let artifacts = generate_subject(&mut rng, &subject_id, profile, &vocab, options);

            for scene in &artifacts.transcript.scenes {
                for turn in &scene.turns {
                    for token in &turn.tokens {
                        *token_counts.entry(token.clone()).or_insert(0) += 1;
                    }
                }
            }
            save_transcript(
                &artifacts.transcript,
                &transcripts_dir.join(format!("{subject_id}.json")),
            )?;
            let sidecar = artifacts
                .trees
                .iter()
                .map(|t| t.to_bracketed())
                .collect::<Vec<_>>()
                .join("\n")
                + "\n";
            let tree_path = trees_dir.join(format!("{subject_id}.trees"));
            crate::io_util::write_atomic(&tree_path, sidecar.as_bytes()).map_err(|source| {
                SynthError::Io {
                    path: tree_path.clone(),
                    source,
                }
            })?;
            all_ext.extend(artifacts.ext_entries);
            subjects.push(subject_id);
            subject_index += 1;
        }
    }

    let mut embedding_lines = String::new();
    embedding_lines.push_str(&format!("{} {}\n", vocab.words.len(), options.dim));
    for (idx, word) in vocab.words.iter().enumerate() {
        let topic = idx / vocab.words_per_topic;
        embedding_lines.push_str(word);
        for value in &vocab.centers[topic] {
            embedding_lines.push_str(&format!(" {value:.17e}"));
        }
        embedding_lines.push('\n');
    }
    let emb_path = out_dir.join("embeddings.txt");
    crate::io_util::write_atomic(&emb_path, embedding_lines.as_bytes()).map_err(|source| {
        SynthError::Io {
            path: emb_path,
            source,
        }
    })?;

    let mut freq_lines = String::new();
    for (word, count) in &token_counts {
        freq_lines.push_str(&format!("{word} {count}\n"));
    }
    let freq_path = out_dir.join("frequencies.txt");
    crate::io_util::write_atomic(&freq_path, freq_lines.as_bytes()).map_err(|source| {
        SynthError::Io {
            path: freq_path,
            source,
        }
    })?;

    save_external_vectors(&mut all_ext, &out_dir.join("ext_vectors.json"))?;

    Ok(GenerateSummary {
        out_dir: out_dir.to_path_buf(),
        subjects,
        vocab_size: vocab.words.len(),
        dim: options.dim,
    })
}

/// Loads group profiles from a JSON array file.
pub fn load_profiles(path: &Path) -> Result<Vec<GroupProfile>, SynthError> {
    let bytes = std::fs::read(path).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let profiles: Vec<GroupProfile> =
        serde_json::from_slice(&bytes).map_err(|e| SynthError::BadProfile {
            group: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(profiles)
}

/// Writes group profiles as a JSON array file.
pub fn save_profiles(profiles: &[GroupProfile], path: &Path) -> Result<(), SynthError> {
    let mut body = serde_json::to_string_pretty(profiles).expect("profile serialization");
    body.push('\n');
    crate::io_util::write_atomic(path, body.as_bytes()).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}
