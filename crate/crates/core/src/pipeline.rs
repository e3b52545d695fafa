//! Feature-panel assembly and the feature-table file format.
//!
//! One subject yields 63 coherence features (7 statistics × 3 encoders ×
//! 3 scenes) plus 10 complexity features. Feature names are fixed:
//! `<encoder>_<stat>_scene<k>` for coherence, and the complexity names in
//! [`COMPLEXITY_NAMES`]. Tables are CSV with a mandatory header, features in
//! canonical order, and values printed at 17 significant digits so a
//! write/read round trip is exact.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coherence::{
    merge_turns, pair_indices, score_pairs, summarize, CoherenceDistribution, MergedTurn,
    STAT_NAMES,
};
use crate::corpus::{lexical_counts, split_sentences, Group, Speaker, Transcript};
use crate::embed::{
    encode_bow, encode_sif, principal_direction, subtract_projection, EmbeddingStore,
    ExternalVectors, FrequencyTable, TurnVector, DEFAULT_SIF_A,
};
use crate::learn::Dataset;
use crate::lexical::{
    brunet, density_ratios, honore, mattr, mls, tag_with_lexicon, ttr, FunctionTagSet,
    DEFAULT_MATTR_WINDOW,
};
use crate::syntax::{
    aggregate_heights, coverage_check, strip_root, tree_height, yngve_depths, yngve_stats,
    ParseTree, TreeAggregate,
};

/// Complexity feature names in canonical order.
pub const COMPLEXITY_NAMES: [&str; 10] = [
    "mattr",
    "brunet",
    "honore",
    "func_w",
    "uh_w",
    "mls",
    "yngve_mean",
    "yngve_total",
    "yngve_max",
    "tree_height",
];

const SCENES: [u8; 3] = [1, 2, 3];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("subject {subject_id}: scene {scene_id} is missing")]
    MissingScene { subject_id: String, scene_id: u8 },
    #[error("subject {subject_id}, feature {feature}: {message}")]
    Feature {
        subject_id: String,
        feature: String,
        message: String,
    },
    #[error("external vectors requested but no external vector file was supplied")]
    ExternalNotConfigured,
    #[error("no parse trees supplied for subject {subject_id}")]
    MissingTrees { subject_id: String },
    #[error("corpus-wide principal component needs at least 2 valid turn vectors, got {valid}")]
    TooFewSifVectors { valid: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}, column {column}: {message}")]
    Table {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    TableShape { path: PathBuf, message: String },
    #[error("subject {subject_id}: feature set differs from the first subject's")]
    InconsistentColumns { subject_id: String },
    #[error("subject {subject_id}: missing {what} label required by this operation")]
    MissingLabel { subject_id: String, what: String },
    #[error("no panels to operate on")]
    Empty,
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error(transparent)]
    Syntax(#[from] crate::syntax::SyntaxError),
}

/// Which turn encoders contribute coherence features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Bow,
    Sif,
    Ext,
}

impl EncoderKind {
    pub fn parse(s: &str) -> Option<EncoderKind> {
        match s {
            "bow" => Some(EncoderKind::Bow),
            "sif" => Some(EncoderKind::Sif),
            "ext" => Some(EncoderKind::Ext),
            _ => None,
        }
    }
}

/// Extraction knobs with the documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub encoders: Vec<EncoderKind>,
    pub sif_a: f64,
    pub mattr_window: usize,
    pub tree_aggregate: TreeAggregate,
    pub include_ttr: bool,
    /// Column label for the external-encoder slot.
    pub ext_label: String,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            encoders: vec![EncoderKind::Bow, EncoderKind::Sif, EncoderKind::Ext],
            sif_a: DEFAULT_SIF_A,
            mattr_window: DEFAULT_MATTR_WINDOW,
            tree_aggregate: TreeAggregate::Mean,
            include_ttr: false,
            ext_label: "ext".to_string(),
        }
    }
}

impl ExtractConfig {
    pub fn encoder_label(&self, encoder: EncoderKind) -> &str {
        match encoder {
            EncoderKind::Bow => "bow",
            EncoderKind::Sif => "sif",
            EncoderKind::Ext => &self.ext_label,
        }
    }
}

/// The fixed feature-name list an extraction run will produce.
pub fn canonical_feature_names(config: &ExtractConfig) -> Vec<String> {
    let mut names = Vec::new();
    for &encoder in &config.encoders {
        let label = config.encoder_label(encoder);
        for scene in SCENES {
            for stat in STAT_NAMES {
                names.push(format!("{label}_{stat}_scene{scene}"));
            }
        }
    }
    names.extend(COMPLEXITY_NAMES.iter().map(|n| n.to_string()));
    if config.include_ttr {
        names.push("ttr".to_string());
    }
    names
}

/// One subject's extracted feature panel with its labels carried through.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    pub subject_id: String,
    pub group: Option<Group>,
    pub sspa_overall: Option<f64>,
    /// (name, value) in canonical order.
    pub features: Vec<(String, f64)>,
}

impl FeaturePanel {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.features
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Read-only inputs shared by every subject in a run.
pub struct ExtractResources<'a> {
    pub store: &'a EmbeddingStore,
    pub freq: &'a FrequencyTable,
    pub external: Option<&'a ExternalVectors>,
    /// Per-subject sidecar trees aligned to subject sentence order.
    pub trees: &'a HashMap<String, Vec<Option<ParseTree>>>,
}

/// An on-disk corpus directory pulled into memory:
/// `transcripts/*.json`, `embeddings.txt`, optional `frequencies.txt`
/// (token counts are derived from the transcripts when absent), optional
/// `ext_vectors.json`, and optional per-subject `trees/<subject_id>.trees`.
pub struct LoadedCorpus {
    pub transcripts: Vec<Transcript>,
    pub store: EmbeddingStore,
    pub freq: FrequencyTable,
    pub external: Option<ExternalVectors>,
    pub trees: HashMap<String, Vec<Option<ParseTree>>>,
}

impl LoadedCorpus {
    pub fn resources(&self) -> ExtractResources<'_> {
        ExtractResources {
            store: &self.store,
            freq: &self.freq,
            external: self.external.as_ref(),
            trees: &self.trees,
        }
    }
}

/// Loads a corpus directory laid out as written by the synthesizer.
pub fn load_corpus_dir(dir: &Path) -> Result<LoadedCorpus, PipelineError> {
    let transcripts = crate::corpus::load_corpus(&dir.join("transcripts"))?;
    let (store, _) = crate::embed::load_embeddings(&dir.join("embeddings.txt"))?;
    let freq_path = dir.join("frequencies.txt");
    let freq = if freq_path.exists() {
        FrequencyTable::load(&freq_path)?
    } else {
        FrequencyTable::from_corpus(&transcripts)?
    };
    let ext_path = dir.join("ext_vectors.json");
    let external = if ext_path.exists() {
        Some(crate::embed::load_external_vectors(&ext_path)?)
    } else {
        None
    };
    let mut trees = HashMap::new();
    for t in &transcripts {
        let path = dir.join("trees").join(format!("{}.trees", t.subject_id));
        if path.exists() {
            trees.insert(t.subject_id.clone(), crate::syntax::load_tree_sidecar(&path)?);
        }
    }
    Ok(LoadedCorpus {
        transcripts,
        store,
        freq,
        external,
        trees,
    })
}

/// Everything a corpus extraction produces.
#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub panels: Vec<FeaturePanel>,
    /// All per-subject score distributions, for the diagnostic dump.
    pub distributions: Vec<CoherenceDistribution>,
    pub warnings: Vec<String>,
    /// Subjects that failed, with their error text (panels omit them).
    pub failures: Vec<(String, String)>,
}

/// Per-subject state between the encoding phase and the scoring phase.
struct SubjectDraft {
    index: usize,
    /// Merged turns per scene, scene order 1..=3.
    merged: Vec<Vec<MergedTurn>>,
    pairs: Vec<Vec<(usize, usize)>>,
    bow: Vec<Vec<TurnVector>>,
    sif: Vec<Vec<TurnVector>>,
    ext: Vec<Vec<TurnVector>>,
    warnings: Vec<String>,
}

fn feature_err(subject_id: &str, feature: &str, message: impl ToString) -> PipelineError {
    PipelineError::Feature {
        subject_id: subject_id.to_string(),
        feature: feature.to_string(),
        message: message.to_string(),
    }
}

fn encode_subject(
    index: usize,
    t: &Transcript,
    resources: &ExtractResources,
    config: &ExtractConfig,
) -> Result<SubjectDraft, PipelineError> {
    let want_ext = config.encoders.contains(&EncoderKind::Ext);
    let mut draft = SubjectDraft {
        index,
        merged: Vec::with_capacity(3),
        pairs: Vec::with_capacity(3),
        bow: Vec::with_capacity(3),
        sif: Vec::with_capacity(3),
        ext: Vec::with_capacity(3),
        warnings: Vec::new(),
    };
    for scene_id in SCENES {
        let scene = t
            .scene(scene_id)
            .ok_or_else(|| PipelineError::MissingScene {
                subject_id: t.subject_id.clone(),
                scene_id,
            })?;
        let merged = merge_turns(scene);
        let pairs = pair_indices(&merged);

        let bow: Vec<TurnVector> = merged
            .iter()
            .map(|m| encode_bow(&m.tokens, resources.store))
            .collect();
        let sif: Vec<TurnVector> = merged
            .iter()
            .map(|m| {
                encode_sif(&m.tokens, resources.store, resources.freq, config.sif_a)
                    .map_err(|e| feature_err(&t.subject_id, "sif", e))
            })
            .collect::<Result<_, _>>()?;
        let ext: Vec<TurnVector> = if want_ext {
            let external = resources
                .external
                .ok_or(PipelineError::ExternalNotConfigured)?;
            // Every raw turn participating in a pair must be covered.
            let mut required: Vec<(&str, u8, usize)> = Vec::new();
            for &(a, s) in &pairs {
                for &m in [a, s].iter() {
                    for &raw in &merged[m].source_indices {
                        required.push((t.subject_id.as_str(), scene_id, raw));
                    }
                }
            }
            external.check_coverage(required).map_err(|e| {
                feature_err(&t.subject_id, &format!("{}_scene{scene_id}", config.ext_label), e)
            })?;
            merged
                .iter()
                .map(|m| merged_external_vector(external, &t.subject_id, scene_id, m))
                .collect()
        } else {
            Vec::new()
        };

        draft.merged.push(merged);
        draft.pairs.push(pairs);
        draft.bow.push(bow);
        draft.sif.push(sif);
        draft.ext.push(ext);
    }
    Ok(draft)
}

/// A merged turn's external vector: the mean of its constituent raw turns'
/// valid vectors; invalid when none of them has a usable vector.
fn merged_external_vector(
    external: &ExternalVectors,
    subject_id: &str,
    scene_id: u8,
    merged: &MergedTurn,
) -> TurnVector {
    let mut sum = vec![0.0; external.dim()];
    let mut k = 0usize;
    for &raw in &merged.source_indices {
        if let Some(tv) = external.get(subject_id, scene_id, raw) {
            if tv.valid {
                for (s, v) in sum.iter_mut().zip(&tv.vector) {
                    *s += v;
                }
                k += 1;
            }
        }
    }
    if k == 0 {
        return TurnVector::invalid(external.dim());
    }
    for s in &mut sum {
        *s /= k as f64;
    }
    let valid = sum.iter().any(|&x| x != 0.0);
    TurnVector { vector: sum, valid }
}

fn score_subject(
    t: &Transcript,
    draft: &SubjectDraft,
    resources: &ExtractResources,
    config: &ExtractConfig,
) -> Result<(FeaturePanel, Vec<CoherenceDistribution>, Vec<String>), PipelineError> {
    let sid = &t.subject_id;
    let mut warnings = draft.warnings.clone();
    let mut features: Vec<(String, f64)> = Vec::new();
    let mut distributions = Vec::new();

    for &encoder in &config.encoders {
        let label = config.encoder_label(encoder);
        for (scene_pos, &scene_id) in SCENES.iter().enumerate() {
            let vectors = match encoder {
                EncoderKind::Bow => &draft.bow[scene_pos],
                EncoderKind::Sif => &draft.sif[scene_pos],
                EncoderKind::Ext => &draft.ext[scene_pos],
            };
            let (scores, skipped) = score_pairs(vectors, &draft.pairs[scene_pos]);
            if skipped > 0 {
                warnings.push(format!(
                    "subject {sid} scene {scene_id} encoder {label}: skipped {skipped} pair(s) with no usable vector"
                ));
            }
            if scores.is_empty() {
                return Err(feature_err(
                    sid,
                    &format!("{label}_scene{scene_id}"),
                    format!("scene {scene_id} yields no valid turn pairs for encoder {label}"),
                ));
            }
            let stats = summarize(&scores)
                .map_err(|e| feature_err(sid, &format!("{label}_scene{scene_id}"), e))?;
            for (stat, value) in STAT_NAMES.iter().zip(stats.as_array()) {
                features.push((format!("{label}_{stat}_scene{scene_id}"), value));
            }
            distributions.push(CoherenceDistribution {
                subject_id: sid.clone(),
                scene_id,
                encoder_id: label.to_string(),
                scores,
            });
        }
    }

    // Complexity features run over subject speech across all scenes.
    let mut subject_tokens: Vec<String> = Vec::new();
    let mut sentences: Vec<String> = Vec::new();
    for scene_id in SCENES {
        let scene = t.scene(scene_id).expect("scene presence checked");
        for turn in &scene.turns {
            if turn.speaker == Speaker::Subject {
                subject_tokens.extend(turn.tokens.iter().cloned());
                sentences.extend(split_sentences(&turn.text));
            }
        }
    }

    let counts = lexical_counts(&subject_tokens);
    let (mattr_value, fell_back) = mattr(&subject_tokens, config.mattr_window)
        .map_err(|e| feature_err(sid, "mattr", e))?;
    if fell_back {
        warnings.push(format!(
            "subject {sid}: {} token(s) < MATTR window {}; fell back to plain TTR",
            counts.n, config.mattr_window
        ));
    }
    let brunet_value = brunet(&counts).map_err(|e| feature_err(sid, "brunet", e))?;
    let honore_value = honore(&counts).map_err(|e| feature_err(sid, "honore", e))?;

    let trees = resources
        .trees
        .get(sid)
        .ok_or_else(|| PipelineError::MissingTrees {
            subject_id: sid.clone(),
        })?;
    let with_trees = trees.iter().flatten().count();
    coverage_check(sid, with_trees.min(sentences.len()), sentences.len())
        .map_err(|e| feature_err(sid, "tree_height", e))?;
    if trees.len() != sentences.len() {
        warnings.push(format!(
            "subject {sid}: tree sidecar has {} line(s) for {} sentence(s)",
            trees.len(),
            sentences.len()
        ));
    } else if with_trees < sentences.len() {
        warnings.push(format!(
            "subject {sid}: {} of {} sentences lack parse trees",
            sentences.len() - with_trees,
            sentences.len()
        ));
    }

    // POS tags: preterminals where a tree covers the sentence, the built-in
    // lexicon elsewhere.
    let stripped: Vec<Option<ParseTree>> = trees
        .iter()
        .cloned()
        .map(|t| t.map(strip_root))
        .collect();
    let mut tagged: Vec<(String, &str)> = Vec::new();
    for (i, sentence) in sentences.iter().enumerate() {
        match stripped.get(i).and_then(Option::as_ref) {
            Some(tree) => {
                for (tag, token) in tree.preterminals() {
                    tagged.push((token.to_string(), tag));
                }
            }
            None => {
                tagged.extend(tag_with_lexicon(&crate::corpus::tokenize(sentence)));
            }
        }
    }
    let tagset = FunctionTagSet::penn_default();
    let (func_w, uh_w) =
        density_ratios(&tagged, &tagset).map_err(|e| feature_err(sid, "func_w", e))?;

    let mls_value = mls(&sentences).map_err(|e| feature_err(sid, "mls", e))?;

    let present: Vec<&ParseTree> = stripped.iter().flatten().collect();
    let depth_lists: Vec<Vec<u64>> = present.iter().map(|t| yngve_depths(t)).collect();
    let yngve = yngve_stats(&depth_lists).map_err(|e| feature_err(sid, "yngve_mean", e))?;
    let heights: Vec<usize> = present.iter().map(|t| tree_height(t)).collect();
    let height_value = aggregate_heights(&heights, config.tree_aggregate)
        .map_err(|e| feature_err(sid, "tree_height", e))?;

    features.push(("mattr".to_string(), mattr_value));
    features.push(("brunet".to_string(), brunet_value));
    features.push(("honore".to_string(), honore_value));
    features.push(("func_w".to_string(), func_w));
    features.push(("uh_w".to_string(), uh_w));
    features.push(("mls".to_string(), mls_value));
    features.push(("yngve_mean".to_string(), yngve.mean));
    features.push(("yngve_total".to_string(), yngve.total));
    features.push(("yngve_max".to_string(), yngve.max));
    features.push(("tree_height".to_string(), height_value));
    if config.include_ttr {
        let ttr_value = ttr(&counts).map_err(|e| feature_err(sid, "ttr", e))?;
        features.push(("ttr".to_string(), ttr_value));
    }

    for (name, value) in &features {
        if !value.is_finite() {
            return Err(feature_err(sid, name, "non-finite feature value"));
        }
    }

    Ok((
        FeaturePanel {
            subject_id: sid.clone(),
            group: t.group,
            sspa_overall: t.sspa_overall,
            features,
        },
        distributions,
        warnings,
    ))
}

/// Extracts panels for a whole corpus. The SIF principal component is
/// estimated once over every valid turn vector in the run. Per-subject
/// failures are collected rather than aborting the run; global problems
/// (missing resources, too few vectors for the principal component) error.
pub fn extract_corpus(
    transcripts: &[Transcript],
    resources: &ExtractResources,
    config: &ExtractConfig,
) -> Result<ExtractOutcome, PipelineError> {
    let want_sif = config.encoders.contains(&EncoderKind::Sif);

    // Phase 1: encode every subject (parallel).
    let drafts: Vec<Result<SubjectDraft, PipelineError>> = transcripts
        .par_iter()
        .enumerate()
        .map(|(i, t)| encode_subject(i, t, resources, config))
        .collect();
    let mut failures: Vec<(String, String)> = Vec::new();
    let mut live: Vec<SubjectDraft> = Vec::new();
    for (t, d) in transcripts.iter().zip(drafts) {
        match d {
            Ok(draft) => live.push(draft),
            Err(e) => failures.push((t.subject_id.clone(), e.to_string())),
        }
    }

    // Phase 2: corpus-level SIF principal component removal (serial).
    // With no surviving subjects there is nothing to remove a component
    // from; the per-subject failures already explain the empty result.
    if want_sif && !live.is_empty() {
        let valid_refs: Vec<&[f64]> = live
            .iter()
            .flat_map(|d| d.sif.iter().flatten())
            .filter(|tv| tv.valid)
            .map(|tv| tv.vector.as_slice())
            .collect();
        let direction = principal_direction(&valid_refs)
            .map_err(|_| PipelineError::TooFewSifVectors {
                valid: valid_refs.len(),
            })?;
        for draft in &mut live {
            for scene in &mut draft.sif {
                for tv in scene.iter_mut().filter(|tv| tv.valid) {
                    subtract_projection(&mut tv.vector, &direction);
                    if tv.vector.iter().all(|&x| x == 0.0) {
                        tv.valid = false;
                    }
                }
            }
        }
    }

    // Phase 3: score and assemble (parallel).
    let scored: Vec<(usize, Result<(FeaturePanel, Vec<CoherenceDistribution>, Vec<String>), PipelineError>)> =
        live.par_iter()
            .map(|d| (d.index, score_subject(&transcripts[d.index], d, resources, config)))
            .collect();

    let mut panels = Vec::new();
    let mut distributions = Vec::new();
    let mut warnings = Vec::new();
    for (index, result) in scored {
        match result {
            Ok((panel, dists, warns)) => {
                panels.push(panel);
                distributions.extend(dists);
                warnings.extend(warns);
            }
            Err(e) => failures.push((transcripts[index].subject_id.clone(), e.to_string())),
        }
    }
    failures.sort();
    Ok(ExtractOutcome {
        panels,
        distributions,
        warnings,
        failures,
    })
}

/// Extracts a single transcript's panel; the SIF principal component is
/// estimated from this transcript's own turns.
pub fn extract_panel(
    transcript: &Transcript,
    resources: &ExtractResources,
    config: &ExtractConfig,
) -> Result<(FeaturePanel, Vec<String>), PipelineError> {
    let outcome = extract_corpus(std::slice::from_ref(transcript), resources, config)?;
    if let Some((subject_id, message)) = outcome.failures.into_iter().next() {
        return Err(PipelineError::Feature {
            subject_id,
            feature: "panel".to_string(),
            message,
        });
    }
    let panel = outcome.panels.into_iter().next().ok_or(PipelineError::Empty)?;
    Ok((panel, outcome.warnings))
}

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes panels as CSV: subject_id, features in canonical order, group,
/// sspa_overall. Floats carry 17 significant digits.
pub fn write_table(panels: &[FeaturePanel], path: &Path) -> Result<(), PipelineError> {
    let first = panels.first().ok_or(PipelineError::Empty)?;
    let names = first.names();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = Vec::with_capacity(names.len() + 3);
    header.push("subject_id".to_string());
    header.extend(names.iter().map(|n| n.to_string()));
    header.push("group".to_string());
    header.push("sspa_overall".to_string());
    writer.write_record(&header).expect("in-memory write");

    for panel in panels {
        if panel.names() != names {
            return Err(PipelineError::InconsistentColumns {
                subject_id: panel.subject_id.clone(),
            });
        }
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(panel.subject_id.clone());
        record.extend(panel.features.iter().map(|(_, v)| format_value(*v)));
        record.push(panel.group.map(|g| g.as_str().to_string()).unwrap_or_default());
        record.push(panel.sspa_overall.map(format_value).unwrap_or_default());
        writer.write_record(&record).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    crate::io_util::write_atomic(path, &bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a feature table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<Vec<FeaturePanel>, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = reader
        .headers()
        .map_err(|e| PipelineError::TableShape {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    if columns.len() < 4
        || columns.first().map(String::as_str) != Some("subject_id")
        || columns.get(columns.len() - 2).map(String::as_str) != Some("group")
        || columns.last().map(String::as_str) != Some("sspa_overall")
    {
        return Err(PipelineError::TableShape {
            path: path.to_path_buf(),
            message: "header must be subject_id, <features...>, group, sspa_overall".to_string(),
        });
    }
    let feature_names = &columns[1..columns.len() - 2];

    let mut panels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 2; // 1-based, after the header line
        let record = record.map_err(|e| PipelineError::TableShape {
            path: path.to_path_buf(),
            message: format!("row {row}: {e}"),
        })?;
        if record.len() != columns.len() {
            return Err(PipelineError::TableShape {
                path: path.to_path_buf(),
                message: format!(
                    "row {row}: expected {} fields, got {}",
                    columns.len(),
                    record.len()
                ),
            });
        }
        let subject_id = record[0].to_string();
        let mut features = Vec::with_capacity(feature_names.len());
        for (j, name) in feature_names.iter().enumerate() {
            let cell = &record[j + 1];
            let value: f64 = cell.parse().map_err(|_| PipelineError::Table {
                path: path.to_path_buf(),
                row,
                column: name.clone(),
                message: format!("non-numeric cell '{cell}'"),
            })?;
            features.push((name.clone(), value));
        }
        let group_cell = &record[columns.len() - 2];
        let group = if group_cell.is_empty() {
            None
        } else {
            Some(Group::parse(group_cell).ok_or_else(|| PipelineError::Table {
                path: path.to_path_buf(),
                row,
                column: "group".to_string(),
                message: format!("unknown group '{group_cell}'"),
            })?)
        };
        let sspa_cell = &record[columns.len() - 1];
        let sspa_overall = if sspa_cell.is_empty() {
            None
        } else {
            Some(sspa_cell.parse().map_err(|_| PipelineError::Table {
                path: path.to_path_buf(),
                row,
                column: "sspa_overall".to_string(),
                message: format!("non-numeric cell '{sspa_cell}'"),
            })?)
        };
        panels.push(FeaturePanel {
            subject_id,
            group,
            sspa_overall,
            features,
        });
    }
    Ok(panels)
}

/// Builds the learning dataset (features only) from consistent panels.
pub fn to_dataset(panels: &[FeaturePanel]) -> Result<Dataset, PipelineError> {
    let first = panels.first().ok_or(PipelineError::Empty)?;
    let names = first.names();
    for panel in panels {
        if panel.names() != names {
            return Err(PipelineError::InconsistentColumns {
                subject_id: panel.subject_id.clone(),
            });
        }
    }
    let n = panels.len();
    let p = names.len();
    let x = DMatrix::from_fn(n, p, |i, j| panels[i].features[j].1);
    Ok(Dataset {
        x,
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        subject_ids: panels.iter().map(|p| p.subject_id.clone()).collect(),
    })
}

/// Continuous targets for regression; every panel must carry a score.
pub fn targets_sspa(panels: &[FeaturePanel]) -> Result<Vec<f64>, PipelineError> {
    panels
        .iter()
        .map(|p| {
            p.sspa_overall.ok_or_else(|| PipelineError::MissingLabel {
                subject_id: p.subject_id.clone(),
                what: "sspa_overall".to_string(),
            })
        })
        .collect()
}

/// The two binary classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Positive = any clinical subject (Sz/Sza or bipolar), negative = control.
    ClinicalVsControl,
    /// Positive = Sz/Sza, negative = bipolar; controls excluded.
    SzVsBipolar,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "clinical-vs-control" => Some(Task::ClinicalVsControl),
            "sz-vs-bipolar" => Some(Task::SzVsBipolar),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::ClinicalVsControl => "clinical-vs-control",
            Task::SzVsBipolar => "sz-vs-bipolar",
        }
    }

    /// Label for a group under this task; `None` = excluded from the task.
    pub fn label(&self, group: Group) -> Option<u8> {
        match self {
            Task::ClinicalVsControl => Some(match group {
                Group::Control => 0,
                Group::SzSza | Group::Bipolar => 1,
            }),
            Task::SzVsBipolar => match group {
                Group::Control => None,
                Group::Bipolar => Some(0),
                Group::SzSza => Some(1),
            },
        }
    }
}

/// Panel indices retained by the task and their labels, in panel order.
/// A panel without a group label is an error.
pub fn task_labels(panels: &[FeaturePanel], task: Task) -> Result<(Vec<usize>, Vec<u8>), PipelineError> {
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    for (i, panel) in panels.iter().enumerate() {
        let group = panel.group.ok_or_else(|| PipelineError::MissingLabel {
            subject_id: panel.subject_id.clone(),
            what: "group".to_string(),
        })?;
        if let Some(label) = task.label(group) {
            kept.push(i);
            labels.push(label);
        }
    }
    Ok((kept, labels))
}
