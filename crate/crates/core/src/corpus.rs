//! Transcript data model, file ingestion, tokenization, and sentence
//! segmentation.
//!
//! A corpus is a set of per-subject transcript documents. Each document holds
//! up to three scenes of speaker-attributed turns plus optional group and
//! score labels. All types are immutable after load and safe to share across
//! threads.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Who produced a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Assessor,
    Subject,
}

/// Diagnostic group label for a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Control,
    SzSza,
    Bipolar,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::SzSza => "sz_sza",
            Group::Bipolar => "bipolar",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "control" => Some(Group::Control),
            "sz_sza" => Some(Group::SzSza),
            "bipolar" => Some(Group::Bipolar),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One speaking turn. `tokens` is derived deterministically from `text` at
/// load time and may be empty (e.g. a turn of pure noise markers).
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Turn {
        let text = text.into();
        let tokens = tokenize(&text);
        Turn {
            speaker,
            text,
            tokens,
        }
    }
}

/// One role-play scene; `scene_id` is 1, 2, or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: u8,
    pub turns: Vec<Turn>,
}

/// One subject's full transcript with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub subject_id: String,
    pub group: Option<Group>,
    pub sspa_overall: Option<f64>,
    pub scenes: Vec<Scene>,
}

impl Transcript {
    pub fn scene(&self, scene_id: u8) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == scene_id)
    }
}

/// Token-level counts: N tokens, V types, V1 hapax legomena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexicalCounts {
    pub n: usize,
    pub v: usize,
    pub v1: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed transcript document: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: scene_id {scene_id} outside 1..=3 for subject '{subject_id}'")]
    BadSceneId {
        path: PathBuf,
        subject_id: String,
        scene_id: i64,
    },
    #[error("{path}: duplicate scene_id {scene_id} for subject '{subject_id}'")]
    DuplicateSceneId {
        path: PathBuf,
        subject_id: String,
        scene_id: u8,
    },
    #[error("{path}: sspa_overall {value} outside [1, 5] for subject '{subject_id}'")]
    ScoreOutOfRange {
        path: PathBuf,
        subject_id: String,
        value: f64,
    },
    #[error("duplicate subject_id '{subject_id}' (second occurrence in {path})")]
    DuplicateSubject { path: PathBuf, subject_id: String },
}

// On-disk document shape. Tokens are derived, not stored, so the domain
// types convert through these.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnDoc {
    speaker: Speaker,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    scene_id: i64,
    turns: Vec<TurnDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptDoc {
    subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<Group>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sspa_overall: Option<f64>,
    scenes: Vec<SceneDoc>,
}

impl From<&Transcript> for TranscriptDoc {
    fn from(t: &Transcript) -> TranscriptDoc {
        TranscriptDoc {
            subject_id: t.subject_id.clone(),
            group: t.group,
            sspa_overall: t.sspa_overall,
            scenes: t
                .scenes
                .iter()
                .map(|s| SceneDoc {
                    scene_id: i64::from(s.scene_id),
                    turns: s
                        .turns
                        .iter()
                        .map(|u| TurnDoc {
                            speaker: u.speaker,
                            text: u.text.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn validate_doc(doc: TranscriptDoc, path: &Path) -> Result<Transcript, CorpusError> {
    if let Some(score) = doc.sspa_overall {
        if !(1.0..=5.0).contains(&score) || !score.is_finite() {
            return Err(CorpusError::ScoreOutOfRange {
                path: path.to_path_buf(),
                subject_id: doc.subject_id,
                value: score,
            });
        }
    }
    let mut seen = BTreeSet::new();
    let mut scenes = Vec::with_capacity(doc.scenes.len());
    for scene in doc.scenes {
        if !(1..=3).contains(&scene.scene_id) {
            return Err(CorpusError::BadSceneId {
                path: path.to_path_buf(),
                subject_id: doc.subject_id,
                scene_id: scene.scene_id,
            });
        }
        let scene_id = scene.scene_id as u8;
        if !seen.insert(scene_id) {
            return Err(CorpusError::DuplicateSceneId {
                path: path.to_path_buf(),
                subject_id: doc.subject_id,
                scene_id,
            });
        }
        scenes.push(Scene {
            scene_id,
            turns: scene
                .turns
                .into_iter()
                .map(|t| Turn::new(t.speaker, t.text))
                .collect(),
        });
    }
    Ok(Transcript {
        subject_id: doc.subject_id,
        group: doc.group,
        sspa_overall: doc.sspa_overall,
        scenes,
    })
}

/// Loads a single transcript document (JSON, UTF-8, unknown fields rejected).
pub fn load_transcript(path: &Path) -> Result<Transcript, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: TranscriptDoc =
        serde_json::from_slice(&bytes).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    validate_doc(doc, path)
}

/// Serializes a transcript back to its document form.
pub fn transcript_to_json(t: &Transcript) -> String {
    let doc = TranscriptDoc::from(t);
    let mut s = serde_json::to_string_pretty(&doc).expect("transcript serialization");
    s.push('\n');
    s
}

/// Writes a transcript document to `path`.
pub fn save_transcript(t: &Transcript, path: &Path) -> Result<(), CorpusError> {
    crate::io_util::write_atomic(path, transcript_to_json(t).as_bytes()).map_err(|source| {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

/// Loads a corpus from a directory of `*.json` transcript documents (one per
/// subject) or from a single document file. Transcripts come back sorted by
/// `subject_id`; an empty directory yields an empty list.
pub fn load_corpus(path: &Path) -> Result<Vec<Transcript>, CorpusError> {
    let mut files: Vec<PathBuf> = Vec::new();
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let p = entry.path();
            if p.is_file() && p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }

    let mut transcripts = Vec::with_capacity(files.len());
    let mut seen_subjects = BTreeSet::new();
    for file in &files {
        let t = load_transcript(file)?;
        if !seen_subjects.insert(t.subject_id.clone()) {
            return Err(CorpusError::DuplicateSubject {
                path: file.clone(),
                subject_id: t.subject_id,
            });
        }
        transcripts.push(t);
    }
    transcripts.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(transcripts)
}

/// Lowercases and splits text into word tokens. Tokens are maximal runs of
/// alphanumeric characters; an apostrophe with alphanumerics on both sides is
/// kept inside the token ("don't" stays one token), so standalone punctuation
/// disappears. Curly apostrophes are normalized to ASCII.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if (c == '\'' || c == '\u{2019}')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Splits text into sentences on runs of terminal punctuation (`.`, `!`, `?`)
/// followed by whitespace or end of input. Text without a terminal comes back
/// as a single sentence; empty segments are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        if matches!(chars[i].1, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            if j >= chars.len() || chars[j].1.is_whitespace() {
                let end = if j < chars.len() {
                    chars[j].0
                } else {
                    text.len()
                };
                let segment = text[start..end].trim();
                if !segment.is_empty() {
                    sentences.push(segment.to_string());
                }
                start = end;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if start < text.len() {
        let tail = text[start..].trim();
        if !tail.is_empty() {
            sentences.push(tail.to_string());
        }
    }
    sentences
}

/// Counts tokens (N), types (V), and hapax legomena (V1).
pub fn lexical_counts<S: AsRef<str>>(tokens: &[S]) -> LexicalCounts {
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    LexicalCounts {
        n: tokens.len(),
        v: counts.len(),
        v1: counts.values().filter(|&&c| c == 1).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::IndexedRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(subject: &str, sspa: Option<f64>) -> String {
        let sspa_field = sspa
            .map(|v| format!("\"sspa_overall\": {v},"))
            .unwrap_or_default();
        format!(
            r#"{{
              "subject_id": "{subject}",
              "group": "control",
              {sspa_field}
              "scenes": [
                {{"scene_id": 1, "turns": [
                  {{"speaker": "assessor", "text": "Hello there."}},
                  {{"speaker": "subject", "text": "Hi, how are you?"}}
                ]}},
                {{"scene_id": 2, "turns": []}},
                {{"scene_id": 3, "turns": []}}
              ]
            }}"#
        )
    }

    #[test]
    fn tokenize_case_folds_and_strips_punctuation() {
        assert_eq!(tokenize("Hello, hello WORLD."), vec!["hello", "hello", "world"]);
    }

    #[test]
    fn tokenize_keeps_internal_apostrophes() {
        assert_eq!(tokenize("I don't know"), vec!["i", "don't", "know"]);
        assert_eq!(tokenize("the dogs' bowl"), vec!["the", "dogs", "bowl"]);
    }

    #[test]
    fn tokenize_empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("... !!").is_empty());
    }

    #[test]
    fn tokenize_is_idempotent_via_rejoin() {
        for text in [
            "Hello, hello WORLD.",
            "I don't know...",
            "Um -- what? (laughs) I-I mean it's FINE.",
        ] {
            let once = tokenize(text);
            let again = tokenize(&once.join(" "));
            assert_eq!(once, again);
        }
    }

    #[test]
    fn split_two_terminals() {
        assert_eq!(
            split_sentences("Hi there. How are you?"),
            vec!["Hi there.", "How are you?"]
        );
    }

    #[test]
    fn split_without_terminal_is_one_sentence() {
        assert_eq!(split_sentences("well I guess so"), vec!["well I guess so"]);
    }

    #[test]
    fn split_treats_ellipsis_as_terminal_run() {
        assert_eq!(split_sentences("Wait... what?"), vec!["Wait...", "what?"]);
    }

    #[test]
    fn split_ignores_sentence_internal_periods() {
        assert_eq!(split_sentences("I paid $3.50 today."), vec!["I paid $3.50 today."]);
    }

    #[test]
    fn lexical_counts_direct() {
        let c = lexical_counts(&["a", "b", "a"]);
        assert_eq!((c.n, c.v, c.v1), (3, 2, 1));
    }

    #[test]
    fn lexical_counts_empty() {
        let c = lexical_counts::<&str>(&[]);
        assert_eq!((c.n, c.v, c.v1), (0, 0, 0));
    }

    #[test]
    fn lexical_counts_match_independent_recount() {
        // Brute-force recount oracle over a 50-type vocabulary.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vocab: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let tokens: Vec<String> = (0..1000)
            .map(|_| vocab.choose(&mut rng).unwrap().clone())
            .collect();
        let got = lexical_counts(&tokens);

        let mut tally: std::collections::BTreeMap<String, usize> = Default::default();
        for t in &tokens {
            *tally.entry(t.clone()).or_default() += 1;
        }
        assert_eq!(got.n, tokens.len());
        assert_eq!(got.v, tally.len());
        assert_eq!(got.v1, tally.values().filter(|&&c| c == 1).count());
    }

    #[test]
    fn load_corpus_sorted_by_subject_id() {
        let dir = tempfile::tempdir().unwrap();
        for (file, subject) in [("x.json", "s3"), ("y.json", "s1"), ("z.json", "s2")] {
            fs::write(dir.path().join(file), doc(subject, Some(3.0))).unwrap();
        }
        let corpus = load_corpus(dir.path()).unwrap();
        let ids: Vec<&str> = corpus.iter().map(|t| t.subject_id.as_str()).collect();
        assert_eq!(ids, vec!["s1", "s2", "s3"]);
    }

    #[test]
    fn load_corpus_empty_dir_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn load_corpus_rejects_out_of_range_score() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("s.json"), doc("s1", Some(7.0))).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::ScoreOutOfRange { value, .. } if value == 7.0));
    }

    #[test]
    fn load_corpus_rejects_duplicate_subjects() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), doc("same", None)).unwrap();
        fs::write(dir.path().join("b.json"), doc("same", None)).unwrap();
        assert!(matches!(
            load_corpus(dir.path()).unwrap_err(),
            CorpusError::DuplicateSubject { .. }
        ));
    }

    #[test]
    fn load_corpus_rejects_bad_scene_id() {
        let dir = tempfile::tempdir().unwrap();
        let text = doc("s1", None).replace("\"scene_id\": 2", "\"scene_id\": 4");
        fs::write(dir.path().join("s.json"), text).unwrap();
        assert!(matches!(
            load_corpus(dir.path()).unwrap_err(),
            CorpusError::BadSceneId { scene_id: 4, .. }
        ));
    }

    #[test]
    fn load_corpus_rejects_duplicate_scene_id() {
        let dir = tempfile::tempdir().unwrap();
        let text = doc("s1", None).replace("\"scene_id\": 2", "\"scene_id\": 1");
        fs::write(dir.path().join("s.json"), text).unwrap();
        assert!(matches!(
            load_corpus(dir.path()).unwrap_err(),
            CorpusError::DuplicateSceneId { scene_id: 1, .. }
        ));
    }

    #[test]
    fn load_rejects_unknown_fields_naming_them() {
        let dir = tempfile::tempdir().unwrap();
        let text = doc("s1", None).replace("\"group\": \"control\",", "\"grup\": \"control\",");
        fs::write(dir.path().join("s.json"), text).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        match err {
            CorpusError::Malformed { message, .. } => assert!(message.contains("grup")),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("s.json"), doc("s1", Some(4.5))).unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        let out = dir.path().join("copy.json");
        save_transcript(&corpus[0], &out).unwrap();
        let again = load_transcript(&out).unwrap();
        assert_eq!(corpus[0], again);
    }
}
