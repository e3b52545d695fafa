//! Lexical diversity and density metrics over subject speech.
//!
//! All metrics run over the subject's responses concatenated across scenes:
//! type-token ratio and its moving-average variant, Brunét's index, Honoré's
//! statistic, function-word and interjection density, and mean sentence
//! length.

use std::collections::HashMap;
use std::collections::HashSet;
use std::sync::OnceLock;

use thiserror::Error;

use crate::corpus::{lexical_counts, tokenize, LexicalCounts};

/// Default MATTR sliding-window width in tokens.
pub const DEFAULT_MATTR_WINDOW: usize = 100;

const BRUNET_EXPONENT: f64 = -0.165;

#[derive(Debug, Error)]
pub enum LexicalError {
    #[error("metric requires at least one token")]
    EmptyText,
    #[error("Honoré's statistic is undefined when every word is a hapax (V1 = V = {v})")]
    AllHapax { v: usize },
    #[error("MATTR window must be at least 1")]
    BadWindow,
    #[error("density ratios require at least one tagged token")]
    NoTaggedTokens,
    #[error("mean sentence length requires at least one non-empty sentence")]
    NoSentences,
}

/// POS tags counted as function words. `UH` is always a member so the
/// interjection ratio is a subset of the function-word ratio.
#[derive(Debug, Clone)]
pub struct FunctionTagSet {
    tags: HashSet<&'static str>,
}

impl FunctionTagSet {
    /// Penn Treebank closed-class tags.
    pub fn penn_default() -> FunctionTagSet {
        FunctionTagSet {
            tags: [
                "CC", "DT", "EX", "IN", "MD", "PDT", "POS", "PRP", "PRP$", "RP", "TO", "UH",
                "WDT", "WP", "WP$", "WRB",
            ]
            .into_iter()
            .collect(),
        }
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }

    pub fn tags(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.tags.iter().copied()
    }
}

impl Default for FunctionTagSet {
    fn default() -> Self {
        FunctionTagSet::penn_default()
    }
}

/// Built-in closed-class word list: (lower-case word, Penn tag). Used to tag
/// tokens when no parse-tree preterminals are available, and by the corpus
/// generator as a pool of function words.
pub const CLOSED_CLASS_WORDS: &[(&str, &str)] = &[
    // Coordinating conjunctions.
    ("and", "CC"), ("but", "CC"), ("or", "CC"), ("nor", "CC"),
    // Determiners.
    ("the", "DT"), ("a", "DT"), ("an", "DT"), ("this", "DT"), ("that", "DT"),
    ("these", "DT"), ("those", "DT"), ("each", "DT"), ("every", "DT"),
    ("some", "DT"), ("any", "DT"), ("no", "DT"), ("another", "DT"), ("all", "DT"),
    // Existential there.
    ("there", "EX"),
    // Prepositions and subordinating conjunctions.
    ("of", "IN"), ("in", "IN"), ("on", "IN"), ("at", "IN"), ("by", "IN"),
    ("for", "IN"), ("with", "IN"), ("about", "IN"), ("against", "IN"),
    ("between", "IN"), ("into", "IN"), ("through", "IN"), ("during", "IN"),
    ("before", "IN"), ("after", "IN"), ("above", "IN"), ("below", "IN"),
    ("from", "IN"), ("since", "IN"), ("without", "IN"), ("within", "IN"),
    ("along", "IN"), ("across", "IN"), ("behind", "IN"), ("beyond", "IN"),
    ("near", "IN"), ("if", "IN"), ("because", "IN"), ("while", "IN"),
    ("although", "IN"), ("though", "IN"), ("unless", "IN"), ("until", "IN"),
    ("whereas", "IN"), ("whether", "IN"), ("as", "IN"),
    // Modals.
    ("can", "MD"), ("could", "MD"), ("may", "MD"), ("might", "MD"),
    ("must", "MD"), ("shall", "MD"), ("should", "MD"), ("will", "MD"),
    ("would", "MD"),
    // Predeterminers.
    ("both", "PDT"), ("half", "PDT"), ("such", "PDT"),
    // Personal pronouns.
    ("i", "PRP"), ("me", "PRP"), ("you", "PRP"), ("he", "PRP"), ("him", "PRP"),
    ("she", "PRP"), ("it", "PRP"), ("we", "PRP"), ("us", "PRP"),
    ("they", "PRP"), ("them", "PRP"), ("myself", "PRP"), ("yourself", "PRP"),
    ("himself", "PRP"), ("herself", "PRP"), ("itself", "PRP"),
    ("ourselves", "PRP"), ("themselves", "PRP"), ("mine", "PRP"),
    ("yours", "PRP"), ("hers", "PRP"), ("ours", "PRP"), ("theirs", "PRP"),
    ("anybody", "PRP"), ("anyone", "PRP"), ("anything", "PRP"),
    ("everybody", "PRP"), ("everyone", "PRP"), ("everything", "PRP"),
    ("nobody", "PRP"), ("someone", "PRP"), ("something", "PRP"),
    // Possessive pronouns.
    ("my", "PRP$"), ("your", "PRP$"), ("his", "PRP$"), ("her", "PRP$"),
    ("its", "PRP$"), ("our", "PRP$"), ("their", "PRP$"),
    // Particles.
    ("off", "RP"), ("out", "RP"), ("up", "RP"), ("down", "RP"),
    ("away", "RP"), ("back", "RP"),
    // Infinitival to.
    ("to", "TO"),
    // Interjections.
    ("uh", "UH"), ("um", "UH"), ("er", "UH"), ("ah", "UH"), ("oh", "UH"),
    ("eh", "UH"), ("hm", "UH"), ("hmm", "UH"), ("mm", "UH"), ("huh", "UH"),
    ("yeah", "UH"), ("yep", "UH"), ("nah", "UH"), ("okay", "UH"), ("ok", "UH"),
    ("wow", "UH"), ("hey", "UH"), ("oops", "UH"), ("ouch", "UH"), ("alas", "UH"),
    // Wh-words.
    ("which", "WDT"), ("who", "WP"), ("whom", "WP"), ("what", "WP"),
    ("whose", "WP$"), ("when", "WRB"), ("where", "WRB"), ("why", "WRB"),
    ("how", "WRB"),
];

fn lexicon_map() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| CLOSED_CLASS_WORDS.iter().copied().collect())
}

/// Words of the built-in lexicon carrying a given tag.
pub fn lexicon_words_with_tag(tag: &str) -> Vec<&'static str> {
    CLOSED_CLASS_WORDS
        .iter()
        .filter(|(_, t)| *t == tag)
        .map(|(w, _)| *w)
        .collect()
}

/// Tags tokens with the built-in closed-class lexicon; words outside it are
/// treated as content words and tagged `NN`.
pub fn tag_with_lexicon<S: AsRef<str>>(tokens: &[S]) -> Vec<(String, &'static str)> {
    let map = lexicon_map();
    tokens
        .iter()
        .map(|t| {
            let token = t.as_ref();
            let tag = map.get(token).copied().unwrap_or("NN");
            (token.to_string(), tag)
        })
        .collect()
}

/// Type-token ratio V/N.
pub fn ttr(counts: &LexicalCounts) -> Result<f64, LexicalError> {
    if counts.n == 0 {
        return Err(LexicalError::EmptyText);
    }
    Ok(counts.v as f64 / counts.n as f64)
}

/// Moving-average type-token ratio: mean TTR over every contiguous window of
/// exactly `window` tokens (stride 1). Texts shorter than the window fall
/// back to plain TTR; the second return value flags that fallback so callers
/// can emit a warning.
pub fn mattr<S: AsRef<str>>(tokens: &[S], window: usize) -> Result<(f64, bool), LexicalError> {
    if window == 0 {
        return Err(LexicalError::BadWindow);
    }
    if tokens.is_empty() {
        return Err(LexicalError::EmptyText);
    }
    if tokens.len() < window {
        return Ok((ttr(&lexical_counts(tokens))?, true));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tokens[..window] {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut distinct = counts.len();
    let mut sum = distinct as f64;
    for i in window..tokens.len() {
        let leaving = tokens[i - window].as_ref();
        let c = counts.get_mut(leaving).expect("token in window");
        *c -= 1;
        if *c == 0 {
            counts.remove(leaving);
            distinct -= 1;
        }
        let entering = tokens[i].as_ref();
        let c = counts.entry(entering).or_insert(0);
        *c += 1;
        if *c == 1 {
            distinct += 1;
        }
        sum += distinct as f64;
    }
    let windows = tokens.len() - window + 1;
    Ok((sum / (windows as f64 * window as f64), false))
}

/// Brunét's index N^(V^−0.165); smaller values mean greater diversity.
pub fn brunet(counts: &LexicalCounts) -> Result<f64, LexicalError> {
    if counts.n == 0 || counts.v == 0 {
        return Err(LexicalError::EmptyText);
    }
    Ok((counts.n as f64).powf((counts.v as f64).powf(BRUNET_EXPONENT)))
}

/// Honoré's statistic 100·ln(N / (1 − V1/V)). Undefined when every word is a
/// hapax legomenon (V1 = V).
pub fn honore(counts: &LexicalCounts) -> Result<f64, LexicalError> {
    if counts.n == 0 || counts.v == 0 {
        return Err(LexicalError::EmptyText);
    }
    if counts.v1 == counts.v {
        return Err(LexicalError::AllHapax { v: counts.v });
    }
    let ratio = counts.v1 as f64 / counts.v as f64;
    Ok(100.0 * (counts.n as f64 / (1.0 - ratio)).ln())
}

/// Function-word and interjection ratios over tagged tokens:
/// (FUNC/W, UH/W).
pub fn density_ratios<T: AsRef<str>>(
    tagged: &[(T, &str)],
    tagset: &FunctionTagSet,
) -> Result<(f64, f64), LexicalError> {
    if tagged.is_empty() {
        return Err(LexicalError::NoTaggedTokens);
    }
    let w = tagged.len() as f64;
    let func = tagged.iter().filter(|(_, tag)| tagset.contains(tag)).count() as f64;
    let uh = tagged.iter().filter(|(_, tag)| *tag == "UH").count() as f64;
    Ok((func / w, uh / w))
}

/// Mean token count per sentence. Sentences that tokenize to nothing (for
/// example bare punctuation) are not sentences and are skipped.
pub fn mls<S: AsRef<str>>(sentences: &[S]) -> Result<f64, LexicalError> {
    let lengths: Vec<usize> = sentences
        .iter()
        .map(|s| tokenize(s.as_ref()).len())
        .filter(|&n| n > 0)
        .collect();
    if lengths.is_empty() {
        return Err(LexicalError::NoSentences);
    }
    Ok(lengths.iter().sum::<usize>() as f64 / lengths.len() as f64)
}
