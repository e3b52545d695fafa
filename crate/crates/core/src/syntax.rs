//! Bracketed constituency-tree reading and tree-shape statistics.
//!
//! Trees arrive pre-computed in sidecar files (one bracketed tree per line,
//! aligned to subject sentence order, blank line = missing tree). This module
//! parses them and computes parse-tree height and Yngve depth scores.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyntaxError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("{path}:{line}: parse error at offset {offset}: {message}")]
    SidecarParse {
        path: PathBuf,
        line: usize,
        offset: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "subject {subject_id}: only {with_trees} of {sentences} sentences have parse trees \
         (need at least half)"
    )]
    InsufficientCoverage {
        subject_id: String,
        with_trees: usize,
        sentences: usize,
    },
    #[error("Yngve statistics require at least one word")]
    NoWords,
    #[error("tree height aggregation requires at least one tree")]
    NoTrees,
}

/// A constituency tree: internal nodes carry a label and ≥ 1 child;
/// terminals carry the word token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseTree {
    Node {
        label: String,
        children: Vec<ParseTree>,
    },
    Leaf {
        token: String,
    },
}

impl ParseTree {
    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf { .. })
    }

    /// Terminal tokens in left-to-right order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ParseTree::Leaf { token } => out.push(token),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// (POS tag, token) pairs in left-to-right order, taken from nodes whose
    /// single child is a terminal.
    pub fn preterminals(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect_preterminals(&mut out);
        out
    }

    fn collect_preterminals<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        if let ParseTree::Node { label, children } = self {
            if let [ParseTree::Leaf { token }] = children.as_slice() {
                out.push((label, token));
                return;
            }
            for c in children {
                c.collect_preterminals(out);
            }
        }
    }

    /// Canonical single-space bracketed form.
    pub fn to_bracketed(&self) -> String {
        let mut s = String::new();
        self.write_bracketed(&mut s);
        s
    }

    fn write_bracketed(&self, out: &mut String) {
        match self {
            ParseTree::Leaf { token } => out.push_str(token),
            ParseTree::Node { label, children } => {
                out.push('(');
                out.push_str(label);
                for c in children {
                    out.push(' ');
                    c.write_bracketed(out);
                }
                out.push(')');
            }
        }
    }
}

/// Drops `ROOT` or unlabeled single-child wrappers that some parsers emit
/// around the sentence tree, so heights stay comparable across tree sources.
pub fn strip_root(mut tree: ParseTree) -> ParseTree {
    loop {
        match tree {
            ParseTree::Node { label, mut children }
                if (label == "ROOT" || label.is_empty()) && children.len() == 1 =>
            {
                tree = children.pop().expect("single child checked");
            }
            other => return other,
        }
    }
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    fn new(text: &str) -> Cursor {
        Cursor {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_whitespace(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn atom(&mut self) -> String {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| !c.is_whitespace() && c != '(' && c != ')')
        {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }
}

fn parse_error(offset: usize, message: &str) -> SyntaxError {
    SyntaxError::Parse {
        offset,
        message: message.to_string(),
    }
}

/// Parses one Penn-Treebank-style bracketed tree. Whitespace between tokens
/// is insensitive; escaped bracket tokens (`-LRB-`, `-RRB-`) pass through as
/// ordinary tokens. Errors carry the character offset of the problem.
pub fn parse_bracketed(text: &str) -> Result<ParseTree, SyntaxError> {
    let mut cur = Cursor::new(text);
    cur.skip_whitespace();
    if cur.peek() != Some('(') {
        return Err(parse_error(cur.pos, "expected '('"));
    }
    let tree = parse_node(&mut cur)?;
    cur.skip_whitespace();
    if cur.pos < cur.chars.len() {
        return Err(parse_error(cur.pos, "trailing content after tree"));
    }
    Ok(tree)
}

fn parse_node(cur: &mut Cursor) -> Result<ParseTree, SyntaxError> {
    let open = cur.pos;
    debug_assert_eq!(cur.peek(), Some('('));
    cur.pos += 1;
    cur.skip_whitespace();
    let label = cur.atom();
    let mut children = Vec::new();
    loop {
        cur.skip_whitespace();
        match cur.peek() {
            None => return Err(parse_error(cur.pos, "unbalanced brackets: missing ')'")),
            Some(')') => {
                cur.pos += 1;
                if children.is_empty() {
                    // "(NP)" and "()" denote a constituent with no content.
                    return Err(parse_error(open, "empty constituent"));
                }
                if label.is_empty() && children.iter().all(ParseTree::is_leaf) {
                    return Err(parse_error(open, "constituent with tokens needs a label"));
                }
                return Ok(ParseTree::Node { label, children });
            }
            Some('(') => children.push(parse_node(cur)?),
            Some(_) => {
                let token = cur.atom();
                children.push(ParseTree::Leaf { token });
            }
        }
    }
}

/// Number of edges on the longest root-to-terminal path.
pub fn tree_height(tree: &ParseTree) -> usize {
    match tree {
        ParseTree::Leaf { .. } => 0,
        ParseTree::Node { children, .. } => {
            1 + children.iter().map(tree_height).max().unwrap_or(0)
        }
    }
}

/// Per-word Yngve depths in left-to-right word order: each node numbers its
/// children right-to-left from 0, and a word's depth is the sum of those
/// numbers along its path from the root.
pub fn yngve_depths(tree: &ParseTree) -> Vec<u64> {
    let mut out = Vec::new();
    collect_depths(tree, 0, &mut out);
    out
}

fn collect_depths(tree: &ParseTree, acc: u64, out: &mut Vec<u64>) {
    match tree {
        ParseTree::Leaf { .. } => out.push(acc),
        ParseTree::Node { children, .. } => {
            let k = children.len();
            for (i, c) in children.iter().enumerate() {
                collect_depths(c, acc + (k - 1 - i) as u64, out);
            }
        }
    }
}

/// Yngve depth summary over all words of all of a subject's sentences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YngveStats {
    pub mean: f64,
    pub total: f64,
    pub max: f64,
}

/// Aggregates per-sentence depth lists. Errors if no words are present.
pub fn yngve_stats(depth_lists: &[Vec<u64>]) -> Result<YngveStats, SyntaxError> {
    let mut total = 0u64;
    let mut max = 0u64;
    let mut count = 0usize;
    for depths in depth_lists {
        for &d in depths {
            total += d;
            max = max.max(d);
            count += 1;
        }
    }
    if count == 0 {
        return Err(SyntaxError::NoWords);
    }
    Ok(YngveStats {
        mean: total as f64 / count as f64,
        total: total as f64,
        max: max as f64,
    })
}

/// How per-sentence tree heights are combined into a subject-level feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeAggregate {
    #[default]
    Mean,
    Max,
}

/// Combines per-sentence heights into the subject-level height feature.
pub fn aggregate_heights(heights: &[usize], how: TreeAggregate) -> Result<f64, SyntaxError> {
    if heights.is_empty() {
        return Err(SyntaxError::NoTrees);
    }
    Ok(match how {
        TreeAggregate::Mean => {
            heights.iter().sum::<usize>() as f64 / heights.len() as f64
        }
        TreeAggregate::Max => *heights.iter().max().expect("non-empty") as f64,
    })
}

/// Errors unless at least half of a subject's sentences have trees.
pub fn coverage_check(
    subject_id: &str,
    with_trees: usize,
    sentences: usize,
) -> Result<(), SyntaxError> {
    if 2 * with_trees < sentences {
        return Err(SyntaxError::InsufficientCoverage {
            subject_id: subject_id.to_string(),
            with_trees,
            sentences,
        });
    }
    Ok(())
}

/// Loads a per-subject tree sidecar: one bracketed tree per line in sentence
/// order, blank line = missing tree for that sentence.
pub fn load_tree_sidecar(path: &Path) -> Result<Vec<Option<ParseTree>>, SyntaxError> {
    let content = fs::read_to_string(path).map_err(|source| SyntaxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut trees = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            trees.push(None);
            continue;
        }
        let tree = parse_bracketed(line).map_err(|e| match e {
            SyntaxError::Parse { offset, message } => SyntaxError::SidecarParse {
                path: path.to_path_buf(),
                line: idx + 1,
                offset,
                message,
            },
            other => other,
        })?;
        trees.push(Some(tree));
    }
    Ok(trees)
}
