//! Language feature panel extraction and modeling for two-speaker,
//! multi-scene interview transcripts.
//!
//! The library covers the full pipeline:
//!
//! - [`corpus`]: transcript data model, ingestion, tokenization, sentence splitting
//! - [`embed`]: word-vector store, turn encoders (BoW average, SIF, external vectors)
//! - [`coherence`]: assessor/subject turn pairing and similarity distributions
//! - [`lexical`]: lexical diversity and density metrics
//! - [`syntax`]: bracketed parse trees, tree height, Yngve depth
//! - [`pipeline`]: the named feature panel and its tabular serialization
//! - [`learn`]: OLS, stepwise forward selection, logistic regression, naive
//!   Bayes, leave-one-out cross-validation, and evaluation metrics
//! - [`synth`]: seeded synthetic corpus generation for end-to-end testing

pub mod coherence;
pub mod corpus;
pub mod embed;
pub mod io_util;
pub mod learn;
pub mod lexical;
pub mod pipeline;
pub mod syntax;
pub mod synth;
