//! Corpus curation and tokenization toolkit.
//!
//! The crate is organised as a set of stages that all operate on [`Record`]s
//! read from JSON Lines shards:
//!
//! - [`record`]: parsing, cleaning, Arabic normalization and boilerplate removal
//! - [`quality`]: Arabic-aware quality signals, calibration histograms, filter policies
//! - [`dedup`]: exact, URL and MinHash-LSH near-duplicate removal
//! - [`ngram`]: modified Kneser-Ney n-gram language model and perplexity filtering
//! - [`tokenizer`]: character-level BPE and the morpheme-constrained MorphBPE trainer
//! - [`eval`]: fertility and morphological alignment of trained tokenizers
//! - [`pipeline`]: config-driven multi-stage runs with manifests and corpus statistics

pub mod dedup;
pub mod eval;
pub mod ngram;
pub mod pipeline;
pub mod quality;
pub mod record;
pub mod tokenizer;

pub use record::Record;
