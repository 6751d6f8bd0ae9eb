//! Exact, URL and MinHash-LSH deduplication. Every stage keeps the first
//! record of each duplicate group and preserves input order.

mod cache;
mod exact;
mod fuzzy;
mod minhash;
mod union_find;
mod url;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_signature_cache, write_signature_cache};
pub use exact::{exact_dedup, exact_dedup_shards, exact_key, DEFAULT_BUCKET_COUNT};
pub use fuzzy::{fuzzy_dedup, fuzzy_dedup_signed, sign_records, Cluster, DuplicateClusters, FuzzyOutput, DEFAULT_VERIFY_THRESHOLD};
pub use minhash::{
    estimate_jaccard, lsh_band_keys, minhash_signature, shingle, MinHashParams, MinHashSignature, MinHasher,
    MERSENNE_61,
};
pub use union_find::UnionFind;
pub use url::{normalize_url, url_dedup};

use crate::record::RecordError;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("duplicate id {id:?} at {first} and {second}")]
    DuplicateId { id: String, first: String, second: String },
    #[error("empty shingle set")]
    EmptyShingles,
    #[error("signature parameters differ")]
    ParamMismatch,
    #[error("invalid minhash parameters: {0}")]
    InvalidParams(String),
    #[error("bucket_count must be positive")]
    ZeroBuckets,
    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DedupError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DedupError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Exact,
    Url,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub id: String,
    pub representative: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupManifest {
    pub input: usize,
    pub kept: usize,
    pub dropped_exact: usize,
    pub dropped_url: usize,
    pub dropped_fuzzy: usize,
    /// Records kept without comparison because they produced no shingles.
    pub bypassed: Vec<String>,
    pub drops: Vec<DropEntry>,
}

impl DedupManifest {
    pub(crate) fn record_drop(&mut self, id: String, representative: String, reason: DropReason) {
        match reason {
            DropReason::Exact => self.dropped_exact += 1,
            DropReason::Url => self.dropped_url += 1,
            DropReason::Fuzzy => self.dropped_fuzzy += 1,
        }
        self.drops.push(DropEntry {
            id,
            representative,
            reason,
        });
    }

    pub fn dropped(&self) -> usize {
        self.dropped_exact + self.dropped_url + self.dropped_fuzzy
    }

    /// `input = kept + dropped`, and the drop list agrees with the counters.
    pub fn is_consistent(&self) -> bool {
        self.input == self.kept + self.dropped() && self.drops.len() == self.dropped()
    }
}
