//! Config-driven pipelines over JSONL shards.
//!
//! A pipeline is an ordered list of stages. Every stage writes an immutable
//! directory `stage-NN-name-hash8` under the output directory holding its
//! output shard `part-00000.jsonl`, a `stage.json` summary, its artifacts and
//! a `_SUCCESS` marker. The hash covers the stage parameters, the upstream
//! hash and the run seed, so a rerun reuses completed stages and recomputes
//! from the first missing one onwards. A `manifest.json` describing the run
//! is written atomically at the end, or with status `failed` on error.

mod config;
mod run;
mod stats;

pub use config::{
    CalibrateParams, CleanParams, DedupExactParams, DedupFuzzyParams, EmptyParams, FilterParams, LmFilterParams,
    LmTrainParams, PipelineConfig, SegmenterKind, StageConfig, TokEvalParams, TokTrainParams, CONFIG_VERSION,
};
pub use run::{run_pipeline, sha256_file, stage_seed, FileChecksum, RunManifest, RunStatus, StageSummary};
pub use stats::{stats, SignalSketch, StatsSummary};

use thiserror::Error;

use crate::dedup::DedupError;
use crate::eval::EvalError;
use crate::ngram::LmError;
use crate::quality::QualityError;
use crate::record::RecordError;
use crate::tokenizer::TokenizerError;

/// Pipeline failures, grouped by the process exit code they map to.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Invariant(_) => 4,
        }
    }
}

impl From<RecordError> for PipelineError {
    fn from(e: RecordError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<DedupError> for PipelineError {
    fn from(e: DedupError) -> Self {
        match e {
            DedupError::InvalidParams(_) | DedupError::ZeroBuckets => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<LmError> for PipelineError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::InvalidOrder | LmError::InvalidPercentile(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<QualityError> for PipelineError {
    fn from(e: QualityError) -> Self {
        match e {
            QualityError::UnknownSignal(_) | QualityError::InvalidPolicy(_) | QualityError::PolicyFormat(_) => {
                PipelineError::Config(e.to_string())
            }
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<TokenizerError> for PipelineError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::Invariant(_) => PipelineError::Invariant(e.to_string()),
            TokenizerError::VocabTooSmall { .. } | TokenizerError::NotMultiple(_) => {
                PipelineError::Config(e.to_string())
            }
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        PipelineError::Data(e.to_string())
    }
}
