//! Corpus-side tooling: entity extraction, relation enumeration, prompt
//! rendering, synthesis orchestration, and synthetic-text quality
//! metrics.

use thiserror::Error;

pub mod backend;
pub mod metrics;
pub mod plan;
pub mod prompt;
pub mod text;

pub use backend::{
    synthesize_corpus, BackendError, HttpBackend, HttpConfig, MockBackend, RelationFailure,
    SynthesisBackend, SynthesisReport, SynthesisRequest,
};
pub use metrics::{
    duplicate_rate, duplicate_rate_indexed, jaccard, ngram_overlap, pair_copy_check,
    shingle_profile, ShingleProfile, DEFAULT_JACCARD_THRESHOLD, DEFAULT_SHINGLE_WINDOW,
};
pub use plan::{extract_entities, EntityPlan, PlanOptions, DEFAULT_TRIPLET_CAP};
pub use prompt::{render_prompt, PromptKind};
pub use text::{normalize, read_jsonl, write_jsonl, DefaultTokenizer, Document, Tokenizer};

/// Failures of corpus operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("document text is empty")]
    EmptyDocument,
    #[error("entity list is empty")]
    NoEntities,
    #[error("entity names must be distinct")]
    DuplicateEntities,
    #[error("{kind} takes {needed} entities, got {got}")]
    WrongArity { kind: PromptKind, needed: usize, got: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed extraction response: {0}")]
    MalformedExtraction(String),
    #[error("synthesis budget must be at least 1")]
    ZeroBudget,
    #[error("n-gram size must be at least 1")]
    BadNgramSize,
    #[error("shingle window must be at least 1 token")]
    BadWindow,
    #[error("shingle windows differ: {left} vs {right}")]
    WindowMismatch { left: usize, right: usize },
    #[error("duplicate threshold must be in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("duplicate detection needs at least 2 documents")]
    TinyCorpus,
    #[error("malformed corpus JSONL at line {line}: {reason}")]
    MalformedJsonl { line: usize, reason: String },
    #[error("io failure: {0}")]
    Io(String),
}
