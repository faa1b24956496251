//! Speculative Jacobi decoding engine over pluggable categorical
//! autoregressive token models.
//!
//! The crate provides four decoding modes (autoregressive, vanilla Jacobi,
//! SJD, SJD++ with confidence-based token reuse), two deterministic
//! synthetic models to drive them (hash-shaped logits and a grid-trained
//! n-gram), spatial-prior draft initialization for raster token grids, an
//! oracle suite that verifies the accept-or-resample law analytically and
//! end to end, and a benchmark harness that measures step compression.
//!
//! Everything is deterministic: a run is a pure function of its model spec,
//! decode config and seed, and traces reproduce bit-exactly across
//! platforms.

pub mod bench;
pub mod decoder;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod spatial_init;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("draft window must contain at least one token")]
    EmptyDraft,
    #[error("token {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: model::TokenId, vocab: u32 },
    #[error("n-gram corpus recipe produced no grids")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("enumeration guard exceeded: {states} sequence states (limit {limit})")]
    EnumerationGuard { states: u128, limit: u128 },
    #[error("sweep would produce {cells} cells (limit {limit})")]
    SweepGuard { cells: usize, limit: usize },
    #[error("mismatched distribution shapes")]
    ShapeMismatch,
    #[error("step counters disagree: decoder counted {decoder}, model counted {model}")]
    CounterMismatch { decoder: u64, model: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl EngineError {
    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::EmptyDraft
            | EngineError::TokenOutOfRange { .. }
            | EngineError::EmptyCorpus
            | EngineError::InvalidConfig(_)
            | EngineError::EnumerationGuard { .. }
            | EngineError::SweepGuard { .. }
            | EngineError::ShapeMismatch => "config",
            EngineError::CounterMismatch { .. } => "internal",
            EngineError::Io(_) => "io",
            EngineError::Json(_) => "serialization",
        }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;

pub use bench::{run_bench, sweep, BenchConfig, BenchReport};
pub use decoder::{decode, decode_counted, DecodeConfig, DecodeMode, RunResult};
pub use model::{Distribution, Model, ModelSpec, TokenId};
pub use oracle::{one_step_marginal, tv_distance, OracleVerdict};
pub use spatial_init::{GridGeom, InitStrategy};
