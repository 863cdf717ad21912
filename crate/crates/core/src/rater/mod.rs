//! LLM rating: prompt construction, response parsing, chat backends and the
//! concurrent corpus rater.
//!
//! One chat call is made per (post, variable). Backends are pluggable so the
//! whole pipeline runs offline against the deterministic [`MockRater`] or a
//! recorded [`ReplayBackend`] archive.

mod backend;
mod cache;
mod live;
mod parse;
mod pipeline;
mod prompt;

use thiserror::Error;

pub use backend::{BackendError, MockRater, RaterBackend, RatingCall, Recorder, ReplayBackend};
pub use cache::{cache_key, CacheKey, CacheRecord, Clock, RatingCache};
pub use live::{LiveBackend, LiveConfig, TokenBucket};
pub use parse::{format_response, parse_response, parse_response_strict, ParseStatus, ParsedRating, RaterResponse};
pub use pipeline::{CorpusRating, FailureReport, PostFailure, Rater, RaterSettings, RatingFailure, RetryPolicy};
pub use prompt::{
    available_versions, build_prompt, template, ChatMessage, ChatRequest, ModelSettings, PromptTemplate, Role,
    ALT_MODEL, DEFAULT_MODEL, DEFAULT_PROMPT_VERSION, DEFAULT_TEMPERATURE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RaterError {
    #[error("unknown prompt version `{version}` (available: {})", available.join(", "))]
    UnknownVersion {
        version: String,
        available: Vec<String>,
    },
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
    #[error("concurrency limit must be at least 1")]
    Concurrency,
    #[error("archive line {line}: {message}")]
    Archive { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error("live backend: {0}")]
    Config(String),
}

impl From<std::io::Error> for RaterError {
    fn from(e: std::io::Error) -> Self {
        RaterError::Io(e.to_string())
    }
}
