//! Rating collection service.
//!
//! Studies are JSON files listing items, raters and a shuffle seed. Each rater
//! walks the items in their own shuffled order; task payloads never carry the
//! producing model. Ratings land in a per-study JSONL log and are exported as
//! the CSV that `synvox_core::ratings` reads.

mod http;
mod store;
mod study;

use std::path::PathBuf;

use thiserror::Error;

pub use http::{router, serve, AppState, Submission};
pub use store::{LogEntry, Projection, StudyStore};
pub use study::{MetricSpec, ReviewStudy, StudyItem};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("{path}: line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Rating(#[from] synvox_core::ratings::RatingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
