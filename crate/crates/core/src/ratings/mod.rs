//! Statistics over human ratings of generated text and synthetic audio.
//!
//! Text items carry five metrics: readability and naturalness (1-7),
//! grammatical correctness, real words and notable error (0/1), and adequacy
//! (1-7). Audio items carry intelligibility and naturalness on 1-5 scales.

mod anova;
mod bootstrap;
mod icc;
mod record;
mod summary;

pub use anova::{anova_two_way, AnovaRow, AnovaTable};
pub use bootstrap::{rater_bootstrap, RaterBootstrapPoint};
pub use icc::{icc_2k, icc_grid, IccBand, IccCell, IccGridResult, RatingMatrix};
pub use record::{read_ratings_csv, write_ratings_csv, Metric, Modality, RatingRecord, RATINGS_CSV_HEADER};
pub use summary::{summarize, write_summary_csv, MetricSummary, SummaryRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("rating fails validation on fields: {}", .fields.join(", "))]
    Validation { fields: Vec<String> },
    #[error("duplicate rating for item {item_id} by rater {rater_id}")]
    DuplicateRating { item_id: String, rater_id: String },
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("rating matrix is incomplete: {missing} missing cells")]
    IncompleteMatrix { missing: usize },
    #[error("ICC undefined: {0}")]
    Undefined(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
