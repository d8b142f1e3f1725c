//! The `synvox` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input or config,
//! 64 usage error.

mod commands;
pub mod config;
mod io;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Marks an error as a validation failure (exit code 2).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "synvox", version, about = "Synthetic speech corpus toolkit")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate sentence pairs from the configured LLM endpoint.
    GenText,
    /// Drop repeated sentences from a pairs file.
    Dedup {
        #[arg(long)]
        input: PathBuf,
    },
    /// Unique rate as a function of the number of pooled batches.
    UniqCurve {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated batch counts; overrides the config.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[arg(long)]
        subsamples: Option<usize>,
    },
    /// Synthesize audio for every pair.
    Synth {
        #[arg(long)]
        input: PathBuf,
    },
    /// Re-transcribe synthesized audio and drop length-ratio outliers.
    TtsFilter {
        #[arg(long)]
        candidates: PathBuf,
        /// Synthesis manifest to filter down to the kept utterances.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Subsample questions down to a target share.
    Rebalance {
        /// Pairs/candidates JSONL, or a manifest.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        target: Option<f64>,
        /// Field holding the sentence in plain JSONL input.
        #[arg(long, default_value = "target_text")]
        text_field: String,
    },
    /// Randomize level and mix in noise.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        noise_dir: Option<PathBuf>,
    },
    /// Partition a manifest into speaker- and transcript-exclusive splits.
    Split {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Combine real and synthetic manifests by hours.
    Mix {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
    },
    /// WER and CER with bootstrap spread.
    Eval {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// One group label per line, aligned with the references.
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Evaluation disaggregated by speaker gender.
    EvalGender {
        #[arg(long)]
        manifest: PathBuf,
        /// One hypothesis per line, in manifest order.
        #[arg(long)]
        hyps: PathBuf,
    },
    /// Words the model keeps missing, plus a review sheet.
    Errors {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        language: String,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Serve rating studies over HTTP.
    RateServe {
        /// Study JSON files.
        #[arg(long = "study", required = true)]
        studies: Vec<PathBuf>,
        #[arg(long)]
        log_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8090)]
        port: u16,
    },
    /// Statistics over exported ratings.
    RatingsAnalyze {
        #[command(subcommand)]
        analysis: Analysis,
    },
    /// Build a manifest from a `path,transcript,speaker,gender,duration` CSV.
    ImportCsv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = ["real", "synthetic"], default_value = "real")]
        origin: String,
        #[arg(long)]
        tag: String,
    },
}

#[derive(Debug, Args)]
pub struct RatingsInput {
    #[arg(long)]
    pub ratings: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    Summary {
        #[command(flatten)]
        input: RatingsInput,
        #[arg(long)]
        language: String,
    },
    Anova {
        #[command(flatten)]
        input: RatingsInput,
        #[arg(long, default_value = "readability")]
        metric: String,
    },
    RaterBootstrap {
        #[command(flatten)]
        input: RatingsInput,
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "readability")]
        metric: String,
        #[arg(long, value_delimiter = ',', required = true)]
        raters: Vec<usize>,
        #[arg(long)]
        sentences: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
    IccGrid {
        #[command(flatten)]
        input: RatingsInput,
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "readability")]
        metric: String,
        #[arg(long, value_delimiter = ',', required = true)]
        raters: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        sentences: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Drop sentences missing any rater instead of failing.
        #[arg(long)]
        listwise: bool,
    },
}

/// Map an error to its exit code by walking the cause chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use synvox_core::asr_eval::EvalError;
    use synvox_core::augment::AugmentError;
    use synvox_core::clients::ClientError;
    use synvox_core::corpus::CorpusError;
    use synvox_core::dedup::DedupError;
    use synvox_core::ratings::RatingError;
    use synvox_core::textgen::TextgenError;
    use synvox_core::tts_qc::QcError;

    for cause in err.chain() {
        let invalid = cause.is::<Invalid>()
            || matches!(
                cause.downcast_ref::<TextgenError>(),
                Some(TextgenError::InvalidSpec(_) | TextgenError::UnknownTheme(_))
            )
            || matches!(
                cause.downcast_ref::<ClientError>(),
                Some(ClientError::InvalidConfig(_) | ClientError::MissingCredential(_) | ClientError::InvalidInput(_))
            )
            || matches!(cause.downcast_ref::<QcError>(), Some(QcError::InvalidInput(_)))
            || matches!(cause.downcast_ref::<AugmentError>(), Some(AugmentError::InvalidPolicy(_)))
            || matches!(
                cause.downcast_ref::<CorpusError>(),
                Some(CorpusError::InvalidInput(_) | CorpusError::Parse { .. } | CorpusError::SchemaVersion(_))
            )
            || matches!(
                cause.downcast_ref::<EvalError>(),
                Some(
                    EvalError::LengthMismatch { .. }
                        | EvalError::Empty
                        | EvalError::InvalidNormalizer(_)
                        | EvalError::InvalidInput(_)
                )
            )
            || matches!(
                cause.downcast_ref::<RatingError>(),
                Some(RatingError::Validation { .. } | RatingError::DuplicateRating { .. } | RatingError::InvalidInput(_))
            )
            || matches!(cause.downcast_ref::<DedupError>(), Some(DedupError::InvalidInput(_)));
        if invalid {
            return EXIT_INVALID;
        }
    }
    EXIT_RUNTIME
}
