//! Corpus-level WER and CER with bootstrap spread, per-group breakdowns,
//! and extraction of consistently misrecognized words for human review.

mod align;
mod inventory;
mod normalize;

pub use align::{edit_align, edit_distance, Alignment, EditOp};
pub use inventory::{
    adjudication_rows, error_inventory, read_adjudication_csv, write_adjudication_csv, AdjudicationRow,
    ErrorInventory, InventoryRow, ADJUDICATION_HEADER,
};
pub use normalize::{DiacriticMode, Normalizer};

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::item_rng;
use crate::stats::mean_std;

/// Groups smaller than this get a warning in the report.
pub const SMALL_GROUP: usize = 30;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("references and hypotheses differ in length ({refs} vs {hyps})")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("reference text has no {0} after normalization")]
    EmptyReference(&'static str),
    #[error("invalid normalizer: {0}")]
    InvalidNormalizer(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Error and reference-length counts of one (ref, hyp) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ItemStats {
    pub word_errors: usize,
    pub ref_words: usize,
    pub char_errors: usize,
    pub ref_chars: usize,
}

impl std::ops::AddAssign for ItemStats {
    fn add_assign(&mut self, o: Self) {
        self.word_errors += o.word_errors;
        self.ref_words += o.ref_words;
        self.char_errors += o.char_errors;
        self.ref_chars += o.ref_chars;
    }
}

impl ItemStats {
    pub fn wer(&self) -> Option<f64> {
        (self.ref_words > 0).then(|| self.word_errors as f64 / self.ref_words as f64)
    }

    pub fn cer(&self) -> Option<f64> {
        (self.ref_chars > 0).then(|| self.char_errors as f64 / self.ref_chars as f64)
    }
}

fn check_lengths(refs: &[String], hyps: &[String]) -> Result<(), EvalError> {
    if refs.len() != hyps.len() {
        return Err(EvalError::LengthMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    if refs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Per-pair counts after normalization.
pub fn item_stats(refs: &[String], hyps: &[String], norm: &Normalizer) -> Result<Vec<ItemStats>, EvalError> {
    check_lengths(refs, hyps)?;
    norm.validate()?;
    Ok(refs
        .par_iter()
        .zip(hyps.par_iter())
        .map(|(r, h)| {
            let (rw, hw) = (norm.words(r), norm.words(h));
            let (rc, hc) = (norm.chars(r), norm.chars(h));
            ItemStats {
                word_errors: edit_distance(&rw, &hw),
                ref_words: rw.len(),
                char_errors: edit_distance(&rc, &hc),
                ref_chars: rc.len(),
            }
        })
        .collect())
}

fn pooled(stats: &[ItemStats]) -> ItemStats {
    let mut total = ItemStats::default();
    for s in stats {
        total += *s;
    }
    total
}

/// Total word edits over total reference words.
pub fn wer(refs: &[String], hyps: &[String], norm: &Normalizer) -> Result<f64, EvalError> {
    pooled(&item_stats(refs, hyps, norm)?).wer().ok_or(EvalError::EmptyReference("words"))
}

/// Total character edits over total reference characters.
pub fn cer(refs: &[String], hyps: &[String], norm: &Normalizer) -> Result<f64, EvalError> {
    pooled(&item_stats(refs, hyps, norm)?).cer().ok_or(EvalError::EmptyReference("characters"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStats {
    pub iterations: usize,
    pub wer_mean: f64,
    pub wer_std: f64,
    pub cer_mean: f64,
    pub cer_std: f64,
    /// Average share of distinct items per resample.
    pub mean_unique_fraction: f64,
    /// Resamples dropped because their reference side was empty.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_items: usize,
    pub wer: f64,
    pub cer: f64,
    pub totals: ItemStats,
    pub bootstrap: BootstrapStats,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_group: BTreeMap<String, EvalReport>,
    pub normalizer_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `n` indices drawn uniformly with replacement from `0..n`, from the
/// stream for iteration `iter`.
pub fn bootstrap_indices(n: usize, seed: u64, iter: usize) -> Vec<usize> {
    let mut rng = item_rng(seed, iter as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap over precomputed per-item counts.
pub fn bootstrap_stats(stats: &[ItemStats], iterations: usize, seed: u64) -> Result<BootstrapStats, EvalError> {
    if stats.is_empty() {
        return Err(EvalError::Empty);
    }
    if iterations < 2 {
        return Err(EvalError::InvalidInput("need at least 2 bootstrap iterations".into()));
    }
    let n = stats.len();
    let draws: Vec<(Option<(f64, f64)>, f64)> = (0..iterations)
        .into_par_iter()
        .map(|it| {
            let idx = bootstrap_indices(n, seed, it);
            let unique = idx.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
            let mut t = ItemStats::default();
            for &i in &idx {
                t += stats[i];
            }
            (t.wer().zip(t.cer()), unique)
        })
        .collect();
    let ok: Vec<(f64, f64)> = draws.iter().filter_map(|d| d.0).collect();
    let skipped = iterations - ok.len();
    let w: Vec<f64> = ok.iter().map(|p| p.0).collect();
    let c: Vec<f64> = ok.iter().map(|p| p.1).collect();
    let (w, c) = match (mean_std(&w), mean_std(&c)) {
        (Some(w), Some(c)) => (w, c),
        _ => return Err(EvalError::EmptyReference("words")),
    };
    let uniq: Vec<f64> = draws.iter().map(|d| d.1).collect();
    Ok(BootstrapStats {
        iterations,
        wer_mean: w.mean,
        wer_std: w.std.unwrap_or(0.0),
        cer_mean: c.mean,
        cer_std: c.std.unwrap_or(0.0),
        mean_unique_fraction: uniq.iter().sum::<f64>() / iterations as f64,
        skipped,
    })
}

fn report_from_stats(stats: &[ItemStats], norm: &Normalizer, iterations: usize, seed: u64) -> Result<EvalReport, EvalError> {
    let totals = pooled(stats);
    Ok(EvalReport {
        n_items: stats.len(),
        wer: totals.wer().ok_or(EvalError::EmptyReference("words"))?,
        cer: totals.cer().ok_or(EvalError::EmptyReference("characters"))?,
        totals,
        bootstrap: bootstrap_stats(stats, iterations, seed)?,
        per_group: BTreeMap::new(),
        normalizer_id: norm.id(),
        warnings: Vec::new(),
    })
}

/// Point WER/CER plus the mean and sample std over `iterations` resamples of
/// the items with replacement. Iteration `i` uses the stream `(seed, i)`.
pub fn bootstrap_eval(
    refs: &[String],
    hyps: &[String],
    norm: &Normalizer,
    iterations: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let stats = item_stats(refs, hyps, norm)?;
    report_from_stats(&stats, norm, iterations, seed)
}

/// Overall report plus one report per group label.
///
/// Every group is bootstrapped with the same seed as the full corpus, so a
/// group that holds every item reproduces the overall numbers exactly.
pub fn eval_by_group(
    refs: &[String],
    hyps: &[String],
    groups: &[String],
    norm: &Normalizer,
    iterations: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let stats = item_stats(refs, hyps, norm)?;
    if groups.len() != stats.len() {
        return Err(EvalError::InvalidInput(format!(
            "{} group labels for {} items",
            groups.len(),
            stats.len()
        )));
    }
    let mut report = report_from_stats(&stats, norm, iterations, seed)?;
    let mut by_group: BTreeMap<&str, Vec<ItemStats>> = BTreeMap::new();
    for (g, s) in groups.iter().zip(&stats) {
        by_group.entry(g).or_default().push(*s);
    }
    for (g, items) in by_group {
        match report_from_stats(&items, norm, iterations, seed) {
            Ok(r) => {
                if items.len() < SMALL_GROUP {
                    let w = format!("group {g} has only {} items; its spread is unreliable", items.len());
                    tracing::warn!("{w}");
                    report.warnings.push(w);
                }
                report.per_group.insert(g.to_string(), r);
            }
            Err(e) => {
                let w = format!("group {g} omitted: {e}");
                tracing::warn!("{w}");
                report.warnings.push(w);
            }
        }
    }
    Ok(report)
}
