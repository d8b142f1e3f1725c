//! Hallucination screening for synthetic speech.
//!
//! Each clip is transcribed back with an ASR model and compared to the text it
//! was synthesized from. A clip whose transcript is far longer or shorter than
//! its source (relative to the rest of the corpus) is treated as a TTS
//! hallucination and dropped.

use futures::future::join_all;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::Clip;
use crate::clients::{ClientError, ModelClient};
use crate::seed::rng;
use crate::stats::median;
use crate::text::normalize_key;

/// Scale that makes the MAD a consistent estimator of a normal std.
pub const MAD_SCALE: f64 = 1.4826;
/// Tolerance around the median used when the MAD is exactly zero.
pub const ZERO_MAD_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least 3 scored candidates, got {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    RemovedOutlier,
    #[default]
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsCandidate {
    pub utterance_id: String,
    pub source_text: String,
    pub audio_path: String,
    #[serde(default)]
    pub retranscript: Option<String>,
    #[serde(default)]
    pub length_ratio: Option<f64>,
    #[serde(default)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMeasure {
    #[default]
    Chars,
    Words,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Bounds {
    Mad { k: f64 },
    Fixed { lo: f64, hi: f64 },
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::Mad { k: 3.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    #[serde(default)]
    pub ratio_measure: RatioMeasure,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default = "default_share")]
    pub question_share_target: f64,
}

fn default_share() -> f64 {
    0.25
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            ratio_measure: RatioMeasure::Chars,
            bounds: Bounds::default(),
            question_share_target: default_share(),
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), QcError> {
        match self.bounds {
            Bounds::Mad { k } if !(k > 0.0 && k.is_finite()) => {
                Err(QcError::InvalidInput(format!("mad k must be positive, got {k}")))
            }
            Bounds::Fixed { lo, hi } if !(0.0 <= lo && lo < hi) => {
                Err(QcError::InvalidInput(format!("fixed bounds need 0 <= lo < hi, got {lo}..{hi}")))
            }
            _ => Ok(()),
        }
    }
}

fn measured_len(text: &str, measure: RatioMeasure) -> usize {
    let norm = normalize_key(text);
    match measure {
        RatioMeasure::Chars => norm.chars().count(),
        RatioMeasure::Words => norm.split(' ').filter(|w| !w.is_empty()).count(),
    }
}

/// Normalized length of the transcript over that of the source.
pub fn length_ratio(source: &str, transcript: &str, measure: RatioMeasure) -> Result<f64, QcError> {
    let denom = measured_len(source, measure);
    if denom == 0 {
        return Err(QcError::InvalidInput("empty source text".into()));
    }
    Ok(measured_len(transcript, measure) as f64 / denom as f64)
}

/// Outcome of scoring one candidate.
#[derive(Debug)]
pub enum ScoreFailure {
    Asr(ClientError),
    Audio(String),
}

/// Transcribe every unscored candidate and fill in its length ratio.
///
/// `load` supplies the audio for a candidate. Candidates whose audio or ASR
/// call fails stay pending; their failures are returned by utterance id.
/// Concurrency is bounded by the client's own `max_parallel`.
pub async fn score_candidates<F>(
    candidates: &mut [TtsCandidate],
    measure: RatioMeasure,
    client: &ModelClient,
    load: F,
) -> Result<Vec<(String, ScoreFailure)>, QcError>
where
    F: Fn(&TtsCandidate) -> Result<Clip, String>,
{
    if let Some(c) = candidates.iter().find(|c| measured_len(&c.source_text, measure) == 0) {
        return Err(QcError::InvalidInput(format!("empty source text for {}", c.utterance_id)));
    }
    let jobs: Vec<_> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.retranscript.is_none())
        .map(|(i, c)| (i, load(c)))
        .collect();
    let results = join_all(jobs.into_iter().map(|(i, clip)| async move {
        let out = match clip {
            Ok(clip) => client.transcribe(&clip).await.map_err(ScoreFailure::Asr),
            Err(e) => Err(ScoreFailure::Audio(e)),
        };
        (i, out)
    }))
    .await;

    let mut failures = Vec::new();
    for (i, out) in results {
        let c = &mut candidates[i];
        match out {
            Ok(text) => {
                c.length_ratio = Some(length_ratio(&c.source_text, &text, measure)?);
                c.retranscript = Some(text);
            }
            Err(e) => {
                tracing::warn!(utterance = %c.utterance_id, error = ?e, "scoring failed, left pending");
                c.verdict = Verdict::Pending;
                failures.push((c.utterance_id.clone(), e));
            }
        }
    }
    Ok(failures)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0; bins];
        if values.is_empty() {
            return Histogram { min: 0.0, max: 0.0, counts };
        }
        let width = (max - min) / bins as f64;
        for v in values {
            let b = if width > 0.0 { ((v - min) / width) as usize } else { 0 };
            counts[b.min(bins - 1)] += 1;
        }
        Histogram { min, max, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub scored: usize,
    pub kept: usize,
    pub removed: usize,
    pub pending: usize,
    /// Removed over scored.
    pub removal_fraction: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub median: Option<f64>,
    /// Scaled MAD, when the MAD policy was used.
    pub mad: Option<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<TtsCandidate>,
    pub removed: Vec<TtsCandidate>,
    pub pending: Vec<TtsCandidate>,
    pub report: FilterReport,
}

/// Split scored candidates into kept and removed by length ratio.
///
/// Unscored candidates are passed through as pending.
pub fn filter_outliers(candidates: Vec<TtsCandidate>, policy: &FilterPolicy) -> Result<FilterOutcome, QcError> {
    policy.validate()?;
    let total = candidates.len();
    let (scored, pending): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| c.length_ratio.is_some());
    let ratios: Vec<f64> = scored.iter().map(|c| c.length_ratio.unwrap()).collect();
    if let Some(r) = ratios.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(QcError::InvalidInput(format!("invalid length ratio {r}")));
    }

    let (lo, hi, med, mad) = match policy.bounds {
        Bounds::Fixed { lo, hi } => (lo, hi, median(&ratios), None),
        Bounds::Mad { k } => {
            if ratios.len() < 3 {
                return Err(QcError::InsufficientData(ratios.len()));
            }
            let med = median(&ratios).expect("non-empty");
            let devs: Vec<f64> = ratios.iter().map(|r| (r - med).abs()).collect();
            let mad = MAD_SCALE * median(&devs).expect("non-empty");
            let half = if mad > 0.0 { k * mad } else { ZERO_MAD_TOLERANCE };
            (med - half, med + half, Some(med), Some(mad))
        }
    };

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for mut c in scored {
        let r = c.length_ratio.unwrap();
        if r >= lo && r <= hi {
            c.verdict = Verdict::Kept;
            kept.push(c);
        } else {
            c.verdict = Verdict::RemovedOutlier;
            removed.push(c);
        }
    }
    let n_scored = ratios.len();
    let report = FilterReport {
        total,
        scored: n_scored,
        kept: kept.len(),
        removed: removed.len(),
        pending: pending.len(),
        removal_fraction: if n_scored == 0 { 0.0 } else { removed.len() as f64 / n_scored as f64 },
        lower_bound: lo,
        upper_bound: hi,
        median: med,
        mad,
        histogram: Histogram::new(&ratios, 20),
    };
    Ok(FilterOutcome {
        kept,
        removed,
        pending,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceReport {
    pub total_before: usize,
    pub questions_before: usize,
    pub total_after: usize,
    pub questions_after: usize,
    pub share_after: f64,
    pub warning: Option<String>,
}

/// Subsample questions so they make up `target_share` of the output.
///
/// Every non-question is kept and original order is preserved. When the
/// question share is already at or below the target, items come back
/// unchanged with a warning.
pub fn rebalance_questions<T: Clone>(
    items: &[T],
    is_question: impl Fn(&T) -> bool,
    target_share: f64,
    seed: u64,
) -> Result<(Vec<T>, RebalanceReport), QcError> {
    if !(target_share > 0.0 && target_share < 1.0) {
        return Err(QcError::InvalidInput(format!(
            "target share must be in (0, 1), got {target_share}"
        )));
    }
    let q_idx: Vec<usize> = (0..items.len()).filter(|&i| is_question(&items[i])).collect();
    let nq = items.len() - q_idx.len();
    let share = |q: usize, total: usize| if total == 0 { 0.0 } else { q as f64 / total as f64 };

    let unchanged = |warning: String| {
        tracing::warn!("{warning}");
        (
            items.to_vec(),
            RebalanceReport {
                total_before: items.len(),
                questions_before: q_idx.len(),
                total_after: items.len(),
                questions_after: q_idx.len(),
                share_after: share(q_idx.len(), items.len()),
                warning: Some(warning),
            },
        )
    };
    if q_idx.is_empty() {
        return Ok(unchanged("no questions present; nothing to rebalance".into()));
    }
    if share(q_idx.len(), items.len()) <= target_share {
        return Ok(unchanged(format!(
            "question share {:.3} already at or below target {target_share}",
            share(q_idx.len(), items.len())
        )));
    }

    let want = ((target_share * nq as f64) / (1.0 - target_share)).round() as usize;
    let want = want.min(q_idx.len());
    let mut keep = vec![true; items.len()];
    for &i in &q_idx {
        keep[i] = false;
    }
    let mut r = rng(seed);
    for j in sample(&mut r, q_idx.len(), want).iter() {
        keep[q_idx[j]] = true;
    }
    let out: Vec<T> = items.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| t.clone()).collect();
    let report = RebalanceReport {
        total_before: items.len(),
        questions_before: q_idx.len(),
        total_after: out.len(),
        questions_after: want,
        share_after: share(want, out.len()),
        warning: None,
    };
    Ok((out, report))
}
