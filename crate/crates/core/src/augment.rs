//! Level randomization and additive noise at a sampled SNR.
//!
//! All arithmetic is on `f64` samples in [-1, 1]; quantization happens only
//! when a clip is written out.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, AudioError, Clip};
use crate::seed::item_rng;

/// Peak level used when RMS targeting would clip.
pub const PEAK_CLAMP_DBFS: f64 = -0.1;
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("noise has zero power")]
    ZeroNoise,
    #[error("signal has zero power")]
    ZeroSignal,
    #[error("empty input")]
    Empty,
    #[error("sample rate mismatch: signal {signal} Hz, noise {noise} Hz")]
    SampleRateMismatch { signal: u32, noise: u32 },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    #[serde(default = "d_snr_mean")]
    pub snr_mean: f64,
    #[serde(default = "d_snr_std")]
    pub snr_std: f64,
    /// Draws below this are redrawn. `None` disables truncation.
    #[serde(default = "d_snr_floor")]
    pub snr_floor: Option<f64>,
    #[serde(default = "d_amp_mean")]
    pub amp_mean: f64,
    #[serde(default = "d_amp_std")]
    pub amp_std: f64,
    /// When false only the level is randomized.
    #[serde(default = "d_true")]
    pub mix_noise: bool,
}

fn d_snr_mean() -> f64 {
    50.0
}
fn d_snr_std() -> f64 {
    15.0
}
fn d_snr_floor() -> Option<f64> {
    Some(0.0)
}
fn d_amp_mean() -> f64 {
    -20.0
}
fn d_amp_std() -> f64 {
    5.0
}
fn d_true() -> bool {
    true
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            snr_mean: d_snr_mean(),
            snr_std: d_snr_std(),
            snr_floor: d_snr_floor(),
            amp_mean: d_amp_mean(),
            amp_std: d_amp_std(),
            mix_noise: true,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidPolicy(m.into()));
        if !(self.snr_std >= 0.0 && self.snr_std.is_finite()) {
            return bad("snr_std must be a finite value >= 0");
        }
        if !(self.amp_std >= 0.0 && self.amp_std.is_finite()) {
            return bad("amp_std must be a finite value >= 0");
        }
        if !self.snr_mean.is_finite() || !self.amp_mean.is_finite() {
            return bad("means must be finite");
        }
        if let Some(floor) = self.snr_floor {
            if self.snr_std == 0.0 && self.snr_mean < floor {
                return bad("snr_mean lies below snr_floor with zero spread");
            }
        }
        Ok(())
    }
}

/// Mean squared amplitude.
pub fn power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// RMS level relative to full scale, in dB.
pub fn rms_dbfs(samples: &[f64]) -> f64 {
    10.0 * power(samples).log10()
}

pub fn peak(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0, |m, s| f64::max(m, s.abs()))
}

/// Add `noise` to `signal` scaled so the signal-to-noise power ratio is `snr` dB.
///
/// Noise is looped or truncated to the signal length. `snr = +inf` returns
/// the signal unchanged.
pub fn mix_at_snr(signal: &[f64], noise: &[f64], snr: f64) -> Result<Vec<f64>, AugmentError> {
    if snr == f64::INFINITY {
        return Ok(signal.to_vec());
    }
    if signal.is_empty() || noise.is_empty() {
        return Err(AugmentError::Empty);
    }
    let fitted: Vec<f64> = noise.iter().copied().cycle().take(signal.len()).collect();
    let ps = power(signal);
    if ps == 0.0 {
        return Err(AugmentError::ZeroSignal);
    }
    let pn = power(&fitted);
    if pn == 0.0 {
        return Err(AugmentError::ZeroNoise);
    }
    let gain = (ps / (pn * 10f64.powf(snr / 10.0))).sqrt();
    Ok(signal.iter().zip(&fitted).map(|(s, n)| s + gain * n).collect())
}

/// Scale `signal` to `target` dBFS RMS.
///
/// If that would push the peak past full scale, the clip is instead
/// peak-normalized to -0.1 dBFS and the returned flag is set.
pub fn set_level(signal: &[f64], target: f64) -> Result<(Vec<f64>, bool), AugmentError> {
    let p = power(signal);
    if p == 0.0 {
        return Err(AugmentError::ZeroSignal);
    }
    let gain = 10f64.powf(target / 20.0) / p.sqrt();
    let pk = peak(signal);
    if pk * gain > 1.0 {
        let g = 10f64.powf(PEAK_CLAMP_DBFS / 20.0) / pk;
        return Ok((signal.iter().map(|s| s * g).collect(), true));
    }
    Ok((signal.iter().map(|s| s * gain).collect(), false))
}

/// SNR and level for one item.
pub fn draw_params<R: Rng>(policy: &AugmentPolicy, rng: &mut R) -> Result<(f64, f64), AugmentError> {
    let snr_dist = Normal::new(policy.snr_mean, policy.snr_std)
        .map_err(|e| AugmentError::InvalidPolicy(e.to_string()))?;
    let amp_dist = Normal::new(policy.amp_mean, policy.amp_std)
        .map_err(|e| AugmentError::InvalidPolicy(e.to_string()))?;
    let mut snr = snr_dist.sample(rng);
    if let Some(floor) = policy.snr_floor {
        let mut tries = 0;
        while snr < floor {
            tries += 1;
            if tries > MAX_REDRAWS {
                return Err(AugmentError::InvalidPolicy(
                    "snr distribution almost never exceeds the floor".into(),
                ));
            }
            snr = snr_dist.sample(rng);
        }
    }
    Ok((snr, amp_dist.sample(rng)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentLogEntry {
    pub utterance_id: String,
    pub noise_id: Option<String>,
    pub snr: Option<f64>,
    pub level: f64,
    pub peak_clamped: bool,
    /// Samples beyond full scale after mixing (saturated on write).
    pub clipped_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSkip {
    pub utterance_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentLog {
    pub entries: Vec<AugmentLogEntry>,
    pub skipped: Vec<AugmentSkip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedClip {
    pub id: String,
    pub clip: Clip,
}

fn augment_one(
    index: usize,
    item: &NamedClip,
    noises: &[NamedClip],
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<(Clip, AugmentLogEntry), AugmentError> {
    let mut rng = item_rng(seed, index as u64);
    let (snr, level) = draw_params(policy, &mut rng)?;
    let noise = if policy.mix_noise {
        if noises.is_empty() {
            return Err(AugmentError::InvalidPolicy("noise bank is empty".into()));
        }
        Some(&noises[rng.random_range(0..noises.len())])
    } else {
        None
    };
    let (leveled, clamped) = set_level(&item.clip.samples, level)?;
    let samples = match noise {
        Some(n) => {
            if n.clip.sample_rate != item.clip.sample_rate {
                return Err(AugmentError::SampleRateMismatch {
                    signal: item.clip.sample_rate,
                    noise: n.clip.sample_rate,
                });
            }
            mix_at_snr(&leveled, &n.clip.samples, snr)?
        }
        None => leveled,
    };
    let clip = Clip::new(samples, item.clip.sample_rate);
    let entry = AugmentLogEntry {
        utterance_id: item.id.clone(),
        noise_id: noise.map(|n| n.id.clone()),
        snr: noise.map(|_| snr),
        level,
        peak_clamped: clamped,
        clipped_samples: clip.clipped_samples(),
    };
    Ok((clip, entry))
}

/// Augment every clip; item `i` draws from the stream `(seed, i)`.
///
/// Failed items are left out of the output and listed in `skipped`, so
/// `entries.len() + skipped.len() == clips.len()`.
pub fn augment_clips(
    clips: &[NamedClip],
    noises: &[NamedClip],
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<(Vec<NamedClip>, AugmentLog), AugmentError> {
    policy.validate()?;
    let results: Vec<_> = clips
        .par_iter()
        .enumerate()
        .map(|(i, c)| augment_one(i, c, noises, policy, seed))
        .collect();
    let mut out = Vec::new();
    let mut log = AugmentLog::default();
    for (item, res) in clips.iter().zip(results) {
        match res {
            Ok((clip, entry)) => {
                out.push(NamedClip {
                    id: item.id.clone(),
                    clip,
                });
                log.entries.push(entry);
            }
            Err(e) => {
                tracing::warn!(utterance = %item.id, error = %e, "augmentation skipped");
                log.skipped.push(AugmentSkip {
                    utterance_id: item.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((out, log))
}

/// Every `.wav` under `dir`, sorted by file name, with the stem as id.
pub fn load_noise_bank(dir: &Path) -> Result<Vec<NamedClip>, AugmentError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(NamedClip { id, clip: read_wav(&p)? })
        })
        .collect()
}
