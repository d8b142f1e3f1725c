use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use synvox_core::ratings::{Metric, Modality};
use synvox_core::seed::{derive_seed, rng};

use crate::ReviewError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: String,
    /// Kept server side; never part of a task payload.
    pub model_id: String,
    pub text: String,
    #[serde(default)]
    pub gloss: Option<String>,
    #[serde(default)]
    pub audio_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStudy {
    pub study_id: String,
    pub modality: Modality,
    pub items: Vec<StudyItem>,
    pub shuffle_seed: u64,
    pub raters: Vec<String>,
    /// Static bearer token; when set every study endpoint requires it.
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub min: u8,
    pub max: u8,
}

impl ReviewStudy {
    pub fn load(path: &Path) -> Result<Self, ReviewError> {
        let text = std::fs::read_to_string(path)?;
        let study: ReviewStudy =
            serde_json::from_str(&text).map_err(|e| ReviewError::InvalidStudy(format!("{}: {e}", path.display())))?;
        study.validate()?;
        Ok(study)
    }

    pub fn validate(&self) -> Result<(), ReviewError> {
        let bad = |m: String| Err(ReviewError::InvalidStudy(format!("{}: {m}", self.study_id)));
        if self.study_id.is_empty() || self.study_id.contains(['/', '\\', '.']) {
            return bad("study_id must be a plain non-empty name".into());
        }
        if self.items.is_empty() {
            return bad("no items".into());
        }
        if self.raters.is_empty() {
            return bad("no raters".into());
        }
        let mut ids = HashSet::new();
        for it in &self.items {
            if !ids.insert(&it.item_id) {
                return bad(format!("duplicate item {}", it.item_id));
            }
            if self.modality == Modality::TtsAudio && it.audio_path.is_none() {
                return bad(format!("audio item {} has no audio_path", it.item_id));
            }
        }
        if self.raters.iter().collect::<HashSet<_>>().len() != self.raters.len() {
            return bad("duplicate rater".into());
        }
        Ok(())
    }

    pub fn metrics(&self) -> Vec<MetricSpec> {
        Metric::for_modality(self.modality)
            .iter()
            .map(|m| {
                let (min, max) = m.range();
                MetricSpec {
                    name: m.name().into(),
                    min,
                    max,
                }
            })
            .collect()
    }

    pub fn item(&self, item_id: &str) -> Option<&StudyItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn has_rater(&self, rater: &str) -> bool {
        self.raters.iter().any(|r| r == rater)
    }

    /// Item indices in study order: one shuffle per study.
    pub fn study_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(&mut rng(self.shuffle_seed));
        order
    }

    /// The study order permuted again with a rater-specific seed.
    pub fn rater_order(&self, rater: &str) -> Vec<usize> {
        let base = self.study_order();
        let mut perm: Vec<usize> = (0..base.len()).collect();
        perm.shuffle(&mut rng(derive_seed(self.shuffle_seed, &format!("rater:{rater}"))));
        perm.into_iter().map(|p| base[p]).collect()
    }
}
