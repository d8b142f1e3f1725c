use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use super::EvalError;

const MAX_MAP_PASSES: usize = 16;
const APOSTROPHES: [char; 4] = ['\u{2019}', '\u{02BC}', '\u{2018}', '`'];

fn default_punct() -> String {
    ".,!?;:\"()[]{}«»“”„…؟،؛¡¿*/\\".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiacriticMode {
    #[default]
    Keep,
    StripListed,
}

/// Text normalization applied to both references and hypotheses.
///
/// Steps, in order: NFC, apostrophe folding, lowercasing, punctuation
/// removal, the character map, contraction splitting, whitespace collapsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalizer {
    pub lowercase: bool,
    /// Characters deleted outright. Apostrophes and hyphens are kept by default.
    pub strip_punct: String,
    /// Map ’ ʼ ‘ ` to a plain apostrophe.
    pub apostrophe_fold: bool,
    /// Turn an apostrophe between two letters into a space ("za'a" → "za a").
    pub contraction_split: bool,
    pub diacritic_mode: DiacriticMode,
    /// Used when `diacritic_mode` is `strip_listed`; longer keys apply first.
    pub diacritic_map: BTreeMap<String, String>,
    /// Count inter-word spaces as characters for CER.
    pub cer_count_spaces: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            lowercase: true,
            strip_punct: default_punct(),
            apostrophe_fold: true,
            contraction_split: false,
            diacritic_mode: DiacriticMode::Keep,
            diacritic_map: Self::west_african_map(),
            cer_count_spaces: false,
        }
    }
}

impl Normalizer {
    /// Hooked letters and velar nasal spellings common in Hausa, Kanuri and
    /// Dholuo orthographies.
    pub fn west_african_map() -> BTreeMap<String, String> {
        [("ɗ", "d"), ("ƙ", "k"), ("ɓ", "b"), ("ƴ", "y"), ("'y", "y"), ("ŋ", "ng"), ("ng'", "ng")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    /// Reject maps whose output could be rewritten again on a second pass.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.diacritic_mode == DiacriticMode::Keep {
            return Ok(());
        }
        for (k, v) in &self.diacritic_map {
            if k.is_empty() || k.chars().any(char::is_whitespace) {
                return Err(EvalError::InvalidNormalizer(format!("bad map key {k:?}")));
            }
            if let Some(k2) = self.diacritic_map.keys().find(|k2| v.contains(k2.as_str())) {
                return Err(EvalError::InvalidNormalizer(format!(
                    "replacement {v:?} for {k:?} contains key {k2:?}"
                )));
            }
            if v.chars().any(|c| self.strip_punct.contains(c)) {
                return Err(EvalError::InvalidNormalizer(format!(
                    "replacement {v:?} contains a stripped character"
                )));
            }
        }
        Ok(())
    }

    /// Short stable fingerprint of the configuration.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("normalizer serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn apply(&self, text: &str) -> String {
        let mut s: String = text.nfc().collect();
        if self.apostrophe_fold {
            s = s.chars().map(|c| if APOSTROPHES.contains(&c) { '\'' } else { c }).collect();
        }
        if self.lowercase {
            s = s.to_lowercase();
        }
        s.retain(|c| !self.strip_punct.contains(c));
        if self.diacritic_mode == DiacriticMode::StripListed {
            s = s.nfc().collect();
            let mut keys: Vec<(&String, &String)> = self.diacritic_map.iter().collect();
            keys.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then(a.0.cmp(b.0)));
            // A replacement can complete a longer key with its neighbour
            // ("ŋ'" → "ng'"), so repeat until nothing changes.
            for _ in 0..MAX_MAP_PASSES {
                let before = s.clone();
                for (k, v) in &keys {
                    s = s.replace(k.as_str(), v);
                }
                if s == before {
                    break;
                }
            }
        }
        if self.contraction_split {
            let chars: Vec<char> = s.chars().collect();
            s = chars
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let between = i > 0
                        && i + 1 < chars.len()
                        && chars[i - 1].is_alphabetic()
                        && chars[i + 1].is_alphabetic();
                    if c == '\'' && between {
                        ' '
                    } else {
                        c
                    }
                })
                .collect();
        }
        let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
        collapsed.nfc().collect()
    }

    pub fn words(&self, text: &str) -> Vec<String> {
        self.apply(text).split(' ').filter(|w| !w.is_empty()).map(String::from).collect()
    }

    pub fn chars(&self, text: &str) -> Vec<char> {
        let norm = self.apply(text);
        if self.cer_count_spaces {
            norm.chars().collect()
        } else {
            norm.chars().filter(|c| *c != ' ').collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn folding() -> Normalizer {
        Normalizer {
            diacritic_mode: DiacriticMode::StripListed,
            contraction_split: true,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let n = Normalizer::default();
        assert_eq!(n.apply("  Za’a  YI, mata! "), "za'a yi mata");
        assert_eq!(n.apply("ɗaki"), "ɗaki");
        assert_eq!(folding().apply("Ɗaki ng'ato za'a"), "daki ngato za a");
    }

    #[test]
    fn cer_spaces() {
        let n = Normalizer::default();
        assert_eq!(n.chars("ab c"), vec!['a', 'b', 'c']);
        let n = Normalizer {
            cer_count_spaces: true,
            ..Default::default()
        };
        assert_eq!(n.chars("ab c").len(), 4);
    }

    #[test]
    fn bad_map_rejected() {
        let mut n = folding();
        n.diacritic_map.insert("x".into(), "ɗ".into());
        assert!(n.validate().is_err());
        assert!(folding().validate().is_ok());
    }

    #[test]
    fn id_tracks_config() {
        assert_eq!(Normalizer::default().id(), Normalizer::default().id());
        assert_ne!(Normalizer::default().id(), folding().id());
    }

    proptest! {
        #[test]
        fn idempotent(s in "[a-zA-Zɗƙɓŋ'’ .,?!-]{0,40}", fold in any::<bool>(), split in any::<bool>()) {
            let n = Normalizer {
                diacritic_mode: if fold { DiacriticMode::StripListed } else { DiacriticMode::Keep },
                contraction_split: split,
                ..Default::default()
            };
            let once = n.apply(&s);
            prop_assert_eq!(n.apply(&once), once);
        }
    }
}
