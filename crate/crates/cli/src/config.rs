//! Run configuration.
//!
//! One TOML (or JSON, by extension) file holds every stage's settings. Each
//! stage reads its own section; sections a command does not need may be
//! absent. Stage seeds are always derived from the root seed and the stage
//! name, overriding any `seed` written inside a section.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use synvox_core::augment::AugmentPolicy;
use synvox_core::asr_eval::Normalizer;
use synvox_core::clients::{EndpointConfig, EndpointKind, ModelClient};
use synvox_core::corpus::{MixSpec, SplitSpec};
use synvox_core::seed::derive_seed;
use synvox_core::textgen::GenerationSpec;
use synvox_core::tts_qc::FilterPolicy;

use crate::Invalid;

/// Environment variables named `SYNVOX_<ENDPOINT>_TOKEN` override the
/// credential of the endpoint with that (upper-cased) name.
pub const TOKEN_ENV_PREFIX: &str = "SYNVOX_";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub generation: Option<GenerationSpec>,
    pub uniq_curve: Option<UniqCurveConfig>,
    pub synth: Option<SynthConfig>,
    pub filter: Option<FilterConfig>,
    pub augment: Option<AugmentPolicy>,
    pub split: Option<SplitSpec>,
    pub mix: Option<MixSpec>,
    pub normalizer: Option<Normalizer>,
    pub eval: Option<EvalConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniqCurveConfig {
    pub batch_counts: Vec<usize>,
    #[serde(default = "d_subsamples")]
    pub subsamples: usize,
}

fn d_subsamples() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "d_tts")]
    pub endpoint: String,
}

fn d_tts() -> String {
    "tts".into()
}

#[derive(Debug, Clone, Deserialize)]
pub struct FilterConfig {
    #[serde(default = "d_asr")]
    pub endpoint: String,
    #[serde(flatten)]
    pub policy: FilterPolicy,
}

fn d_asr() -> String {
    "asr".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "d_iterations")]
    pub bootstrap_iterations: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bootstrap_iterations: d_iterations(),
        }
    }
}

fn d_iterations() -> usize {
    1000
}

impl RunConfig {
    /// Parse a config file. Errors name the offending key path.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
        } else {
            let table: toml::Table = text.parse().map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
            serde_json::to_value(table)?
        };
        serde_path_to_error::deserialize(value).map_err(|e| {
            let at = e.path().to_string();
            let at = if at == "." { "(root)".to_string() } else { at };
            Invalid(format!("config key {at}: {}", e.inner())).into()
        })
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, Invalid> {
        value
            .as_ref()
            .ok_or_else(|| Invalid(format!("config key {name}: section is missing")))
    }

    pub fn client(&self, name: &str, kind: EndpointKind) -> anyhow::Result<ModelClient> {
        let cfg = self
            .endpoints
            .get(name)
            .ok_or_else(|| Invalid(format!("config key endpoints.{name}: endpoint is missing")))?;
        if cfg.kind != kind {
            return Err(Invalid(format!("config key endpoints.{name}.kind: expected {kind}, found {}", cfg.kind)).into());
        }
        let env = format!("{TOKEN_ENV_PREFIX}{}_TOKEN", name.to_uppercase().replace('-', "_"));
        let client = match std::env::var(&env) {
            Ok(token) => ModelClient::with_token(cfg.clone(), Some(token))?,
            Err(_) => ModelClient::new(cfg.clone())?,
        };
        Ok(client)
    }
}

/// Per-stage seed: a hash of the root seed and the stage name.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    derive_seed(root, stage)
}
