//! Themed sentence/question generation in a target language, with English
//! glosses, through a chat-completion endpoint.
//!
//! Requests cycle round-robin over the configured themes so every theme is
//! sampled equally. Each response is expected to carry a JSON object of the
//! form `{"sentences": [{"target": ..., "english": ...}, ...]}`; leading or
//! trailing prose around it is tolerated.
//!
//! A typical evaluation recipe generates two rounds of 600 sentences: one
//! round split across several candidate models, then a second round from the
//! best-rated model. Both rounds are plain `generate_corpus` calls with
//! different `total_target` and model settings.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use time::OffsetDateTime;
use ulid::Ulid;

use crate::clients::{ChatRequest, ClientError, ModelClient};
use crate::seed;
use crate::text::{ends_with_question, normalize_key, DEFAULT_QUESTION_MARKS};

/// Seventeen sustainable-development themes followed by seventeen everyday
/// topics. Replace through configuration for a specific study.
pub const DEFAULT_THEMES: [&str; 34] = [
    "no poverty",
    "zero hunger",
    "good health and well-being",
    "quality education",
    "gender equality",
    "clean water and sanitation",
    "affordable and clean energy",
    "decent work and economic growth",
    "industry, innovation and infrastructure",
    "reduced inequalities",
    "sustainable cities and communities",
    "responsible consumption and production",
    "climate action",
    "life below water",
    "life on land",
    "peace, justice and strong institutions",
    "partnerships for the goals",
    "travel and tourism",
    "sports",
    "science",
    "history",
    "food and cooking",
    "family life",
    "music and arts",
    "weather",
    "markets and trade",
    "technology",
    "animals",
    "geography",
    "politics",
    "religion and culture",
    "transportation",
    "medicine",
    "entertainment",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Language {
    /// BCP-47-style tag, e.g. `ha`.
    pub tag: String,
    /// Display name used in prompts, e.g. `Hausa`.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub language: Language,
    #[serde(default = "default_themes")]
    pub themes: Vec<String>,
    #[serde(default = "default_per_request")]
    pub sentences_per_request: usize,
    #[serde(default = "default_question_share")]
    pub question_share_target: f64,
    pub total_target: usize,
    /// Name of the LLM endpoint in the run configuration.
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Failed requests tolerated before the run aborts.
    #[serde(default = "default_failure_budget")]
    pub failure_budget: usize,
    /// Replaces the built-in two-shot exchanges when set.
    #[serde(default)]
    pub few_shot: Option<Vec<(String, String)>>,
    #[serde(default = "default_question_marks")]
    pub question_marks: Vec<char>,
    /// Pins the creation timestamp stamped on every pair; wall clock if unset.
    #[serde(default, with = "time::serde::rfc3339::option")]
    pub created_at: Option<OffsetDateTime>,
}

fn default_themes() -> Vec<String> {
    DEFAULT_THEMES.iter().map(|s| s.to_string()).collect()
}
fn default_per_request() -> usize {
    10
}
fn default_question_share() -> f64 {
    0.25
}
fn default_temperature() -> f64 {
    1.0
}
fn default_failure_budget() -> usize {
    10
}
fn default_question_marks() -> Vec<char> {
    DEFAULT_QUESTION_MARKS.to_vec()
}

impl GenerationSpec {
    pub fn new(language: Language, total_target: usize) -> Self {
        Self {
            language,
            themes: default_themes(),
            sentences_per_request: default_per_request(),
            question_share_target: default_question_share(),
            total_target,
            model: String::new(),
            seed: 0,
            temperature: default_temperature(),
            failure_budget: default_failure_budget(),
            few_shot: None,
            question_marks: default_question_marks(),
            created_at: None,
        }
    }

    pub fn validate(&self) -> Result<(), TextgenError> {
        if self.themes.is_empty() {
            return Err(TextgenError::InvalidSpec("themes must not be empty".into()));
        }
        if self.sentences_per_request == 0 {
            return Err(TextgenError::InvalidSpec(
                "sentences_per_request must be >= 1".into(),
            ));
        }
        if self.total_target == 0 {
            return Err(TextgenError::InvalidSpec("total_target must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.question_share_target) {
            return Err(TextgenError::InvalidSpec(
                "question_share_target must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One generated sentence with its English gloss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub target_text: String,
    pub english_text: String,
    pub theme: String,
    pub model_id: String,
    pub batch_id: String,
    pub is_question: bool,
    #[serde(with = "time::serde::rfc3339")]
    pub created_at: OffsetDateTime,
}

#[derive(Debug, Error)]
pub enum TextgenError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("theme {0:?} is not in the generation spec")]
    UnknownTheme(String),
    #[error("no parseable JSON in model output")]
    ParseFailure { raw: String },
    #[error("model output JSON does not match the sentence schema: {0}")]
    SchemaFailure(String),
    #[error("generation aborted after {failures} failed requests: {cause}")]
    Aborted {
        failures: usize,
        cause: String,
        partial: Box<GenerationOutput>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThemeCount {
    pub requests: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub model_id: String,
    pub language: String,
    pub seed: u64,
    pub requests: usize,
    pub total_pairs: usize,
    pub per_theme: BTreeMap<String, ThemeCount>,
    pub parse_failures: usize,
    pub schema_failures: usize,
    pub request_failures: usize,
    pub empty_responses: usize,
    /// Pairs whose normalized target text repeats an earlier pair.
    pub duplicates: usize,
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub pairs: Vec<SentencePair>,
    pub report: GenerationReport,
}

/// Build the chat request asking for `n` pairs on `theme`.
pub fn build_prompt(spec: &GenerationSpec, theme: &str, n: usize) -> Result<ChatRequest, TextgenError> {
    if !spec.themes.iter().any(|t| t == theme) {
        return Err(TextgenError::UnknownTheme(theme.to_string()));
    }
    if n == 0 {
        return Err(TextgenError::InvalidSpec("n must be >= 1".into()));
    }
    let lang = &spec.language.name;
    let question_pct = (spec.question_share_target * 100.0).round() as u32;
    let system_prompt = format!(
        "You are a native {lang} speaker and writer. Generate short, simple sentences and \
         questions written directly in {lang} (not translated from English), each with a \
         faithful English translation. Use everyday vocabulary and natural {lang} word order. \
         About {question_pct}% of the items should be questions. Respond only with standardized \
         JSON of the form {{\"sentences\": [{{\"target\": \"<{lang} text>\", \"english\": \
         \"<English translation>\"}}]}} and no other text."
    );
    let few_shot = match &spec.few_shot {
        Some(shots) => shots.clone(),
        None => default_few_shot(lang),
    };
    Ok(ChatRequest {
        system_prompt,
        few_shot,
        user_prompt: user_prompt(lang, theme, n),
        temperature: spec.temperature,
        batch_tag: String::new(),
    })
}

fn user_prompt(lang: &str, theme: &str, n: usize) -> String {
    if n == 1 {
        format!(
            "Generate 1 short, simple sentence or question in {lang} about the theme \"{theme}\". \
             Return a JSON object whose \"sentences\" array contains exactly 1 element."
        )
    } else {
        format!(
            "Generate {n} short, simple sentences and questions in {lang} about the theme \
             \"{theme}\". Return a JSON object whose \"sentences\" array contains exactly {n} \
             elements."
        )
    }
}

fn default_few_shot(lang: &str) -> Vec<(String, String)> {
    let shot = |theme: &str, items: [(&str, &str); 2]| {
        let sentences: Vec<Value> = items
            .iter()
            .map(|(topic, english)| {
                serde_json::json!({
                    "target": format!("<{lang} sentence: {topic}>"),
                    "english": english,
                })
            })
            .collect();
        (
            user_prompt(lang, theme, 2),
            serde_json::json!({ "sentences": sentences }).to_string(),
        )
    };
    vec![
        shot(
            "food and cooking",
            [
                ("the market sells fresh vegetables", "The market sells fresh vegetables."),
                ("asking where the bread is", "Where did you put the bread?"),
            ],
        ),
        shot(
            "weather",
            [
                ("rain is expected tomorrow", "It will rain tomorrow."),
                ("asking whether it is cold", "Is it cold outside today?"),
            ],
        ),
    ]
}

#[derive(Deserialize)]
struct WireBatch {
    sentences: Vec<WirePair>,
}

#[derive(Deserialize, Serialize)]
struct WirePair {
    target: String,
    english: String,
}

/// Parsed entries before provenance is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub target: String,
    pub english: String,
}

/// Extract `(target, english)` entries from a model response.
///
/// Scans for the first JSON value (object or array) matching the schema;
/// entries whose target is blank are dropped.
pub fn parse_pairs(raw: &str) -> Result<Vec<RawPair>, TextgenError> {
    let mut first_schema_error: Option<String> = None;
    for (i, c) in raw.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&raw[i..]);
        let Ok(value) = <Value as Deserialize>::deserialize(&mut de) else {
            continue;
        };
        match serde_json::from_value::<WireBatch>(value) {
            Ok(batch) => {
                return Ok(batch
                    .sentences
                    .into_iter()
                    .filter_map(|p| {
                        let target = p.target.trim();
                        (!target.is_empty()).then(|| RawPair {
                            target: target.to_string(),
                            english: p.english.trim().to_string(),
                        })
                    })
                    .collect())
            }
            Err(e) => {
                first_schema_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    match first_schema_error {
        Some(e) => Err(TextgenError::SchemaFailure(e)),
        None => Err(TextgenError::ParseFailure {
            raw: raw.to_string(),
        }),
    }
}

/// Parse a model response into sentence pairs carrying provenance.
///
/// Ids and timestamps are derived from `created_at` and the position in the
/// batch; [`generate_corpus`] assigns seeded ids instead.
pub fn parse_generation(
    raw: &str,
    theme: &str,
    model_id: &str,
    batch_id: &str,
) -> Result<Vec<SentencePair>, TextgenError> {
    let now = OffsetDateTime::now_utc();
    let batch_seed = seed::derive_seed(0, batch_id);
    Ok(parse_pairs(raw)?
        .into_iter()
        .enumerate()
        .map(|(pos, p)| {
            make_pair(
                p,
                theme,
                model_id,
                batch_id,
                DEFAULT_QUESTION_MARKS,
                now,
                seed::derive_indexed(batch_seed, pos as u64),
            )
        })
        .collect())
}

fn make_pair(
    p: RawPair,
    theme: &str,
    model_id: &str,
    batch_id: &str,
    question_marks: &[char],
    created_at: OffsetDateTime,
    id_seed: u64,
) -> SentencePair {
    let millis = (created_at.unix_timestamp_nanos() / 1_000_000).max(0) as u64;
    let random = ((id_seed as u128) << 64) | seed::derive_indexed(id_seed, 1) as u128;
    SentencePair {
        id: Ulid::from_parts(millis, random).to_string(),
        is_question: ends_with_question(&p.target, question_marks),
        target_text: p.target,
        english_text: p.english,
        theme: theme.to_string(),
        model_id: model_id.to_string(),
        batch_id: batch_id.to_string(),
        created_at,
    }
}

/// Serialize pairs into the wire schema understood by [`parse_pairs`].
pub fn to_generation_json(pairs: &[SentencePair]) -> String {
    let sentences: Vec<WirePair> = pairs
        .iter()
        .map(|p| WirePair {
            target: p.target_text.clone(),
            english: p.english_text.clone(),
        })
        .collect();
    serde_json::json!({ "sentences": sentences }).to_string()
}

/// Number of pairs whose normalized target repeats an earlier pair.
pub fn count_duplicates(pairs: &[SentencePair]) -> usize {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .filter(|p| !seen.insert(normalize_key(&p.target_text)))
        .count()
}

struct RequestResult {
    index: usize,
    theme_index: usize,
    outcome: Result<Vec<RawPair>, TextgenError>,
    transport: Option<ClientError>,
}

/// Generate `spec.total_target` pairs, sampling themes round-robin.
///
/// Requests are issued in waves sized to the remaining shortfall; results
/// are ordered by (theme, request index) and then shuffled with `spec.seed`.
pub async fn generate_corpus(
    spec: &GenerationSpec,
    client: &ModelClient,
) -> Result<GenerationOutput, TextgenError> {
    spec.validate()?;
    let created_at = spec.created_at.unwrap_or_else(OffsetDateTime::now_utc);
    let per_request = spec.sentences_per_request;
    let n_themes = spec.themes.len();

    let mut report = GenerationReport {
        model_id: client.model_id().to_string(),
        language: spec.language.tag.clone(),
        seed: spec.seed,
        ..Default::default()
    };
    for theme in &spec.themes {
        report.per_theme.entry(theme.clone()).or_default();
    }

    // (theme index, request index, position, pair)
    let mut collected: Vec<(usize, usize, usize, SentencePair)> = Vec::new();
    let mut next_request = 0usize;
    let mut failures = 0usize;
    let mut last_cause = String::new();

    while collected.len() < spec.total_target {
        let shortfall = spec.total_target - collected.len();
        let wave = shortfall.div_ceil(per_request);
        let futures = (next_request..next_request + wave).map(|index| {
            let theme_index = index % n_themes;
            let theme = &spec.themes[theme_index];
            async move {
                let mut req = build_prompt(spec, theme, per_request)?;
                req.batch_tag = batch_id(index);
                Ok::<_, TextgenError>(match client.complete_chat(&req).await {
                    Ok(raw) => RequestResult {
                        index,
                        theme_index,
                        outcome: parse_pairs(&raw),
                        transport: None,
                    },
                    Err(e) => RequestResult {
                        index,
                        theme_index,
                        outcome: Ok(Vec::new()),
                        transport: Some(e),
                    },
                })
            }
        });
        let mut results = futures::future::try_join_all(futures).await?;
        results.sort_by_key(|r| r.index);
        next_request += wave;

        for r in results {
            report.requests += 1;
            let theme = &spec.themes[r.theme_index];
            report.per_theme.get_mut(theme).expect("theme registered").requests += 1;
            let failed_because = match (&r.transport, &r.outcome) {
                (Some(e), _) => {
                    report.request_failures += 1;
                    Some(e.to_string())
                }
                (None, Err(TextgenError::ParseFailure { .. })) => {
                    report.parse_failures += 1;
                    Some("unparseable response".to_string())
                }
                (None, Err(e)) => {
                    report.schema_failures += 1;
                    Some(e.to_string())
                }
                (None, Ok(pairs)) if pairs.is_empty() => {
                    report.empty_responses += 1;
                    Some("empty response".to_string())
                }
                (None, Ok(_)) => None,
            };
            if let Some(cause) = failed_because {
                tracing::warn!(request = r.index, %theme, %cause, "generation request failed");
                failures += 1;
                last_cause = cause;
                continue;
            }
            let batch = batch_id(r.index);
            let batch_seed = seed::derive_indexed(spec.seed, r.index as u64);
            for (pos, raw) in r.outcome.expect("checked above").into_iter().enumerate() {
                let pair = make_pair(
                    raw,
                    theme,
                    client.model_id(),
                    &batch,
                    &spec.question_marks,
                    created_at,
                    seed::derive_indexed(batch_seed, pos as u64),
                );
                collected.push((r.theme_index, r.index, pos, pair));
            }
        }

        if failures > spec.failure_budget {
            let partial = finish(spec, collected, report);
            return Err(TextgenError::Aborted {
                failures,
                cause: last_cause,
                partial: Box::new(partial),
            });
        }
    }

    // Overshoot from the final wave is trimmed in request order.
    collected.sort_by_key(|(_, index, pos, _)| (*index, *pos));
    collected.truncate(spec.total_target);
    Ok(finish(spec, collected, report))
}

fn batch_id(index: usize) -> String {
    format!("req-{index:06}")
}

fn finish(
    spec: &GenerationSpec,
    mut collected: Vec<(usize, usize, usize, SentencePair)>,
    mut report: GenerationReport,
) -> GenerationOutput {
    collected.sort_by_key(|(theme, index, pos, _)| (*theme, *index, *pos));
    let mut pairs: Vec<SentencePair> = collected.into_iter().map(|(.., p)| p).collect();
    pairs.shuffle(&mut seed::rng(spec.seed));
    for p in &pairs {
        report.per_theme.entry(p.theme.clone()).or_default().pairs += 1;
    }
    report.total_pairs = pairs.len();
    report.duplicates = count_duplicates(&pairs);
    report.questions = pairs.iter().filter(|p| p.is_question).count();
    GenerationOutput { pairs, report }
}
