//! Deterministic stand-ins for the chat, TTS and ASR endpoints.
//!
//! Responses depend only on the request, so runs against the stubs are
//! reproducible. The TTS stub writes the text it was given into the first
//! samples of the clip (after a short marker) and the ASR stub reads it back,
//! which keeps the pair stateless across processes. Every `hallucinate_every`
//! texts (by hash), the TTS stub "hallucinates" by encoding the text three
//! times over, so transcripts of those clips come back far too long.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;

pub const SAMPLE_RATE: u32 = 16_000;
const MARKER: i16 = 0x1D5A;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ChatMode {
    /// Generate pseudo-language sentences from a hash of the request.
    #[default]
    Normal,
    /// Reply with this content every time.
    Fixed(String),
}

#[derive(Debug, Clone)]
pub struct StubOptions {
    /// Answer the first `fail_first` requests with `fail_status`.
    pub fail_first: usize,
    pub fail_status: u16,
    /// Artificial latency per request.
    pub delay: Duration,
    /// When set, requests must carry this bearer token.
    pub require_token: Option<String>,
    pub chat_mode: ChatMode,
    /// 0 disables planted hallucinations.
    pub hallucinate_every: u64,
    /// Serve a plain sine of this many seconds instead of text-carrying audio.
    pub tts_sine_secs: Option<f64>,
    /// Answer every transcription with this text.
    pub asr_fixed: Option<String>,
    /// Share of generated items that are questions.
    pub question_share: f64,
    /// Chance that a generated sentence is drawn from a small shared pool,
    /// so repeated requests produce duplicates.
    pub duplicate_rate: f64,
}

impl Default for StubOptions {
    fn default() -> Self {
        StubOptions {
            fail_first: 0,
            fail_status: 500,
            delay: Duration::ZERO,
            require_token: None,
            chat_mode: ChatMode::Normal,
            tts_sine_secs: None,
            asr_fixed: None,
            hallucinate_every: 8,
            question_share: 0.4,
            duplicate_rate: 0.1,
        }
    }
}

#[derive(Debug, Default)]
pub struct StubStats {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
}

impl StubStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

struct AppState {
    opts: StubOptions,
    stats: Arc<StubStats>,
}

/// A running stub server.
pub struct RunningStub {
    pub base_url: String,
    pub stats: Arc<StubStats>,
    handle: tokio::task::JoinHandle<()>,
}

impl Drop for RunningStub {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

pub fn router(opts: StubOptions) -> (Router, Arc<StubStats>) {
    let stats = Arc::new(StubStats::default());
    let state = Arc::new(AppState {
        opts,
        stats: stats.clone(),
    });
    let router = Router::new()
        .route("/chat", post(chat))
        .route("/tts", post(tts))
        .route("/asr", post(asr))
        .with_state(state);
    (router, stats)
}

/// Serve on an ephemeral localhost port.
pub async fn spawn(opts: StubOptions) -> std::io::Result<RunningStub> {
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let (app, stats) = router(opts);
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(RunningStub {
        base_url: format!("http://{addr}"),
        stats,
        handle,
    })
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn seed_of(parts: &[&[u8]]) -> u64 {
    u64::from_le_bytes(digest(parts)[..8].try_into().unwrap())
}

/// Shared prologue: counting, latency, auth and injected failures.
async fn admit(state: &AppState, headers: &HeaderMap) -> Result<InFlight, Response> {
    let n = state.stats.requests.fetch_add(1, Ordering::SeqCst);
    let guard = InFlight::enter(state.stats.clone());
    if !state.opts.delay.is_zero() {
        tokio::time::sleep(state.opts.delay).await;
    }
    if let Some(token) = &state.opts.require_token {
        let expected = format!("Bearer {token}");
        if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(expected.as_str()) {
            return Err((StatusCode::UNAUTHORIZED, "missing or wrong token").into_response());
        }
    }
    if n < state.opts.fail_first {
        let status = StatusCode::from_u16(state.opts.fail_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return Err((status, "injected failure").into_response());
    }
    Ok(guard)
}

struct InFlight(Arc<StubStats>);

impl InFlight {
    fn enter(stats: Arc<StubStats>) -> Self {
        let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(stats)
    }
}

impl Drop for InFlight {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Deserialize)]
struct ChatBody {
    model: String,
    messages: Vec<ChatMessage>,
    #[serde(default)]
    temperature: f64,
}

const SYLLABLES: [&str; 16] = [
    "ka", "na", "wa", "ri", "zu", "mo", "ba", "di", "se", "lo", "gu", "ya", "fe", "to", "ha", "ku",
];

const SHARED_POOL: [(&str, &str); 4] = [
    ("sannu da zuwa", "Welcome."),
    ("ina kwana", "Good morning."),
    ("yaya aiki", "How is work?"),
    ("mun gode sosai", "Thank you very much."),
];

/// Pull `n` and the theme out of the last user prompt.
fn parse_request(prompt: &str) -> (usize, String) {
    let n = prompt
        .split_whitespace()
        .skip_while(|w| *w != "Generate")
        .nth(1)
        .and_then(|w| w.parse().ok())
        .unwrap_or(1);
    let theme = prompt.split('"').nth(1).unwrap_or("general").to_string();
    (n, theme)
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(1..=3);
    (0..syllables).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

async fn chat(State(state): State<Arc<AppState>>, headers: HeaderMap, Json(body): Json<ChatBody>) -> Response {
    let _guard = match admit(&state, &headers).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    let prompt = body
        .messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map(|m| m.content.as_str())
        .unwrap_or_default();
    let tag = headers.get("x-batch-tag").and_then(|v| v.to_str().ok()).unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(&[
        body.model.as_bytes(),
        prompt.as_bytes(),
        tag.as_bytes(),
        &body.temperature.to_le_bytes(),
    ]));
    let (n, theme) = parse_request(prompt);
    let content = match &state.opts.chat_mode {
        ChatMode::Fixed(text) => text.clone(),
        ChatMode::Normal => {
            let sentences: Vec<_> = (0..n)
                .map(|k| {
                    if rng.random_bool(state.opts.duplicate_rate.clamp(0.0, 1.0)) {
                        let (t, e) = SHARED_POOL[rng.random_range(0..SHARED_POOL.len())];
                        return json!({ "target": t, "english": e });
                    }
                    let len = rng.random_range(3..=7);
                    let mut target = (0..len).map(|_| word(&mut rng)).collect::<Vec<_>>().join(" ");
                    let question = rng.random_bool(state.opts.question_share.clamp(0.0, 1.0));
                    target.push(if question { '?' } else { '.' });
                    let english = format!(
                        "{} about {theme} number {k} from {tag}{}",
                        if question { "A question" } else { "A sentence" },
                        if question { "?" } else { "." }
                    );
                    json!({ "target": target, "english": english })
                })
                .collect();
            format!("Here you go:\n{}", json!({ "sentences": sentences }))
        }
    };
    Json(json!({ "content": content })).into_response()
}

#[derive(Deserialize)]
struct TtsBody {
    model: String,
    text: String,
}

/// Clip whose first samples carry `text` and whose remainder is a tone.
pub fn encode_text_clip(text: &str, seed: u64) -> Vec<i16> {
    let bytes = text.as_bytes();
    let len = bytes.len().min(u16::MAX as usize);
    let mut out = vec![MARKER, (len >> 8) as i16, (len & 0xFF) as i16];
    out.extend(bytes[..len].iter().map(|b| *b as i16 * 64));
    let freq = 180.0 + (seed % 300) as f64;
    let tone_len = ((text.chars().count() as f64 * 0.06).max(0.3) * SAMPLE_RATE as f64) as usize;
    out.extend((0..tone_len).map(|i| {
        let t = i as f64 / SAMPLE_RATE as f64;
        (0.3 * (2.0 * std::f64::consts::PI * freq * t).sin() * i16::MAX as f64) as i16
    }));
    out
}

pub fn sine(secs: f64, freq: f64) -> Vec<i16> {
    let n = (secs * SAMPLE_RATE as f64).round() as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            (0.5 * (2.0 * std::f64::consts::PI * freq * t).sin() * i16::MAX as f64) as i16
        })
        .collect()
}

/// Inverse of [`encode_text_clip`]; `None` when the marker is missing.
pub fn decode_text_clip(samples: &[i16]) -> Option<String> {
    if samples.len() < 3 || samples[0] != MARKER {
        return None;
    }
    let len = ((samples[1] as usize) << 8) | samples[2] as usize;
    let body = samples.get(3..3 + len)?;
    let bytes: Option<Vec<u8>> = body
        .iter()
        .map(|s| (s % 64 == 0 && (0..=255 * 64).contains(s)).then(|| (s / 64) as u8))
        .collect();
    String::from_utf8(bytes?).ok()
}

fn pcm_bytes(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}

async fn tts(State(state): State<Arc<AppState>>, headers: HeaderMap, Json(body): Json<TtsBody>) -> Response {
    let _guard = match admit(&state, &headers).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    if body.text.trim().is_empty() {
        return (StatusCode::BAD_REQUEST, "empty text").into_response();
    }
    let seed = seed_of(&[body.model.as_bytes(), body.text.as_bytes()]);
    let every = state.opts.hallucinate_every;
    let spoken = if every > 0 && seed % every == 0 {
        [body.text.as_str(); 3].join(" ")
    } else {
        body.text.clone()
    };
    let samples = match state.opts.tts_sine_secs {
        Some(secs) => sine(secs, 440.0),
        None => encode_text_clip(&spoken, seed),
    };
    Json(json!({
        "audio_b64": B64.encode(pcm_bytes(&samples)),
        "sample_rate": SAMPLE_RATE,
    }))
    .into_response()
}

#[derive(Deserialize)]
struct AsrBody {
    #[allow(dead_code)]
    model: String,
    audio_b64: String,
    #[allow(dead_code)]
    sample_rate: u32,
}

async fn asr(State(state): State<Arc<AppState>>, headers: HeaderMap, Json(body): Json<AsrBody>) -> Response {
    let _guard = match admit(&state, &headers).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    let Ok(bytes) = B64.decode(body.audio_b64.as_bytes()) else {
        return (StatusCode::BAD_REQUEST, "audio_b64 is not base64").into_response();
    };
    let samples: Vec<i16> = bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
    let text = match &state.opts.asr_fixed {
        Some(t) => t.clone(),
        None => decode_text_clip(&samples).unwrap_or_default(),
    };
    Json(json!({ "text": text })).into_response()
}
