use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use synvox_core::ratings::{RatingError, RatingRecord};

use crate::store::StudyStore;
use crate::study::ReviewStudy;
use crate::ReviewError;

pub struct AppState {
    studies: BTreeMap<String, StudyStore>,
    /// item id -> (study id, wav path) for audio studies.
    audio: HashMap<String, (String, PathBuf)>,
}

impl AppState {
    pub fn open(studies: Vec<ReviewStudy>, log_dir: &Path) -> Result<Self, ReviewError> {
        let mut stores = BTreeMap::new();
        let mut audio = HashMap::new();
        for s in studies {
            s.validate()?;
            for it in &s.items {
                if let Some(p) = &it.audio_path {
                    if audio.insert(it.item_id.clone(), (s.study_id.clone(), p.clone())).is_some() {
                        return Err(ReviewError::InvalidStudy(format!(
                            "audio item {} appears in more than one study",
                            it.item_id
                        )));
                    }
                }
            }
            let id = s.study_id.clone();
            if stores.insert(id.clone(), StudyStore::open(s, log_dir)?).is_some() {
                return Err(ReviewError::InvalidStudy(format!("duplicate study {id}")));
            }
        }
        Ok(AppState { studies: stores, audio })
    }

    pub fn store(&self, study_id: &str) -> Option<&StudyStore> {
        self.studies.get(study_id)
    }
}

/// Body of `POST /studies/{id}/ratings`. The server fills in model and
/// modality from the study, so the client never needs to know them.
#[derive(Debug, Clone, Default, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub rater_id: String,
    pub item_id: String,
    pub readability: Option<i64>,
    pub grammatical: Option<i64>,
    pub real_words: Option<i64>,
    pub notable_error: Option<i64>,
    pub adequacy: Option<i64>,
    pub intelligibility: Option<i64>,
    pub naturalness_5: Option<i64>,
}

type Shared = Arc<AppState>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/studies/{id}/next", get(next_task))
        .route("/studies/{id}/ratings", post(submit))
        .route("/studies/{id}/export.csv", get(export))
        .route("/studies/{id}/progress", get(progress))
        .route("/studies/{id}/audit", get(audit))
        .route("/audio/{item_id}", get(audio))
        .with_state(Arc::new(state))
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn err(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

#[derive(Deserialize, Default)]
struct Params {
    rater: Option<String>,
    item: Option<String>,
    token: Option<String>,
}

fn authorize(study: &ReviewStudy, headers: &HeaderMap, query_token: Option<&str>) -> Result<(), Response> {
    let Some(expected) = &study.token else {
        return Ok(());
    };
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if bearer.or(query_token) == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(err(StatusCode::UNAUTHORIZED, "missing or wrong token"))
    }
}

fn lookup<'a>(
    st: &'a AppState,
    id: &str,
    headers: &HeaderMap,
    token: Option<&str>,
) -> Result<&'a StudyStore, Response> {
    let store = st
        .store(id)
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown study {id}")))?;
    authorize(&store.study, headers, token)?;
    Ok(store)
}

async fn next_task(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(p): Query<Params>,
    headers: HeaderMap,
) -> Response {
    let store = match lookup(&st, &id, &headers, p.token.as_deref()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let study = &store.study;
    let Some(rater) = p.rater.filter(|r| study.has_rater(r)) else {
        return err(StatusCode::NOT_FOUND, "unknown rater");
    };
    let snap = store.snapshot();
    let total = study.items.len();
    let done = snap.rated_by(&rater);
    let next = study
        .rater_order(&rater)
        .into_iter()
        .map(|i| &study.items[i])
        .find(|it| !snap.is_rated(&it.item_id, &rater));
    match next {
        None => Json(json!({ "status": "done", "total": total })).into_response(),
        Some(it) => Json(json!({
            "status": "task",
            "item_id": it.item_id,
            "modality": study.modality,
            "payload": {
                "text": it.text,
                "gloss": it.gloss,
                "audio_url": it.audio_path.as_ref().map(|_| format!("/audio/{}", it.item_id)),
            },
            "metrics": study.metrics(),
            "progress": { "done": done, "total": total },
        }))
        .into_response(),
    }
}

fn to_metric(v: Option<i64>, name: &str, bad: &mut Vec<String>) -> Option<u8> {
    v.and_then(|x| match u8::try_from(x) {
        Ok(b) => Some(b),
        Err(_) => {
            bad.push(name.to_string());
            None
        }
    })
}

async fn submit(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(p): Query<Params>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let store = match lookup(&st, &id, &headers, p.token.as_deref()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let sub: Submission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return err(StatusCode::BAD_REQUEST, format!("malformed submission: {e}")),
    };
    let study = &store.study;
    if !study.has_rater(&sub.rater_id) {
        return err(StatusCode::NOT_FOUND, "unknown rater");
    }
    let mut fields = Vec::new();
    let Some(item) = study.item(&sub.item_id) else {
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": "item is not part of this study", "fields": ["item_id"] })),
        )
            .into_response();
    };
    let record = RatingRecord {
        item_id: item.item_id.clone(),
        rater_id: sub.rater_id.clone(),
        model_id: item.model_id.clone(),
        modality: study.modality,
        readability: to_metric(sub.readability, "readability", &mut fields),
        grammatical: to_metric(sub.grammatical, "grammatical", &mut fields),
        real_words: to_metric(sub.real_words, "real_words", &mut fields),
        notable_error: to_metric(sub.notable_error, "notable_error", &mut fields),
        adequacy: to_metric(sub.adequacy, "adequacy", &mut fields),
        intelligibility: to_metric(sub.intelligibility, "intelligibility", &mut fields),
        naturalness_5: to_metric(sub.naturalness_5, "naturalness_5", &mut fields),
    };
    if let Err(RatingError::Validation { fields: more }) = record.validate() {
        fields.extend(more);
    }
    if !fields.is_empty() {
        fields.sort();
        fields.dedup();
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": "validation failed", "fields": fields })),
        )
            .into_response();
    }
    match store.append(record) {
        Ok(audit_len) => Json(json!({ "ok": true, "item_id": sub.item_id, "audit_len": audit_len })).into_response(),
        Err(e) => err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn export(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(p): Query<Params>,
    headers: HeaderMap,
) -> Response {
    let store = match lookup(&st, &id, &headers, p.token.as_deref()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    match store.export_csv() {
        Ok(buf) => ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response(),
        Err(e) => err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn progress(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(p): Query<Params>,
    headers: HeaderMap,
) -> Response {
    let store = match lookup(&st, &id, &headers, p.token.as_deref()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let snap = store.snapshot();
    let raters: BTreeMap<&str, usize> = store
        .study
        .raters
        .iter()
        .map(|r| (r.as_str(), snap.rated_by(r)))
        .collect();
    Json(json!({
        "study_id": id,
        "total_items": store.study.items.len(),
        "raters": raters,
    }))
    .into_response()
}

async fn audit(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(p): Query<Params>,
    headers: HeaderMap,
) -> Response {
    let store = match lookup(&st, &id, &headers, p.token.as_deref()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let (Some(item), Some(rater)) = (p.item.as_deref(), p.rater.as_deref()) else {
        return err(StatusCode::BAD_REQUEST, "item and rater are required");
    };
    let entries: Vec<Value> = store
        .snapshot()
        .audit(item, rater)
        .iter()
        .map(|e| serde_json::to_value(e).expect("log entries serialize"))
        .collect();
    Json(Value::Array(entries)).into_response()
}

async fn audio(
    State(st): State<Shared>,
    UrlPath(item_id): UrlPath<String>,
    Query(p): Query<Params>,
    headers: HeaderMap,
) -> Response {
    let Some((study_id, path)) = st.audio.get(&item_id) else {
        return err(StatusCode::NOT_FOUND, format!("no audio for {item_id}"));
    };
    if let Err(r) = lookup(&st, study_id, &headers, p.token.as_deref()) {
        return r;
    }
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(e) => err(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())),
    }
}
