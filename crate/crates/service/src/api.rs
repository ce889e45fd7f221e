use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use reportrank_core::corpus::{AnnotationSet, Requirement, Segment};
use reportrank_core::ingest::{parse_input, preprocess, InputFormat};
use reportrank_core::ranking::rank;
use reportrank_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ServiceError;
use crate::state::AppState;
use crate::store::{content_hash, FeedbackEvent, ReportLogEntry, ReportRecord, ReportStatus, Verdict};

pub const MAX_K: usize = 50;
pub const DEFAULT_K: usize = 3;

type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.max_upload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/reports", post(upload_report))
        .route("/reports/{doc_id}", get(get_report))
        .route("/reports/{doc_id}/recommendations", get(recommendations))
        .route("/requirements", get(requirements))
        .route("/feedback", post(post_feedback))
        .route("/feedback/export", get(export_feedback))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn health(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "architecture": st.model.architecture(),
        "catalog_fingerprint": st.model.fingerprint(),
    }))
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    format: Option<String>,
}

#[derive(Debug, Serialize)]
struct UploadResponse {
    doc_id: String,
    status: ReportStatus,
}

/// Report ids are derived from the upload, so re-uploading is idempotent.
fn report_id(format: InputFormat, bytes: &[u8]) -> String {
    let mut keyed = Vec::with_capacity(bytes.len() + 16);
    keyed.extend_from_slice(format!("{format:?}").as_bytes());
    keyed.push(0);
    keyed.extend_from_slice(bytes);
    content_hash(&keyed)[..16].to_string()
}

async fn upload_report(
    State(st): State<Arc<AppState>>,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let format = InputFormat::from_str(q.format.as_deref().unwrap_or("json"))
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let doc_id = report_id(format, &body);
    if let Some(existing) = st.report(&doc_id) {
        let code = if existing.status == ReportStatus::Parsing {
            StatusCode::ACCEPTED
        } else {
            StatusCode::OK
        };
        return Ok((code, Json(UploadResponse { doc_id, status: existing.status })).into_response());
    }

    let worker = Arc::clone(&st);
    let id = doc_id.clone();
    let record = tokio::task::spawn_blocking(move || build_record(&worker, &id, format, &body))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))??;

    st.store.append_report(&ReportLogEntry::Created(record.clone()))?;
    st.reports
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(doc_id.clone(), record);
    st.schedule(doc_id.clone());
    tracing::info!(doc_id, "report accepted");
    Ok((
        StatusCode::ACCEPTED,
        Json(UploadResponse {
            doc_id,
            status: ReportStatus::Parsing,
        }),
    )
        .into_response())
}

fn build_record(st: &AppState, doc_id: &str, format: InputFormat, bytes: &[u8]) -> ApiResult<ReportRecord> {
    let parsed = parse_input(bytes, format, doc_id, &st.headings).map_err(|e| match e {
        CoreError::Parse { .. } => ServiceError::Core(e),
        other => ServiceError::Unprocessable(other.to_string()),
    })?;
    let source_id = parsed.document.doc_id.clone();
    let mut document = preprocess(&parsed.document, &st.model.ingest);
    if document.is_empty() {
        return Err(ServiceError::Unprocessable(
            "no segments left after preprocessing".into(),
        ));
    }
    document.doc_id = doc_id.to_string();
    let reference_annotations = parsed.annotations.map(|a| {
        let mut kept = AnnotationSet::new(doc_id);
        kept.links = a
            .links
            .into_iter()
            .filter(|(seg, _)| document.segment(seg).is_some())
            .collect();
        kept
    });
    let blob = st.store.put_blob(bytes)?;
    Ok(ReportRecord {
        doc_id: doc_id.to_string(),
        source_id,
        format,
        blob,
        status: ReportStatus::Parsing,
        error: None,
        created_at: now(),
        document,
        reference_annotations,
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Serialize)]
struct ReportView<'a> {
    doc_id: &'a str,
    source_id: &'a str,
    format: InputFormat,
    status: ReportStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    created_at: &'a str,
    language: &'a str,
    segments: &'a [Segment],
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_annotations: Option<Vec<&'a (String, String)>>,
}

async fn get_report(State(st): State<Arc<AppState>>, Path(doc_id): Path<String>) -> ApiResult<Response> {
    let rec = st
        .report(&doc_id)
        .ok_or_else(|| ServiceError::NotFound(format!("report {doc_id:?}")))?;
    let view = ReportView {
        doc_id: &rec.doc_id,
        source_id: &rec.source_id,
        format: rec.format,
        status: rec.status,
        error: rec.error.as_deref(),
        created_at: &rec.created_at,
        language: &rec.document.language,
        segments: &rec.document.segments,
        reference_annotations: rec.reference_annotations.as_ref().map(|a| a.links.iter().collect()),
    };
    Ok(Json(view).into_response())
}

#[derive(Debug, Deserialize)]
struct RecommendationQuery {
    req: Option<String>,
    k: Option<String>,
}

#[derive(Debug, Serialize)]
struct RecommendationItem<'a> {
    rank: usize,
    segment_id: String,
    score: f64,
    kind: reportrank_core::corpus::SegmentKind,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    page: Option<u32>,
}

async fn recommendations(
    State(st): State<Arc<AppState>>,
    Path(doc_id): Path<String>,
    Query(q): Query<RecommendationQuery>,
) -> ApiResult<Response> {
    let rec = st
        .report(&doc_id)
        .ok_or_else(|| ServiceError::NotFound(format!("report {doc_id:?}")))?;
    let k = match q.k.as_deref() {
        None => DEFAULT_K,
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if (1..=MAX_K).contains(&k) => k,
            _ => {
                return Err(ServiceError::BadRequest(format!(
                    "k must be an integer between 1 and {MAX_K}, got {raw:?}"
                )))
            }
        },
    };
    let req_id = q
        .req
        .ok_or_else(|| ServiceError::BadRequest("query parameter `req` is required".into()))?;
    let col = st
        .model
        .catalog
        .index_of(&req_id)
        .ok_or_else(|| ServiceError::NotFound(format!("requirement {req_id:?}")))?;
    let scores = match (rec.status, st.scores(&doc_id)) {
        (ReportStatus::Scored, Some(s)) => s,
        (ReportStatus::Failed, _) => {
            return Err(ServiceError::Conflict(format!(
                "report {doc_id:?} failed to score: {}",
                rec.error.as_deref().unwrap_or("unknown error")
            )))
        }
        _ => return Err(ServiceError::Conflict(format!("report {doc_id:?} is not scored yet"))),
    };
    let list = rank(&scores, col, k)?;
    let items: Vec<RecommendationItem> = list
        .items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let seg = rec.document.segment(&item.segment_id).expect("scored segments exist");
            RecommendationItem {
                rank: i + 1,
                kind: seg.kind,
                text: &seg.text,
                page: seg.page,
                segment_id: item.segment_id,
                score: item.score,
            }
        })
        .collect();
    Ok(Json(json!({"doc_id": doc_id, "req_id": list.req_id, "k": k, "items": items})).into_response())
}

#[derive(Debug, Serialize)]
struct CategoryGroup<'a> {
    category: &'a str,
    requirements: Vec<&'a Requirement>,
}

async fn requirements(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let catalog = &st.model.catalog;
    let groups: Vec<CategoryGroup> = catalog
        .by_category()
        .into_iter()
        .map(|(category, requirements)| CategoryGroup { category, requirements })
        .collect();
    Json(json!({
        "name": catalog.name(),
        "fingerprint": catalog.fingerprint(),
        "total": catalog.len(),
        "categories": groups,
    }))
}

#[derive(Debug, Deserialize)]
struct FeedbackInput {
    doc_id: String,
    req_id: String,
    segment_id: String,
    verdict: Verdict,
    #[serde(default)]
    client: Option<String>,
}

async fn post_feedback(State(st): State<Arc<AppState>>, Json(input): Json<FeedbackInput>) -> ApiResult<Response> {
    let rec = st
        .report(&input.doc_id)
        .ok_or_else(|| ServiceError::Unprocessable(format!("unknown report {:?}", input.doc_id)))?;
    if rec.document.segment(&input.segment_id).is_none() {
        return Err(ServiceError::Unprocessable(format!(
            "report {:?} has no segment {:?}",
            input.doc_id, input.segment_id
        )));
    }
    if !st.model.catalog.contains(&input.req_id) {
        return Err(ServiceError::Unprocessable(format!("unknown requirement {:?}", input.req_id)));
    }
    let event = {
        let mut log = st.feedback.lock().unwrap_or_else(|e| e.into_inner());
        let event = FeedbackEvent {
            event_id: format!("fb-{:08}", log.len() + 1),
            doc_id: input.doc_id,
            req_id: input.req_id,
            segment_id: input.segment_id,
            verdict: input.verdict,
            timestamp: now(),
            client: input.client,
        };
        st.store.append_feedback(&event)?;
        log.push(event.clone());
        event
    };
    Ok((
        StatusCode::CREATED,
        Json(json!({"event_id": event.event_id, "timestamp": event.timestamp})),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    mode: Option<String>,
}

/// Keeps the last event per (document, requirement, segment), in log order.
pub fn latest_per_key(events: &[FeedbackEvent]) -> Vec<FeedbackEvent> {
    let mut last: HashMap<(&str, &str, &str), usize> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        last.insert((&e.doc_id, &e.req_id, &e.segment_id), i);
    }
    let mut keep: Vec<usize> = last.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| events[i].clone()).collect()
}

#[derive(Debug, Default, Serialize)]
struct AnnotationDelta {
    doc_id: String,
    add: Vec<(String, String)>,
    remove: Vec<(String, String)>,
}

fn deltas(events: &[FeedbackEvent]) -> Vec<AnnotationDelta> {
    let mut by_doc: BTreeMap<String, AnnotationDelta> = BTreeMap::new();
    for e in latest_per_key(events) {
        let d = by_doc.entry(e.doc_id.clone()).or_insert_with(|| AnnotationDelta {
            doc_id: e.doc_id.clone(),
            ..AnnotationDelta::default()
        });
        let link = (e.segment_id, e.req_id);
        match e.verdict {
            Verdict::Relevant => d.add.push(link),
            Verdict::Irrelevant => d.remove.push(link),
        }
    }
    by_doc.into_values().collect()
}

async fn export_feedback(State(st): State<Arc<AppState>>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let events = st.feedback.lock().unwrap_or_else(|e| e.into_inner()).clone();
    let lines: Vec<String> = match q.mode.as_deref().unwrap_or("latest") {
        "latest" => latest_per_key(&events).iter().map(to_line).collect(),
        "raw" => events.iter().map(to_line).collect(),
        "deltas" => deltas(&events).iter().map(to_line).collect(),
        other => {
            return Err(ServiceError::BadRequest(format!(
                "unknown export mode {other:?}; expected latest, raw or deltas"
            )))
        }
    };
    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

fn to_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("export serializes")
}
