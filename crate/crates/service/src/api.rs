//! HTTP JSON API.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/decks` | deck summaries |
//! | GET | `/decks/{id}` | deck with slide metadata |
//! | GET | `/decks/{id}/slides/{idx}` | slide metadata |
//! | GET | `/decks/{id}/slides/{idx}/image` | stored slide image |
//! | POST | `/simplify` | run one path, register a rateable event |
//! | POST | `/feedback` | rate an event 1-10 |
//! | GET | `/stats` | rating aggregates |
//! | POST | `/bench` | run the comparison harness over a deck |
//!
//! Failures are JSON `{"error": {"code": ..., "message": ...}}`.

use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;

use slidewise_core::bench::{render_report, run_bench, BenchError, BenchOptions, ReportFormat};
use slidewise_core::config::Settings;
use slidewise_core::cost::EstimateMethod;
use slidewise_core::deck::{DeckError, DeckStore, DeckSummary, MediaType, Slide, SlideCategory};
use slidewise_core::feedback::{FeedbackError, FeedbackRating, FeedbackStats, FeedbackStore, StatsFilter};
use slidewise_core::ocr::OcrError;
use slidewise_core::pipeline::{Pipeline, PipelineError};
use slidewise_core::prompt::PromptError;
use slidewise_core::PathMode;

pub struct AppState {
    pub decks: DeckStore,
    pub feedback: FeedbackStore,
    pub pipeline: Pipeline,
    /// Token every request must present, when set.
    pub bearer_token: Option<String>,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Deck(#[from] DeckError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("bearer token variable {0:?} is configured but not set")]
    MissingToken(String),
}

impl AppState {
    pub fn open(settings: &Settings) -> Result<Self, StartupError> {
        let bearer_token = match &settings.server.bearer_token_env {
            Some(var) => match std::env::var(var) {
                Ok(t) if !t.is_empty() => Some(t),
                _ => return Err(StartupError::MissingToken(var.clone())),
            },
            None => None,
        };
        Ok(Self {
            decks: DeckStore::open(&settings.data_dir)?,
            feedback: FeedbackStore::open(&settings.data_dir)?,
            pipeline: Pipeline::from_settings(settings)?,
            bearer_token,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/decks", get(list_decks))
        .route("/decks/{id}", get(get_deck))
        .route("/decks/{id}/slides/{idx}", get(get_slide))
        .route("/decks/{id}/slides/{idx}/image", get(slide_image))
        .route("/simplify", post(simplify))
        .route("/feedback", post(feedback))
        .route("/stats", get(stats))
        .route("/bench", post(bench))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), require_bearer))
        .layer(TraceLayer::new_for_http())
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn require_bearer(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.bearer_token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(expected.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(code: &'static str, message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, message = %self.message, "request failed");
        }
        let body = serde_json::json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_filter", r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<DeckError> for ApiError {
    fn from(e: DeckError) -> Self {
        match e {
            DeckError::UnknownDeck(_) => Self::new(StatusCode::NOT_FOUND, "unknown_deck", e.to_string()),
            DeckError::IndexOutOfRange { .. } => {
                Self::new(StatusCode::NOT_FOUND, "slide_not_found", e.to_string())
            }
            other => Self::internal("storage_error", other),
        }
    }
}

impl From<FeedbackError> for ApiError {
    fn from(e: FeedbackError) -> Self {
        match e {
            FeedbackError::OutOfRange(_) => {
                Self::new(StatusCode::BAD_REQUEST, "rating_out_of_range", e.to_string())
            }
            FeedbackError::UnknownEvent(_) => Self::new(StatusCode::NOT_FOUND, "unknown_event", e.to_string()),
            FeedbackError::DuplicateEvent(_) => {
                Self::new(StatusCode::CONFLICT, "duplicate_rating", e.to_string())
            }
            FeedbackError::EventMismatch { .. } => {
                Self::new(StatusCode::BAD_REQUEST, "event_mismatch", e.to_string())
            }
            other => Self::internal("storage_error", other),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Prompt(PromptError::EmptySourceText(ref slide)) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "empty_ocr_text",
                format!("OCR found no text on slide {slide}; try mode image_path instead"),
            ),
            PipelineError::Ocr(OcrError::EngineNotFound(_)) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "ocr_unavailable", e.to_string())
            }
            PipelineError::Ocr(_) => Self::internal("ocr_failed", e),
            PipelineError::Gateway(_) => Self::new(StatusCode::BAD_GATEWAY, "provider_failure", e.to_string()),
            other => Self::internal("internal", other),
        }
    }
}

impl From<BenchError> for ApiError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::NoPaths => Self::bad_request(e.to_string()),
            BenchError::EmptyCorpus(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_corpus", e.to_string())
            }
            BenchError::ProviderMisconfigured { .. } => {
                Self::new(StatusCode::BAD_GATEWAY, "provider_misconfigured", e.to_string())
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SlideView {
    pub slide_id: String,
    pub deck_id: String,
    pub index: usize,
    pub width_px: u32,
    pub height_px: u32,
    pub media_type: MediaType,
    pub category: Option<SlideCategory>,
    pub key_terms: Vec<String>,
    pub image_url: String,
}

impl From<&Slide> for SlideView {
    fn from(s: &Slide) -> Self {
        Self {
            slide_id: s.slide_id.clone(),
            deck_id: s.deck_id.clone(),
            index: s.index,
            width_px: s.width_px,
            height_px: s.height_px,
            media_type: s.media_type,
            category: s.category,
            key_terms: s.key_terms.clone(),
            image_url: format!("/decks/{}/slides/{}/image", s.deck_id, s.index),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DeckView {
    pub deck_id: String,
    pub title: String,
    pub slides: Vec<SlideView>,
}

async fn list_decks(State(state): State<Arc<AppState>>) -> Json<Vec<DeckSummary>> {
    Json(state.decks.list_decks())
}

async fn get_deck(
    State(state): State<Arc<AppState>>,
    path: Result<Path<String>, PathRejection>,
) -> Result<Json<DeckView>, ApiError> {
    let Path(id) = path?;
    let deck = state.decks.get_deck(&id)?;
    Ok(Json(DeckView {
        deck_id: deck.deck_id.clone(),
        title: deck.title.clone(),
        slides: deck.slides.iter().map(SlideView::from).collect(),
    }))
}

async fn get_slide(
    State(state): State<Arc<AppState>>,
    path: Result<Path<(String, usize)>, PathRejection>,
) -> Result<Json<SlideView>, ApiError> {
    let Path((id, idx)) = path?;
    Ok(Json(SlideView::from(&state.decks.get_slide(&id, idx)?)))
}

async fn slide_image(
    State(state): State<Arc<AppState>>,
    path: Result<Path<(String, usize)>, PathRejection>,
) -> Result<Response, ApiError> {
    let Path((id, idx)) = path?;
    let slide = state.decks.get_slide(&id, idx)?;
    let bytes = tokio::fs::read(&slide.image_ref)
        .await
        .map_err(|e| ApiError::internal("storage_error", format!("{}: {e}", slide.image_ref.display())))?;
    let mut headers = HeaderMap::new();
    headers.insert(
        header::CONTENT_TYPE,
        header::HeaderValue::from_static(slide.media_type.content_type()),
    );
    Ok((headers, bytes).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimplifyRequest {
    pub deck_id: String,
    pub slide_index: usize,
    #[serde(default = "default_mode")]
    pub mode: PathMode,
}

fn default_mode() -> PathMode {
    PathMode::TextPath
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimplifyResponse {
    pub event_id: String,
    pub slide_id: String,
    pub simplified_text: String,
    pub mode: PathMode,
    pub estimated_tokens: Option<u64>,
    pub estimate_method: Option<EstimateMethod>,
    /// Wall-clock time for the whole path, OCR included.
    pub latency_ms: u64,
}

async fn simplify(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SimplifyRequest>, JsonRejection>,
) -> Result<Json<SimplifyResponse>, ApiError> {
    let Json(req) = body?;
    let slide = state.decks.get_slide(&req.deck_id, req.slide_index)?;
    let started = Instant::now();
    let run = state.pipeline.run(&slide, req.mode).await;
    let resp = run.result?;
    let latency_ms = started.elapsed().as_millis() as u64;
    let event = state.feedback.issue_event(&slide.deck_id, &slide.slide_id, req.mode)?;
    Ok(Json(SimplifyResponse {
        event_id: event.event_id,
        slide_id: slide.slide_id,
        simplified_text: resp.text,
        mode: req.mode,
        estimated_tokens: run.estimate.map(|e| e.tokens),
        estimate_method: run.estimate.map(|e| e.method),
        latency_ms,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub event_id: String,
    pub rating: i64,
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<FeedbackRating>, ApiError> {
    let Json(req) = body?;
    Ok(Json(state.feedback.rate_event(&req.event_id, req.rating)?))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsQuery {
    pub deck_id: Option<String>,
    pub mode: Option<PathMode>,
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
}

async fn stats(
    State(state): State<Arc<AppState>>,
    query: Result<Query<StatsQuery>, QueryRejection>,
) -> Result<Json<FeedbackStats>, ApiError> {
    let Query(q) = query?;
    if let (Some(since), Some(until)) = (q.since, q.until) {
        if since > until {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_filter",
                "since must not be after until",
            ));
        }
    }
    let filter = StatsFilter {
        deck_id: q.deck_id,
        mode: q.mode,
        since: q.since,
        until: q.until,
    };
    Ok(Json(state.feedback.aggregate_stats(&filter)))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct BenchRequest {
    pub deck_id: String,
    /// Both paths when omitted.
    #[serde(default)]
    pub paths: Option<Vec<PathMode>>,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub started_at: Option<String>,
    /// Rendered document instead of the JSON report.
    #[serde(default)]
    pub format: Option<ReportFormat>,
}

async fn bench(
    State(state): State<Arc<AppState>>,
    body: Result<Json<BenchRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let deck = state.decks.get_deck(&req.deck_id)?;
    let now = Utc::now();
    let options = BenchOptions {
        run_id: req.run_id.unwrap_or_else(|| default_run_id(now)),
        started_at: req
            .started_at
            .unwrap_or_else(|| now.to_rfc3339_opts(SecondsFormat::Secs, true)),
        paths: req.paths.unwrap_or_else(|| PathMode::ALL.to_vec()),
    };
    let report = run_bench(&deck, &state.pipeline, &options).await?;
    Ok(match req.format {
        None => Json(report).into_response(),
        Some(f) => {
            let content_type = match f {
                ReportFormat::Csv => "text/csv; charset=utf-8",
                ReportFormat::Markdown => "text/markdown; charset=utf-8",
            };
            ([(header::CONTENT_TYPE, content_type)], render_report(&report, f)).into_response()
        }
    })
}

pub fn default_run_id(now: DateTime<Utc>) -> String {
    format!("run-{}", now.format("%Y%m%dT%H%M%SZ"))
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
