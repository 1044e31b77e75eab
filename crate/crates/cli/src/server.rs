//! JSON HTTP API backing the studio UI.
//!
//! Every error body is `{code, message, detail}`.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use p2va_core::audit::{build_audit, ToneGroups};
use p2va_core::clients::{ClientError, SynthesisRequest};
use p2va_core::convert::ConversionError;
use p2va_core::pipeline::RenderMode;
use p2va_core::render::{render_paraphrase, render_template, RenderError};
use p2va_core::{Converter, PersonaDescription, Strategy, StyleSchema, VoiceAttributeRecord};

use crate::backends::Backends;
use crate::config::RunConfig;
use crate::CliError;

pub struct AppState {
    pub converter: Converter,
    pub backends: Backends,
    pub render_mode: RenderMode,
}

impl AppState {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Self {
            converter: crate::commands::converter(cfg),
            backends: Backends::from_config(cfg)?,
            render_mode: cfg.render_mode,
        })
    }

    fn schema(&self) -> &StyleSchema {
        &self.converter.schema
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn unavailable(what: &str) -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "backend_unavailable",
            format!("no {what} backend configured"),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, Json(body)).into_response()
    }
}

impl From<ClientError> for ApiError {
    fn from(e: ClientError) -> Self {
        match &e {
            ClientError::ReplayMiss { key } => Self::new(StatusCode::SERVICE_UNAVAILABLE, "replay_miss", e.to_string())
                .with_detail(json!({"key": key})),
            ClientError::InvalidRequest(_) => Self::bad_request(e.to_string()),
            ClientError::Transport { status, .. } => {
                Self::new(StatusCode::BAD_GATEWAY, "upstream_error", e.to_string())
                    .with_detail(json!({"status": status}))
            }
            _ => Self::new(StatusCode::BAD_GATEWAY, "upstream_error", e.to_string()),
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::InvalidRecord(report) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_record",
                "record fails schema validation",
            )
            .with_detail(serde_json::to_value(report).unwrap_or(Value::Null)),
            RenderError::Transport(e) => e.into(),
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn get_schema(State(state): State<Arc<AppState>>) -> Json<StyleSchema> {
    Json(state.schema().clone())
}

#[derive(Deserialize)]
struct ConvertBody {
    persona: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    strategy: Option<Strategy>,
}

async fn post_convert(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: ConvertBody = parse_body(&body)?;
    let persona = PersonaDescription::new(body.id.unwrap_or_else(|| "api".into()), body.persona)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_persona", e.to_string()))?;
    let chat = state
        .backends
        .chat
        .clone()
        .ok_or_else(|| ApiError::unavailable("LLM"))?;
    let strategy = body.strategy.unwrap_or(Strategy::Closed);
    match state.converter.convert(&persona, strategy, chat.as_ref()).await {
        Ok(result) => Ok(Json(result).into_response()),
        Err(ConversionError::Transport(e)) => Err(e.into()),
        Err(ConversionError::ConversionFailed {
            attempts,
            last_error,
            raw_response,
        }) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "conversion_failed",
            format!("no usable answer after {attempts} attempts: {last_error}"),
        )
        .with_detail(json!({"attempts": attempts, "raw_response": raw_response}))),
    }
}

#[derive(Deserialize)]
struct RenderBody {
    record: VoiceAttributeRecord,
    #[serde(default)]
    mode: Option<RenderMode>,
}

async fn post_render(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: RenderBody = parse_body(&body)?;
    let c = &state.converter;
    let description = match body.mode.unwrap_or(state.render_mode) {
        RenderMode::Template => render_template(&body.record, &c.schema)?,
        RenderMode::Paraphrase => {
            let chat = state
                .backends
                .chat
                .clone()
                .ok_or_else(|| ApiError::unavailable("LLM"))?;
            render_paraphrase(&body.record, &c.schema, &c.templates, &c.chat, chat.as_ref()).await?
        }
    };
    Ok(Json(description).into_response())
}

async fn post_synthesize(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SynthesisRequest = parse_body(&body)?;
    req.validate()?;
    let tts = state.backends.tts.clone().ok_or_else(|| ApiError::unavailable("TTS"))?;
    let clip = tts.synthesize(&req).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], clip.bytes).into_response())
}

#[derive(Deserialize)]
struct AuditBody {
    records: Vec<VoiceAttributeRecord>,
    #[serde(default)]
    personas: Option<Vec<String>>,
    #[serde(default)]
    tone_groups: Option<Value>,
}

async fn post_audit(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: AuditBody = parse_body(&body)?;
    let groups = match body.tone_groups {
        Some(v) => ToneGroups::from_json(&v.to_string()).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => ToneGroups::default(),
    };
    if let Some(p) = &body.personas {
        if p.len() != body.records.len() {
            return Err(ApiError::bad_request(format!(
                "{} personas for {} records",
                p.len(),
                body.records.len()
            )));
        }
    }
    let report = build_audit(&body.records, body.personas.as_deref(), state.schema(), &groups);
    Ok(Json(report).into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed",
    )
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let started = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = response.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    response
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/convert", post(post_convert))
        .route("/api/render", post(post_render))
        .route("/api/synthesize", post(post_synthesize))
        .route("/api/audit", post(post_audit))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    tracing::info!("shutting down");
}

pub async fn serve(cfg: &RunConfig) -> Result<(), CliError> {
    let state = Arc::new(AppState::from_config(cfg)?);
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| CliError::Usage(format!("cannot listen on {}: {e}", cfg.bind)))?;
    let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    tracing::info!(%addr, "listening");
    println!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| CliError::Runtime(e.to_string()))
}
