//! The JSON API behind the web UI.
//!
//! `POST /api/recommend` takes `{text, k?}` and answers `{results: [...]}`;
//! `GET /api/pages/{page_id}` returns one corpus page. Everything else falls through
//! to the static asset directory when one is configured. Errors are `{error}` bodies,
//! with an opaque `error_id` on 500s that matches the server log line.

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lqb_core::corpus::{load_corpus, Corpus};
use lqb_core::embedding::EmbeddingProvider;
use lqb_core::qbank::load_bank;
use lqb_core::recommender::{
    recommend, RecommendError, RecommendOptions, RecommendationResult, RecommenderIndex,
};
use lqb_core::retry::RetryPolicy;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;

pub const MAX_QUERY_CHARS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub text: String,
    #[serde(default)]
    pub k: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub results: Vec<RecommendationResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_id: Option<String>,
}

/// Read-only state shared by all requests.
#[derive(Clone)]
pub struct AppState {
    pub corpus: Arc<Corpus>,
    pub index: Arc<RecommenderIndex>,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub k_default: usize,
    pub excerpt_chars: usize,
}

impl AppState {
    /// Loads the artifacts named by `config` and refuses a stale index.
    pub fn load(config: &ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let corpus = load_corpus(&config.corpus)?;
        let bank = load_bank(&config.bank, &corpus)?;
        let index = RecommenderIndex::load(&config.index)?;
        index.check_fresh(&bank.content_hash(), corpus.hash())?;
        let provider = config.provider.build(RetryPolicy::default())?;
        if provider.provider_id() != index.header.provider_id {
            anyhow::bail!(
                "index was built with provider {}, configured provider is {}",
                index.header.provider_id,
                provider.provider_id()
            );
        }
        Ok(Self {
            corpus: Arc::new(corpus),
            index: Arc::new(index),
            provider,
            k_default: config.k_default,
            excerpt_chars: config.excerpt_chars,
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: message.into(),
                error_id: None,
            },
        }
    }

    fn internal(cause: &dyn std::fmt::Display) -> Self {
        let id = uuid::Uuid::new_v4().to_string();
        tracing::error!(error_id = %id, "request failed: {cause}");
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                error: "internal error".into(),
                error_id: Some(id),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::EmptyQuery => ApiError::new(StatusCode::BAD_REQUEST, "text is empty"),
            RecommendError::UnembeddableQuery => {
                ApiError::new(StatusCode::BAD_REQUEST, "text contains no searchable words")
            }
            RecommendError::ZeroK => ApiError::new(StatusCode::BAD_REQUEST, "k must be at least 1"),
            RecommendError::Provider(p) if p.is_unavailable() => {
                tracing::warn!("embedding provider unavailable: {p}");
                ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "embedding provider unavailable",
                )
            }
            RecommendError::EmptyIndex => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no questions are indexed")
            }
            other => ApiError::internal(&other),
        }
    }
}

async fn recommend_handler(
    State(state): State<AppState>,
    body: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "text is empty"));
    }
    if req.text.chars().count() > MAX_QUERY_CHARS {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("text exceeds {MAX_QUERY_CHARS} characters"),
        ));
    }
    let k = match req.k {
        None => state.k_default,
        Some(k) if k >= 1 => usize::try_from(k).unwrap_or(usize::MAX),
        Some(_) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "k must be at least 1",
            ))
        }
    };
    let options = RecommendOptions {
        k,
        excerpt_chars: state.excerpt_chars,
    };
    // Remote providers block on HTTP; keep them off the async workers.
    let results = tokio::task::spawn_blocking(move || {
        recommend(
            &req.text,
            &state.index,
            &state.corpus,
            state.provider.as_ref(),
            &options,
        )
    })
    .await
    .map_err(|e| ApiError::internal(&e))??;
    Ok(Json(RecommendResponse { results }))
}

async fn page_handler(
    State(state): State<AppState>,
    UrlPath(page_id): UrlPath<String>,
) -> Result<Response, ApiError> {
    match state.corpus.page(&page_id) {
        Some(page) => Ok(Json(page).into_response()),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown page {page_id:?}"),
        )),
    }
}

pub fn router(
    state: AppState,
    cors_allowlist: &[String],
    static_dir: Option<&Path>,
) -> anyhow::Result<Router> {
    let mut app = Router::new()
        .route("/api/recommend", post(recommend_handler))
        .route("/api/pages/{page_id}", get(page_handler))
        .with_state(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if !cors_allowlist.is_empty() {
        let origins = cors_allowlist
            .iter()
            .map(|o| HeaderValue::from_str(o).with_context(|| format!("bad CORS origin {o:?}")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let state = tokio::task::spawn_blocking({
        let config = config.clone();
        move || AppState::load(&config)
    })
    .await??;
    tracing::info!(
        questions = state.index.len(),
        scopes = state.index.distinct_scopes(),
        "index loaded"
    );
    let app = router(state, &config.cors_allowlist, config.static_dir.as_deref())?;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
