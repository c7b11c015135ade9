//! HTTP/JSON service holding per-session image, mask, superpixel, edit and
//! explanation state.
//!
//! Sessions live in memory behind an LRU cap. Requests on one session are
//! serialized; heavy work runs on the blocking pool and is committed to the
//! session only once it succeeds.

mod error;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use regionlime_core::api::{
    CreateSessionRequest, CreateSessionResponse, EditResponse, ExplainResponse, Health, MaskRequest, MaskResponse,
    SegmentRequest, SegmentResponse, SessionState,
};
use regionlime_core::editor::EditSpec;
use regionlime_core::explainer::ExplainConfig;
use regionlime_core::predictor::{Classifier, PredictorSpec};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

pub use error::ApiError;
use session::Sessions;

/// Turns a predictor description into a classifier. Replaceable so tests
/// can inject models without files or network.
pub type Resolver = Arc<dyn Fn(&PredictorSpec) -> regionlime_core::Result<Arc<dyn Classifier>> + Send + Sync>;

#[derive(Clone)]
pub struct ServiceConfig {
    /// Used when a session is created without a predictor.
    pub default_predictor: Option<PredictorSpec>,
    pub max_sessions: usize,
    /// Directory served under `/` (the browser UI bundle).
    pub static_dir: Option<PathBuf>,
    pub resolver: Resolver,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            default_predictor: None,
            max_sessions: 64,
            static_dir: None,
            resolver: Arc::new(|spec: &PredictorSpec| spec.build()),
            max_body_bytes: 64 << 20,
        }
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    sessions: Sessions,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Arc<Self> {
        let sessions = Sessions::new(cfg.max_sessions);
        Arc::new(Self { cfg, sessions })
    }
}

/// JSON body extractor whose rejections use the service's error shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.cfg.max_body_bytes;
    let static_dir = state.cfg.static_dir.clone();
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/session/{id}/mask", put(put_mask))
        .route("/api/session/{id}/segment", post(segment))
        .route("/api/session/{id}/edit", post(edit))
        .route("/api/session/{id}/explain", post(explain))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") }),
    };
    app.layer(DefaultBodyLimit::max(limit)).layer(TraceLayer::new_for_http())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    cfg: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(AppState::new(cfg));
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in a background task, returning the bound address.
pub async fn spawn(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, cfg, std::future::pending()).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(local)
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<CreateSessionRequest>,
) -> ApiResult<CreateSessionResponse> {
    let spec = req
        .predictor
        .or_else(|| state.cfg.default_predictor.clone())
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "predictor_required", "no predictor given and no server default"))?;
    let resolver = state.cfg.resolver.clone();
    let session = blocking(move || session::Session::create(&req.image, spec, &resolver).map_err(ApiError::from)).await?;
    let resp = session.created_response();
    state.sessions.insert(session);
    Ok(Json(resp))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionState> {
    let s = state.sessions.get(&id)?;
    let guard = s.lock().await;
    Ok(Json(guard.state()))
}

async fn put_mask(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<MaskRequest>,
) -> ApiResult<MaskResponse> {
    let s = state.sessions.get(&id)?;
    let mut guard = s.lock().await;
    Ok(Json(guard.set_mask(req)?))
}

async fn segment(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SegmentRequest>,
) -> ApiResult<SegmentResponse> {
    let s = state.sessions.get(&id)?;
    let mut guard = s.lock().await;
    let job = guard.segment_job(&req)?;
    let out = blocking(move || job.run().map_err(ApiError::from)).await?;
    Ok(Json(guard.commit_segmentation(out)))
}

async fn edit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(spec): ApiJson<EditSpec>,
) -> ApiResult<EditResponse> {
    let s = state.sessions.get(&id)?;
    let mut guard = s.lock().await;
    let job = guard.edit_job(spec)?;
    let out = blocking(move || job.run().map_err(ApiError::from)).await?;
    Ok(Json(guard.commit_edit(out)))
}

async fn explain(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(cfg): ApiJson<ExplainConfig>,
) -> ApiResult<ExplainResponse> {
    let s = state.sessions.get(&id)?;
    let mut guard = s.lock().await;
    let job = guard.explain_job(cfg)?;
    let out = blocking(move || job.run().map_err(ApiError::from)).await?;
    Ok(Json(guard.commit_explanation(out)))
}
