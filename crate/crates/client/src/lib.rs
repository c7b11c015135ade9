//! Thin async client for the regionlime HTTP API.

use regionlime_core::api::{
    encode_b64, CreateSessionRequest, CreateSessionResponse, EditResponse, ErrorBody, ExplainResponse, Health,
    MaskRequest, MaskResponse, SegmentRequest, SegmentResponse, SessionState,
};
use regionlime_core::editor::EditSpec;
use regionlime_core::explainer::ExplainConfig;
use regionlime_core::predictor::PredictorSpec;
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            ClientError::Transport(_) => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status().map(|s| s.as_u16()),
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base: base_url.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize + ?Sized, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(e) => (e.code, e.message),
            Err(_) => ("http_error".to_string(), text),
        };
        Err(ClientError::Api { status: status.as_u16(), code, message })
    }

    pub async fn health(&self) -> Result<Health> {
        self.call::<(), _>(Method::GET, "/api/health", None).await
    }

    /// Opens a session on encoded PNG/JPEG bytes.
    pub async fn create_session(&self, image: &[u8], predictor: Option<PredictorSpec>) -> Result<CreateSessionResponse> {
        let body = CreateSessionRequest { image: encode_b64(image), predictor };
        self.call(Method::POST, "/api/session", Some(&body)).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionState> {
        self.call::<(), _>(Method::GET, &format!("/api/session/{id}"), None).await
    }

    pub async fn put_mask_png(&self, id: &str, png: &[u8]) -> Result<MaskResponse> {
        let body = MaskRequest { mask: Some(encode_b64(png)), polygon: None };
        self.call(Method::PUT, &format!("/api/session/{id}/mask"), Some(&body)).await
    }

    pub async fn put_mask_polygon(&self, id: &str, vertices: Vec<[f64; 2]>) -> Result<MaskResponse> {
        let body = MaskRequest { mask: None, polygon: Some(vertices) };
        self.call(Method::PUT, &format!("/api/session/{id}/mask"), Some(&body)).await
    }

    pub async fn segment(&self, id: &str, req: &SegmentRequest) -> Result<SegmentResponse> {
        self.call(Method::POST, &format!("/api/session/{id}/segment"), Some(req)).await
    }

    pub async fn edit(&self, id: &str, spec: &EditSpec) -> Result<EditResponse> {
        self.call(Method::POST, &format!("/api/session/{id}/edit"), Some(spec)).await
    }

    pub async fn explain(&self, id: &str, cfg: &ExplainConfig) -> Result<ExplainResponse> {
        self.call(Method::POST, &format!("/api/session/{id}/explain"), Some(cfg)).await
    }
}
