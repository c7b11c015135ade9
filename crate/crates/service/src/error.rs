use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use regionlime_core::api::ErrorBody;
use regionlime_core::Error;

/// An error answered as `{"code": ..., "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_string(), message: message.into() }
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::MalformedImage(_) | Error::UnsupportedFormat(_) => StatusCode::BAD_REQUEST,
        Error::EmptyMask
        | Error::MaskCoversEverything
        | Error::DimMismatch { .. }
        | Error::LengthMismatch { .. }
        | Error::TooFewPixels { .. }
        | Error::RegionLeftImage
        | Error::ShapeMismatch(_)
        | Error::InvalidConfig(_)
        | Error::Dataset(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::RemoteUnavailable(_) | Error::ProtocolViolation(_) => StatusCode::BAD_GATEWAY,
        Error::SolverDiverged { .. }
        | Error::SingularSystem(_)
        | Error::NonFiniteOutput
        | Error::NonFiniteLoss { .. }
        | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        Self { status: status_for(&err), code: err.code().to_string(), message: err.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(code = %self.code, "{}", self.message);
        }
        (self.status, Json(ErrorBody { code: self.code, message: self.message })).into_response()
    }
}
