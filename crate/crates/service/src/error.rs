use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use visbias_core::campaign::ServiceError;

/// Error body of every `/api/v1` route:
/// `{"error": {"code": "...", "message": "..."}}`.
#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    Domain(ServiceError),
    Internal(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::Domain(e)
    }
}

/// HTTP status for a [`ServiceError::code`].
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "not_found" => StatusCode::NOT_FOUND,
        "conflict" | "cap_exceeded" => StatusCode::CONFLICT,
        "invalid_request" => StatusCode::BAD_REQUEST,
        "empty_result" | "feature_failed" => StatusCode::UNPROCESSABLE_ENTITY,
        "rate_limited" => StatusCode::TOO_MANY_REQUESTS,
        "platform_unavailable" => StatusCode::SERVICE_UNAVAILABLE,
        "source_unreachable" | "ingest_failed" | "send_failed" => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Unauthorized => "unauthorized",
            ApiError::Domain(e) => e.code(),
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            other => status_for(other.code()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let message = match &self {
            ApiError::Unauthorized => "missing or wrong bearer token".to_string(),
            ApiError::Domain(e) => e.to_string(),
            ApiError::Internal(m) => m.clone(),
        };
        if status.is_server_error() {
            log::error!("{status}: {message}");
        }
        let body = json!({ "error": { "code": self.code(), "message": message } });
        (status, Json(body)).into_response()
    }
}
