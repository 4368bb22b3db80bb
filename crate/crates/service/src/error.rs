use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mci_core::Rejection;
use serde::{Deserialize, Serialize};

/// Machine-readable error body: `{"code": ..., "reason": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    ModeViolation(String),
    /// Engine rejection; `reason` is the rejection code.
    #[error("{reason}: {message}")]
    Rejected { reason: String, message: String },
    #[error("{0}")]
    Storage(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::Validation(_) => "validation_error",
            ApiError::ModeViolation(_) => "mode_violation",
            ApiError::Rejected { .. } => "rejected",
            ApiError::Storage(_) => "storage_error",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::ModeViolation(_) | ApiError::Rejected { .. } => StatusCode::CONFLICT,
            ApiError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let reason = match self {
            ApiError::Rejected { reason, .. } => reason.clone(),
            other => other.to_string(),
        };
        ErrorBody { code: self.code().into(), reason }
    }
}

impl From<Rejection> for ApiError {
    fn from(r: Rejection) -> Self {
        if r.is_not_found() {
            return ApiError::NotFound(r.to_string());
        }
        ApiError::Rejected { reason: r.code().into(), message: r.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
