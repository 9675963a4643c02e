use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ideator_core::llm::RequestError;
use ideator_core::moves::ProblemError;
use ideator_core::session::{SessionError, StoreError};
use ideator_core::RunError;
use serde::Serialize;
use serde_json::Value;

/// Error response body: `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                details: Value::Null,
            },
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong x-api-key header",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ProblemError> for ApiError {
    fn from(e: ProblemError) -> Self {
        let code = match e {
            ProblemError::Empty => "empty_problem",
            ProblemError::TooLong { .. } => "problem_too_long",
        };
        Self::bad_request(code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::UnknownIdea(_) => Self::not_found("idea_not_found", e.to_string()),
            other => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "session_integrity",
                other.to_string(),
            ),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => Self::not_found("session_not_found", e.to_string()),
            StoreError::Corrupt { ref field, .. } => {
                let field = field.clone();
                Self::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "corrupt_session",
                    e.to_string(),
                )
                .with_details(serde_json::json!({ "field": field }))
            }
            StoreError::Io { .. } => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "storage_error",
                e.to_string(),
            ),
        }
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let message = e.to_string();
        match e {
            RunError::UnknownMove(_) => Self::not_found("unknown_move", message),
            RunError::UnknownSet(_) => Self::not_found("unknown_move_set", message),
            RunError::UnknownTarget(_) => Self::not_found("idea_not_found", message),
            RunError::EmptySelection => Self::bad_request("empty_selection", message),
            RunError::Request(RequestError::Problem(p)) => p.into(),
            RunError::Request(RequestError::ZeroCount) => {
                Self::bad_request("invalid_count", message)
            }
            RunError::Backend(_) => Self::new(StatusCode::BAD_GATEWAY, "backend_error", message),
            RunError::Session(s) => s.into(),
        }
    }
}
