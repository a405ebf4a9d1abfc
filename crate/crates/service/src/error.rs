use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use teachnow_core::CoreError;
use thiserror::Error;

/// Error response: a status, a stable code and a human-readable message.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "Forbidden", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            CoreError::StaleHeartbeat { .. } => (S::CONFLICT, "StaleHeartbeat"),
            CoreError::MalformedContext => (S::BAD_REQUEST, "MalformedContext"),
            CoreError::ClockRegression { .. } => (S::CONFLICT, "ClockRegression"),
            CoreError::UnknownAssignment(_) => (S::BAD_REQUEST, "UnknownAssignment"),
            CoreError::TeacherBusy(_) => (S::CONFLICT, "TeacherBusy"),
            CoreError::TicketNotFound(_) => (S::NOT_FOUND, "TicketNotFound"),
            CoreError::TicketTerminal(_) => (S::CONFLICT, "TicketTerminal"),
            CoreError::NudgeNotFound(_) => (S::NOT_FOUND, "NudgeNotFound"),
            CoreError::NudgeExpired(_) => (S::GONE, "NudgeExpired"),
            CoreError::NudgeNotPending(_) => (S::CONFLICT, "NudgeNotPending"),
            CoreError::DuplicateSession(_) => (S::CONFLICT, "DuplicateSession"),
            CoreError::SessionNotFound(_) => (S::NOT_FOUND, "SessionNotFound"),
            CoreError::EditForbidden(_) => (S::FORBIDDEN, "EditForbidden"),
            CoreError::SessionClosed(_) => (S::CONFLICT, "SessionClosed"),
            CoreError::SessionLive(_) => (S::CONFLICT, "SessionLive"),
            CoreError::NotParticipant(_) => (S::FORBIDDEN, "NotParticipant"),
            CoreError::AlreadyRecorded(_) => (S::CONFLICT, "AlreadyRecorded"),
            CoreError::ScoreOutOfRange(_) => (S::BAD_REQUEST, "ScoreOutOfRange"),
            CoreError::InvalidConfig(_) => (S::BAD_REQUEST, "InvalidConfig"),
            CoreError::Log(_) => (S::INTERNAL_SERVER_ERROR, "LogFailure"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}
