//! The JSON error envelope shared by every endpoint.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use colloquy_core::analytics::AnalyticsError;
use colloquy_core::dialogue::DialogueError;
use colloquy_core::domain::ValidationError;
use colloquy_core::simulator::SimulationError;
use colloquy_core::StoreError;
use colloquy_topics::jobs::JobError;
use colloquy_topics::relevance::LambdaOutOfRange;
use colloquy_topics::ModelError;
use serde::{Deserialize, Serialize};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.to_owned(), message: message.into(), field_path: None } }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        let path = path.into();
        self.body.field_path = (!path.is_empty()).then_some(path);
        self
    }

    pub fn at_if_empty(self, path: &str) -> Self {
        if self.body.field_path.is_some() {
            self
        } else {
            self.at(path)
        }
    }

    pub fn code(&self) -> &str {
        &self.body.code
    }

    pub fn invalid_body(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_body", message)
    }

    pub fn validation(path: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message).at(path)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token")
    }

    pub fn state_violation(expected: &str, found: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "state_violation", format!("session is in state {found}, expected {expected}"))
    }

    pub fn session_expired() -> Self {
        Self::new(StatusCode::GONE, "session_expired", "this session has expired; start a new one")
    }

    pub fn no_active_interview(topic: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::CONFLICT, "no_active_interview", format!("topic {topic} has no active interview"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.body.code, self.body.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = %self.body.code, "{}", self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}

fn validation_error(e: ValidationError) -> ApiError {
    ApiError::validation(&e.path, e.message)
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        validation_error(e)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound { .. } => StatusCode::NOT_FOUND,
            StoreError::DuplicateName { .. } | StoreError::Conflict(_) => StatusCode::CONFLICT,
            StoreError::Validation(v) => return validation_error(v.clone()),
            StoreError::Mismatch(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        match e {
            DialogueError::WrongState { expected, found } => ApiError::state_violation(expected, found),
            DialogueError::InterviewMismatch { .. } => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            DialogueError::Survey(message) => ApiError::validation("answers", message),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        ApiError::new(StatusCode::CONFLICT, "incomplete_session", e.to_string())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        ApiError::validation("", e.to_string())
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::UnknownRun(_) | JobError::UnknownTopic(_) => ApiError::not_found(e.to_string()),
            JobError::NotFinished(_) => ApiError::new(StatusCode::CONFLICT, "run_not_finished", e.to_string()),
            JobError::Model(m) => m.into(),
            JobError::Io(m) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", m),
        }
    }
}

impl From<SimulationError> for ApiError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Store(s) => s.into(),
            SimulationError::Model(v) => {
                let path = if v.path.is_empty() { "model".to_owned() } else { format!("model.{}", v.path) };
                ApiError::validation(&path, v.message)
            }
            SimulationError::NoSessions => ApiError::validation("sessions", e.to_string()),
        }
    }
}

impl From<LambdaOutOfRange> for ApiError {
    fn from(e: LambdaOutOfRange) -> Self {
        ApiError::validation("lambda", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_errors_keep_their_codes() {
        let e: ApiError = StoreError::Conflict("x".into()).into();
        assert_eq!((e.status, e.code()), (StatusCode::CONFLICT, "conflict"));
        let e: ApiError = StoreError::Validation(ValidationError::new("main_questions[0].text", "empty")).into();
        assert_eq!(e.body.field_path.as_deref(), Some("main_questions[0].text"));
        let e: ApiError = StoreError::NotFound { kind: "topic", id: "9".into() }.into();
        assert_eq!(e.status, StatusCode::NOT_FOUND);
    }

    #[test]
    fn empty_path_is_omitted() {
        let body = serde_json::to_value(ApiError::validation("", "bad").body).unwrap();
        assert!(body.get("field_path").is_none());
    }
}
