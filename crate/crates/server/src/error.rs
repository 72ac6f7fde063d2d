use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use forge_core::dialogue::DialogueError;
use forge_core::gateway::GatewayError;
use forge_core::persona::PersonaError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Validation(String),
    #[error("project `{0}` already has an active pipeline job")]
    ConflictActiveJob(String),
    #[error("revision conflict: expected {expected}, current {current}")]
    RevisionConflict { expected: u64, current: u64 },
    #[error("span was captured at revision {captured}, draft is at revision {current}")]
    StaleSpan { captured: u64, current: u64 },
    #[error("{0}")]
    Conflict(String),
    #[error("project `{0}` has no finished pipeline run")]
    PipelineNotDone(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("model provider error: {0}")]
    Gateway(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::ConflictActiveJob(_)
            | ApiError::RevisionConflict { .. }
            | ApiError::StaleSpan { .. }
            | ApiError::Conflict(_)
            | ApiError::PipelineNotDone(_) => StatusCode::CONFLICT,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Gateway(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "NOT_FOUND",
            ApiError::BadRequest(_) => "BAD_REQUEST",
            ApiError::Validation(_) => "VALIDATION",
            ApiError::ConflictActiveJob(_) => "CONFLICT_ACTIVE_JOB",
            ApiError::RevisionConflict { .. } => "REVISION_CONFLICT",
            ApiError::StaleSpan { .. } => "STALE_SPAN",
            ApiError::Conflict(_) => "CONFLICT",
            ApiError::PipelineNotDone(_) => "PIPELINE_NOT_DONE",
            ApiError::Unauthorized => "UNAUTHORIZED",
            ApiError::Gateway(_) => "GATEWAY",
            ApiError::Internal(_) => "INTERNAL",
        }
    }

    /// Whether the client can fix the problem by refetching and retrying.
    pub fn retryable(&self) -> bool {
        matches!(self, ApiError::RevisionConflict { .. } | ApiError::StaleSpan { .. } | ApiError::Conflict(_))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            tracing::error!(error = %self, "request failed");
        }
        let body = json!({
            "error": { "code": self.code(), "message": self.to_string(), "retryable": self.retryable() }
        });
        (self.status(), Json(body)).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError::Gateway(e.to_string())
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        match e {
            DialogueError::Gateway(g) => g.into(),
            DialogueError::StaleSpan { captured, current } => ApiError::StaleSpan { captured, current },
            DialogueError::InvalidSpan { .. } | DialogueError::InvalidRequest(_) => ApiError::Validation(e.to_string()),
            DialogueError::EmptyIndex | DialogueError::InvalidIndex(_) => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<PersonaError> for ApiError {
    fn from(e: PersonaError) -> Self {
        match e {
            PersonaError::Gateway(g) => g.into(),
            PersonaError::UnknownDimension(_) => ApiError::NotFound(e.to_string()),
            other => ApiError::Validation(other.to_string()),
        }
    }
}
