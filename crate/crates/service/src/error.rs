use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use reportrank_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Core(e) => match e {
                CoreError::NotFound(_) | CoreError::UnknownRequirement(_) => StatusCode::NOT_FOUND,
                CoreError::InvalidInput(_) => StatusCode::BAD_REQUEST,
                CoreError::Parse { .. } | CoreError::Schema(_) => StatusCode::UNPROCESSABLE_ENTITY,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ServiceError::Config(_) | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Unprocessable(_) => "unprocessable",
            ServiceError::Config(_) => "config",
            ServiceError::Core(CoreError::Parse { .. }) => "parse",
            ServiceError::Core(e) => e.category().as_str(),
            ServiceError::Io(_) => "io",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let mut body = json!({"error": {"kind": self.kind(), "message": self.to_string()}});
        if let ServiceError::Core(CoreError::Parse { offset, .. }) = &self {
            body["error"]["offset"] = json!(offset);
        }
        (status, Json(body)).into_response()
    }
}
