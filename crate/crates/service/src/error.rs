use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hamlet_core::Error;

use crate::payload::{ErrorBody, SCHEMA_VERSION};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub pending: Option<Vec<String>>,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
            pending: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::NotFound(_) => Self::not_found(message),
            Error::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", message),
            Error::Pending { pending } => Self {
                status: StatusCode::PRECONDITION_FAILED,
                kind: "quorum_unmet",
                message,
                pending: Some(pending),
            },
            Error::Input(_) | Error::Usage(_) => Self::validation(message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: self.kind.to_string(),
            message: self.message,
            pending: self.pending,
        };
        (self.status, Json(body)).into_response()
    }
}
