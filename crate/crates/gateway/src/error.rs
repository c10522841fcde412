use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use ibac_core::agents::{AccessFailure, AuthResult, RegisterError, RuntimeError};
use ibac_core::CorrelationId;

/// A failed request as the client sees it.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub correlation_id: CorrelationId,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    correlation_id: &'a CorrelationId,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>, cid: &CorrelationId) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            correlation_id: cid.clone(),
        }
    }

    /// The single 401 shape, whatever went wrong.
    pub fn unauthenticated(cid: &CorrelationId) -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "invalid_credentials",
            AuthResult::FAILURE_MESSAGE,
            cid,
        )
    }

    pub fn invalid(message: impl Into<String>, cid: &CorrelationId) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message, cid)
    }

    pub fn not_found(cid: &CorrelationId) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", "not found", cid)
    }

    pub fn runtime(err: RuntimeError, cid: &CorrelationId) -> Self {
        let code = match err {
            RuntimeError::Overloaded => "overloaded",
            RuntimeError::Unavailable(_) => "unavailable",
        };
        Self::new(StatusCode::SERVICE_UNAVAILABLE, code, err.to_string(), cid)
    }

    pub fn access(err: AccessFailure, cid: &CorrelationId) -> Self {
        match err {
            AccessFailure::Invalid(e) => Self::invalid(e.0, cid),
            AccessFailure::NotAuthenticated => Self::unauthenticated(cid),
            AccessFailure::Denied(_) | AccessFailure::UngrantedWrite(_) | AccessFailure::AdminOnly => {
                Self::new(StatusCode::FORBIDDEN, "access_denied", err.to_string(), cid)
            }
            AccessFailure::NotFound => Self::new(StatusCode::NOT_FOUND, "record_not_found", err.to_string(), cid),
            AccessFailure::Internal(_) => Self::internal(cid),
        }
    }

    pub fn register(err: RegisterError, cid: &CorrelationId) -> Self {
        match err {
            RegisterError::Invalid(e) => Self::invalid(e.0, cid),
            RegisterError::DuplicateUsername(_) => {
                Self::new(StatusCode::CONFLICT, "duplicate_username", err.to_string(), cid)
            }
            RegisterError::Internal(_) => Self::internal(cid),
        }
    }

    pub fn internal(cid: &CorrelationId) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error", cid)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            code: self.code,
            message: &self.message,
            correlation_id: &self.correlation_id,
        };
        (self.status, Json(body)).into_response()
    }
}
