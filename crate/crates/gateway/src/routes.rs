use std::collections::BTreeMap;
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use serde::{Deserialize, Serialize};

use ibac_core::agents::{AccessGrant, AuthResult, RawAccess};
use ibac_core::policy::{FieldId, FieldValue, FileId, Role};
use ibac_core::store::{AuditEvent, Secret};
use ibac_core::{CorrelationId, RuntimeHandle, SessionToken};

use crate::error::ApiError;

pub const CORRELATION_HEADER: &str = "x-correlation-id";

type ApiResult<T> = Result<T, ApiError>;

pub fn router(handle: RuntimeHandle) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/records/{file_id}", get(read_record).put(write_record))
        .route("/api/audit", get(audit))
        .route("/api/health", get(health))
        .fallback(fallback)
        .with_state(handle)
        .layer(middleware::from_fn(correlate))
}

async fn correlate(mut req: Request, next: Next) -> Response {
    let cid = req
        .headers()
        .get(CORRELATION_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(CorrelationId::parse)
        .unwrap_or_default();
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    req.extensions_mut().insert(cid.clone());
    let started = Instant::now();
    let mut resp = next.run(req).await;
    tracing::info!(
        correlation_id = %cid,
        %method,
        path,
        status = resp.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    if let Ok(v) = HeaderValue::from_str(&cid.to_string()) {
        resp.headers_mut().insert(CORRELATION_HEADER, v);
    }
    resp
}

fn bearer(headers: &HeaderMap) -> Option<SessionToken> {
    let raw = headers.get(axum::http::header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = raw.trim().split_once(' ')?;
    let token = token.trim();
    (scheme.eq_ignore_ascii_case("bearer") && !token.is_empty()).then(|| SessionToken::from_raw(token))
}

fn require_bearer(headers: &HeaderMap, cid: &CorrelationId) -> ApiResult<SessionToken> {
    bearer(headers).ok_or_else(|| ApiError::unauthenticated(cid))
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>, cid: &CorrelationId) -> ApiResult<T> {
    body.map(|Json(v)| v).map_err(|e| ApiError::invalid(e.body_text(), cid))
}

#[derive(Deserialize)]
struct RegisterBody {
    username: String,
    password: String,
    role: String,
}

#[derive(Serialize)]
struct RegisterReply {
    user_id: String,
}

async fn register(
    State(rt): State<RuntimeHandle>,
    Extension(cid): Extension<CorrelationId>,
    body: Result<Json<RegisterBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RegisterReply>)> {
    let body = json_body(body, &cid)?;
    let role: Role = body
        .role
        .parse()
        .map_err(|e: ibac_core::policy::PolicyError| ApiError::invalid(e.to_string(), &cid))?;
    let resp = rt
        .register(cid.clone(), &body.username, Secret::new(body.password), role)
        .await
        .map_err(|e| ApiError::runtime(e, &cid))?;
    let user = resp.body.map_err(|e| ApiError::register(e, &cid))?;
    Ok((
        StatusCode::CREATED,
        Json(RegisterReply {
            user_id: user.user_id.as_str().to_string(),
        }),
    ))
}

#[derive(Deserialize)]
struct LoginBody {
    username: String,
    password: String,
}

#[derive(Serialize)]
struct LoginReply {
    token: String,
    expires_at: i64,
    username: String,
    role: Role,
}

async fn login(
    State(rt): State<RuntimeHandle>,
    Extension(cid): Extension<CorrelationId>,
    body: Result<Json<LoginBody>, JsonRejection>,
) -> ApiResult<Json<LoginReply>> {
    let body = json_body(body, &cid)?;
    let resp = rt
        .login(cid.clone(), &body.username, Secret::new(body.password))
        .await
        .map_err(|e| ApiError::runtime(e, &cid))?;
    match resp.body.map_err(|e| ApiError::invalid(e.0, &cid))? {
        AuthResult::Success {
            token,
            expires_at,
            user,
        } => Ok(Json(LoginReply {
            token: token.as_str().to_string(),
            expires_at,
            username: user.username,
            role: user.role,
        })),
        AuthResult::Failure => Err(ApiError::unauthenticated(&cid)),
    }
}

async fn logout(
    State(rt): State<RuntimeHandle>,
    Extension(cid): Extension<CorrelationId>,
    headers: HeaderMap,
) -> ApiResult<StatusCode> {
    let token = require_bearer(&headers, &cid)?;
    rt.logout(cid.clone(), token)
        .await
        .map_err(|e| ApiError::runtime(e, &cid))?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct RecordQuery {
    fields: Option<String>,
}

#[derive(Serialize)]
struct RecordReply {
    file_id: FileId,
    values: BTreeMap<FieldId, FieldValue>,
}

async fn read_record(
    State(rt): State<RuntimeHandle>,
    Extension(cid): Extension<CorrelationId>,
    Path(file_id): Path<String>,
    headers: HeaderMap,
    query: Result<Query<RecordQuery>, QueryRejection>,
) -> ApiResult<Json<RecordReply>> {
    let Query(query) = query.map_err(|e| ApiError::invalid(e.body_text(), &cid))?;
    let token = require_bearer(&headers, &cid)?;
    let fields = query.fields.map(|list| list.split(',').map(str::to_string).collect());
    let resp = rt
        .access(cid.clone(), token, RawAccess::Read { file_id, fields })
        .await
        .map_err(|e| ApiError::runtime(e, &cid))?;
    match resp.body.map_err(|e| ApiError::access(e, &cid))? {
        AccessGrant::Record(record) => Ok(Json(RecordReply {
            file_id: record.file_id,
            values: record.values,
        })),
        _ => Err(ApiError::internal(&cid)),
    }
}

#[derive(Deserialize)]
struct WriteBody {
    values: BTreeMap<String, FieldValue>,
}

#[derive(Serialize)]
struct WriteReply {
    file_id: FileId,
    written: Vec<FieldId>,
}

async fn write_record(
    State(rt): State<RuntimeHandle>,
    Extension(cid): Extension<CorrelationId>,
    Path(file_id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<WriteBody>, JsonRejection>,
) -> ApiResult<Json<WriteReply>> {
    let token = require_bearer(&headers, &cid)?;
    let body = json_body(body, &cid)?;
    let op = RawAccess::Write {
        file_id,
        values: body.values.into_iter().collect(),
    };
    let resp = rt
        .access(cid.clone(), token, op)
        .await
        .map_err(|e| ApiError::runtime(e, &cid))?;
    match resp.body.map_err(|e| ApiError::access(e, &cid))? {
        AccessGrant::Written { file_id, fields } => Ok(Json(WriteReply {
            file_id,
            written: fields.iter().collect(),
        })),
        _ => Err(ApiError::internal(&cid)),
    }
}

#[derive(Deserialize)]
struct AuditQuery {
    from: Option<u64>,
}

async fn audit(
    State(rt): State<RuntimeHandle>,
    Extension(cid): Extension<CorrelationId>,
    headers: HeaderMap,
    query: Result<Query<AuditQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<AuditEvent>>> {
    let Query(query) = query.map_err(|e| ApiError::invalid(e.body_text(), &cid))?;
    let token = require_bearer(&headers, &cid)?;
    let from = query.from.unwrap_or(1);
    let resp = rt
        .access(cid.clone(), token, RawAccess::Audit { from })
        .await
        .map_err(|e| ApiError::runtime(e, &cid))?;
    match resp.body.map_err(|e| ApiError::access(e, &cid))? {
        AccessGrant::Audit(events) => Ok(Json(events)),
        _ => Err(ApiError::internal(&cid)),
    }
}

async fn health() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn fallback(Extension(cid): Extension<CorrelationId>) -> ApiError {
    ApiError::not_found(&cid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn headers(value: &str) -> HeaderMap {
        let mut h = HeaderMap::new();
        h.insert(axum::http::header::AUTHORIZATION, HeaderValue::from_str(value).unwrap());
        h
    }

    #[test]
    fn bearer_parsing() {
        assert_eq!(bearer(&headers("Bearer abc")).unwrap().as_str(), "abc");
        assert_eq!(bearer(&headers("bearer   abc ")).unwrap().as_str(), "abc");
        assert!(bearer(&headers("Basic abc")).is_none());
        assert!(bearer(&headers("Bearer ")).is_none());
        assert!(bearer(&headers("abc")).is_none());
        assert!(bearer(&HeaderMap::new()).is_none());
    }
}
