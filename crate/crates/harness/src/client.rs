use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use reqwest::header::AUTHORIZATION;
use reqwest::{Method, RequestBuilder};
use serde_json::{json, Map, Value};

use ibac_core::policy::{FieldId, FieldValue, FileId};
use ibac_gateway::CORRELATION_HEADER;

use crate::HarnessError;

/// Status, body and correlation id of one exchange.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub status: u16,
    pub body: Value,
    pub correlation_id: String,
}

impl Exchange {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Field names present under `values`, if any.
    pub fn value_keys(&self) -> Vec<String> {
        self.body
            .get("values")
            .and_then(Value::as_object)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }
}

/// How a request authenticates.
#[derive(Debug, Clone, Copy)]
pub enum Auth<'a> {
    None,
    Bearer(&'a str),
    /// The `Authorization` header verbatim.
    Raw(&'a str),
}

#[derive(Debug, Clone)]
pub struct Login {
    pub username: String,
    pub token: String,
    pub expires_at: i64,
}

pub fn unix_now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl Login {
    /// At least one whole second of validity left on the local clock.
    pub fn is_fresh(&self) -> bool {
        unix_now() + 1 < self.expires_at
    }
}

/// A gateway client that stamps every request with a deterministic
/// correlation id `<prefix>-<n>`.
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
    prefix: String,
    counter: AtomicU64,
}

impl ApiClient {
    pub fn new(base_url: &str, prefix: &str) -> Self {
        ApiClient {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
            prefix: prefix.to_string(),
            counter: AtomicU64::new(0),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn next_cid(&self) -> String {
        format!("{}-{}", self.prefix, self.counter.fetch_add(1, Ordering::Relaxed))
    }

    fn request(&self, method: Method, path: &str, auth: Auth<'_>, cid: &str) -> RequestBuilder {
        let req = self
            .http
            .request(method, format!("{}{}", self.base, path))
            .header(CORRELATION_HEADER, cid);
        match auth {
            Auth::None => req,
            Auth::Bearer(t) => req.bearer_auth(t),
            Auth::Raw(h) => req.header(AUTHORIZATION, h),
        }
    }

    async fn send(&self, req: RequestBuilder, cid: String) -> Result<Exchange, HarnessError> {
        let resp = req
            .send()
            .await
            .map_err(|e| HarnessError::TargetUnreachable(format!("{}: {e}", self.base)))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| HarnessError::TargetUnreachable(format!("{}: {e}", self.base)))?;
        let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        Ok(Exchange {
            status,
            body,
            correlation_id: cid,
        })
    }

    pub async fn call(
        &self,
        method: Method,
        path: &str,
        auth: Auth<'_>,
        body: Option<Value>,
    ) -> Result<Exchange, HarnessError> {
        let cid = self.next_cid();
        let mut req = self.request(method, path, auth, &cid);
        if let Some(body) = body {
            req = req.json(&body);
        }
        self.send(req, cid).await
    }

    pub async fn health(&self) -> Result<(), HarnessError> {
        let ex = self.call(Method::GET, "/api/health", Auth::None, None).await?;
        if ex.status == 200 {
            Ok(())
        } else {
            Err(HarnessError::TargetUnreachable(format!(
                "{} health returned {}",
                self.base, ex.status
            )))
        }
    }

    pub async fn login(&self, username: &str, password: &str) -> Result<Exchange, HarnessError> {
        let body = json!({ "username": username, "password": password });
        self.call(Method::POST, "/api/login", Auth::None, Some(body)).await
    }

    /// Logs in and expects success.
    pub async fn session(&self, username: &str, password: &str) -> Result<Login, HarnessError> {
        let ex = self.login(username, password).await?;
        let token = ex.body["token"].as_str();
        let expires_at = ex.body["expires_at"].as_i64();
        match (ex.status, token, expires_at) {
            (200, Some(token), Some(expires_at)) => Ok(Login {
                username: username.to_string(),
                token: token.to_string(),
                expires_at,
            }),
            _ => Err(HarnessError::Fixture(format!(
                "fixture user `{username}` cannot log in (status {})",
                ex.status
            ))),
        }
    }

    /// Replaces `login` with a new session when it is about to expire.
    pub async fn refresh(&self, login: &mut Login, password: &str) -> Result<(), HarnessError> {
        if !login.is_fresh() {
            *login = self.session(&login.username, password).await?;
        }
        Ok(())
    }

    pub async fn register(&self, username: &str, password: &str, role: &str) -> Result<Exchange, HarnessError> {
        let body = json!({ "username": username, "password": password, "role": role });
        self.call(Method::POST, "/api/register", Auth::None, Some(body)).await
    }

    /// `fields == None` omits the query parameter, asking for every field.
    pub async fn read(
        &self,
        auth: Auth<'_>,
        file: &FileId,
        fields: Option<&[FieldId]>,
    ) -> Result<Exchange, HarnessError> {
        let path = match fields {
            None => format!("/api/records/{file}"),
            Some(fs) => {
                let list: Vec<&str> = fs.iter().map(|f| f.name()).collect();
                format!("/api/records/{file}?fields={}", list.join(","))
            }
        };
        self.call(Method::GET, &path, auth, None).await
    }

    pub async fn write(
        &self,
        auth: Auth<'_>,
        file: &FileId,
        values: impl IntoIterator<Item = (FieldId, FieldValue)>,
    ) -> Result<Exchange, HarnessError> {
        let mut map = Map::new();
        for (f, v) in values {
            map.insert(f.name().to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        }
        let body = json!({ "values": map });
        self.call(Method::PUT, &format!("/api/records/{file}"), auth, Some(body))
            .await
    }

    pub async fn logout(&self, auth: Auth<'_>) -> Result<Exchange, HarnessError> {
        self.call(Method::POST, "/api/logout", auth, None).await
    }

    pub async fn audit(&self, auth: Auth<'_>, from: u64) -> Result<Exchange, HarnessError> {
        self.call(Method::GET, &format!("/api/audit?from={from}"), auth, None)
            .await
    }
}
