use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::FieldSet;

/// Identifier tying every hop and audit event of one user interaction together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrelationId(String);

impl CorrelationId {
    pub fn new() -> Self {
        CorrelationId(uuid::Uuid::new_v4().to_string())
    }

    /// Accepts caller-chosen ids of 1..=64 ASCII alphanumerics, `-` or `_`.
    pub fn parse(raw: &str) -> Option<Self> {
        let ok = !raw.is_empty()
            && raw.len() <= 64
            && raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        ok.then(|| CorrelationId(raw.to_string()))
    }

    /// Marker for events not tied to a request, such as background sweeps.
    pub fn system() -> Self {
        CorrelationId("-".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for CorrelationId {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Register,
    LoginSuccess,
    LoginFailure,
    ConnectEstablish,
    ConnectRefuse,
    AccessGranted,
    AccessDenied,
    Revoke,
    Sweep,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::Register => "register",
            AuditKind::LoginSuccess => "login_success",
            AuditKind::LoginFailure => "login_failure",
            AuditKind::ConnectEstablish => "connect_establish",
            AuditKind::ConnectRefuse => "connect_refuse",
            AuditKind::AccessGranted => "access_granted",
            AuditKind::AccessDenied => "access_denied",
            AuditKind::Revoke => "revoke",
            AuditKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub sequence: u64,
    pub timestamp: i64,
    pub correlation_id: CorrelationId,
    /// Username, or `-` when no identity is known.
    pub actor_username: String,
    pub event_kind: AuditKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_fields: Option<FieldSet>,
}

/// The caller-supplied part of an audit event; the store assigns sequence and timestamp.
#[derive(Debug, Clone)]
pub struct NewAuditEvent {
    pub correlation_id: CorrelationId,
    pub actor_username: String,
    pub event_kind: AuditKind,
    pub detail: String,
    pub decision_fields: Option<FieldSet>,
}

impl NewAuditEvent {
    pub fn new(kind: AuditKind, correlation_id: &CorrelationId, actor: Option<&str>) -> Self {
        NewAuditEvent {
            correlation_id: correlation_id.clone(),
            actor_username: actor.unwrap_or("-").to_string(),
            event_kind: kind,
            detail: String::new(),
            decision_fields: None,
        }
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn fields(mut self, fields: FieldSet) -> Self {
        self.decision_fields = Some(fields);
        self
    }
}

impl fmt::Display for AuditEvent {
    /// One stable, tab-separated line per event.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.sequence, self.timestamp, self.correlation_id, self.actor_username, self.event_kind, self.detail
        )?;
        if let Some(fields) = &self.decision_fields {
            write!(f, "\tfields={fields}")?;
        }
        Ok(())
    }
}
