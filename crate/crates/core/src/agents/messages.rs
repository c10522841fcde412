use std::collections::BTreeMap;
use std::fmt;

use tokio::sync::oneshot;

use super::manage::VerifiedSession;
use crate::policy::{AccessReason, FieldId, FieldSet, FieldValue, FileId, HealthRecord, Role, User};
use crate::session::SessionToken;
use crate::store::{AuditEvent, CorrelationId, Secret};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentId {
    UserInterface,
    Authentication,
    ConnectionEstablishment,
    ConnectionManagement,
}

impl AgentId {
    pub const ALL: [AgentId; 4] = [
        AgentId::UserInterface,
        AgentId::Authentication,
        AgentId::ConnectionEstablishment,
        AgentId::ConnectionManagement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::UserInterface => "user_interface",
            AgentId::Authentication => "authentication",
            AgentId::ConnectionEstablishment => "connection_establishment",
            AgentId::ConnectionManagement => "connection_management",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A response stamped with the correlation id of the request that caused it.
#[derive(Debug)]
pub struct Response<T> {
    pub correlation_id: CorrelationId,
    pub body: T,
}

/// One-shot reply path back to the original caller. Travels with the
/// interaction from agent to agent.
pub struct Reply<T> {
    correlation_id: CorrelationId,
    tx: oneshot::Sender<Response<T>>,
}

impl<T> Reply<T> {
    pub(crate) fn channel(correlation_id: CorrelationId) -> (Self, oneshot::Receiver<Response<T>>) {
        let (tx, rx) = oneshot::channel();
        (Reply { correlation_id, tx }, rx)
    }

    pub fn correlation_id(&self) -> &CorrelationId {
        &self.correlation_id
    }

    pub fn send(self, body: T) {
        // The caller may have given up waiting; nothing to do then.
        let _ = self.tx.send(Response {
            correlation_id: self.correlation_id,
            body,
        });
    }
}

impl<T> fmt::Debug for Reply<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reply")
            .field("correlation_id", &self.correlation_id)
            .finish()
    }
}

/// Result of a login as seen from outside. Failures never say why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthResult {
    Success {
        token: SessionToken,
        expires_at: i64,
        user: User,
    },
    Failure,
}

impl AuthResult {
    pub const FAILURE_MESSAGE: &'static str = "invalid credentials";
}

/// Malformed input rejected by the user-interface agent before any other agent sees it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct InvalidInput(pub String);

pub type LoginResult = Result<AuthResult, InvalidInput>;

/// An access operation as submitted by a client, before shape validation.
#[derive(Debug, Clone)]
pub enum RawAccess {
    Read {
        file_id: String,
        /// `None` means every permitted field.
        fields: Option<Vec<String>>,
    },
    Write {
        file_id: String,
        values: Vec<(String, FieldValue)>,
    },
    Audit {
        from: u64,
    },
}

/// A validated access operation.
#[derive(Debug, Clone)]
pub enum AccessOp {
    Read {
        file_id: FileId,
        fields: FieldSet,
    },
    Write {
        file_id: FileId,
        values: BTreeMap<FieldId, FieldValue>,
    },
    Audit {
        from: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AccessGrant {
    /// The record restricted to the granted fields.
    Record(HealthRecord),
    Written {
        file_id: FileId,
        fields: FieldSet,
    },
    Audit(Vec<AuditEvent>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AccessFailure {
    #[error("{0}")]
    Invalid(InvalidInput),
    #[error("authentication required")]
    NotAuthenticated,
    #[error("access denied ({})", .0.as_str())]
    Denied(AccessReason),
    /// A write named fields outside the grant; nothing was written.
    #[error("access denied (ungranted fields: {0})")]
    UngrantedWrite(FieldSet),
    #[error("record not found")]
    NotFound,
    #[error("audit log requires the admin role")]
    AdminOnly,
    #[error("internal error: {0}")]
    Internal(String),
}

pub type AccessResult = Result<AccessGrant, AccessFailure>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegisterError {
    #[error("{0}")]
    Invalid(InvalidInput),
    #[error("username `{0}` is already taken")]
    DuplicateUsername(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Everything that moves between agents.
#[derive(Debug)]
pub enum Payload {
    RegisterUser {
        username: String,
        password: Secret,
        role: Role,
        reply: Reply<Result<User, RegisterError>>,
    },
    LoginRequest {
        username: String,
        password: Secret,
        reply: Reply<LoginResult>,
    },
    /// Authentication succeeded; asks for a connection.
    EstablishSession {
        user: User,
        reply: Reply<LoginResult>,
    },
    /// A new session to be tracked by connection management.
    SessionEstablished {
        session: crate::session::Session,
        user: User,
        reply: Reply<LoginResult>,
    },
    /// A client operation still carrying an unchecked bearer token.
    AccessRequestMsg {
        token: SessionToken,
        op: RawAccess,
        reply: Reply<AccessResult>,
    },
    /// A validated operation waiting for its session check.
    SessionCheck {
        token: SessionToken,
        op: AccessOp,
        reply: Reply<AccessResult>,
    },
    /// The operation after a successful session check.
    AuthorizeAccess {
        session: VerifiedSession,
        op: AccessOp,
        reply: Reply<AccessResult>,
    },
    ExpireSweep {
        /// Defaults to the runtime clock.
        now: Option<i64>,
        reply: Option<Reply<usize>>,
    },
    RevokeSession {
        token: SessionToken,
        reply: Reply<()>,
    },
    CheckSession {
        token: SessionToken,
        now: Option<i64>,
        reply: Reply<Option<crate::policy::UserId>>,
    },
    Shutdown,
}

#[derive(Debug)]
pub struct AgentMessage {
    pub correlation_id: CorrelationId,
    pub payload: Payload,
}

impl AgentMessage {
    pub fn new(correlation_id: CorrelationId, payload: Payload) -> Self {
        AgentMessage {
            correlation_id,
            payload,
        }
    }
}
