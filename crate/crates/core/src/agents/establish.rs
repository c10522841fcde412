//! Connection establishment: runs the connection gate and mints sessions.

use std::sync::Arc;
use std::time::Duration;

use tokio::sync::mpsc::UnboundedReceiver;

use super::messages::{AgentMessage, AuthResult, Payload};
use super::{AgentId, Mailboxes};
use crate::policy::{evaluate_connection, ConnectReason, User};
use crate::session::Session;
use crate::store::{AuditKind, CorrelationId, HealthStore, NewAuditEvent, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum EstablishError {
    #[error("connection refused ({0:?})")]
    ConnectionRefused(ConnectReason),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct ConnectionEstablisher {
    store: Arc<HealthStore>,
    ttl_seconds: u64,
}

impl ConnectionEstablisher {
    pub fn new(store: Arc<HealthStore>, ttl_seconds: u64) -> Self {
        ConnectionEstablisher { store, ttl_seconds }
    }

    /// Gates on the user's role having at least one policy tuple, then
    /// creates and persists a session. Either outcome is audited.
    pub fn establish(&self, user: &User, correlation_id: &CorrelationId) -> Result<Session, EstablishError> {
        let users = self.store.users()?;
        let policies = self.store.policy_table()?;
        let decision = evaluate_connection(&user.username, &users, &policies);
        if !decision.is_established() {
            self.store.append_audit(
                NewAuditEvent::new(AuditKind::ConnectRefuse, correlation_id, Some(&user.username)).detail(format!(
                    "reason={:?} role={}",
                    decision.reason(),
                    user.role
                )),
            )?;
            return Err(EstablishError::ConnectionRefused(decision.reason()));
        }

        let session = Session::new(user.user_id.clone(), self.store.clock().now(), self.ttl_seconds);
        self.store.save_session(&session)?;
        self.store.append_audit(
            NewAuditEvent::new(AuditKind::ConnectEstablish, correlation_id, Some(&user.username)).detail(format!(
                "session={} expires_at={}",
                session.token.fingerprint(),
                session.expires_at
            )),
        )?;
        Ok(session)
    }
}

pub(super) async fn run(
    establisher: ConnectionEstablisher,
    mut inbox: UnboundedReceiver<AgentMessage>,
    peers: Mailboxes,
    fail_delay: Duration,
) {
    while let Some(AgentMessage {
        correlation_id,
        payload,
    }) = inbox.recv().await
    {
        peers.stats.record(AgentId::ConnectionEstablishment);
        match payload {
            Payload::EstablishSession { user, reply } => match establisher.establish(&user, &correlation_id) {
                Ok(session) => {
                    let msg = AgentMessage::new(correlation_id, Payload::SessionEstablished { session, user, reply });
                    peers.send(AgentId::ConnectionManagement, msg);
                }
                Err(e) => {
                    if let EstablishError::Store(err) = &e {
                        tracing::error!(%correlation_id, error = %err, "establishing session");
                    }
                    super::reply_after(fail_delay, reply, Ok(AuthResult::Failure));
                }
            },
            Payload::Shutdown => break,
            other => tracing::warn!(agent = %AgentId::ConnectionEstablishment, ?other, "unexpected message"),
        }
    }
}
