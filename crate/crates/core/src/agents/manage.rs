//! Connection management: owns the live session table.

use std::collections::HashMap;
use std::sync::Arc;

use tokio::sync::mpsc::UnboundedReceiver;

use super::messages::{AccessFailure, AgentMessage, Payload};
use super::{AgentId, Mailboxes};
use crate::policy::UserId;
use crate::session::{Session, SessionToken};
use crate::store::{AuditKind, CorrelationId, HealthStore, NewAuditEvent, StoreError};

/// Proof that a bearer token passed the session check. Only this module can
/// construct one, so every path that reaches authorization went through
/// [`ConnectionManager::check`].
#[derive(Debug, Clone)]
pub struct VerifiedSession {
    user_id: UserId,
    token_fingerprint: String,
    expires_at: i64,
}

impl VerifiedSession {
    pub fn user_id(&self) -> &UserId {
        &self.user_id
    }

    pub fn token_fingerprint(&self) -> &str {
        &self.token_fingerprint
    }

    pub fn expires_at(&self) -> i64 {
        self.expires_at
    }
}

pub struct ConnectionManager {
    store: Arc<HealthStore>,
    sessions: HashMap<SessionToken, Session>,
}

impl ConnectionManager {
    /// Loads persisted sessions; expiry governs whether they still work.
    pub fn new(store: Arc<HealthStore>) -> Result<Self, StoreError> {
        let sessions = store
            .load_sessions()?
            .into_iter()
            .map(|s| (s.token.clone(), s))
            .collect();
        Ok(ConnectionManager { store, sessions })
    }

    pub fn insert(&mut self, session: Session) {
        self.sessions.insert(session.token.clone(), session);
    }

    pub fn live_count(&self) -> usize {
        self.sessions.len()
    }

    /// Valid iff the token exists, is not revoked and `now < expires_at`.
    pub fn check(&self, token: &SessionToken, now: i64) -> Option<VerifiedSession> {
        let session = self.sessions.get(token)?;
        session.is_valid_at(now).then(|| VerifiedSession {
            user_id: session.user_id.clone(),
            token_fingerprint: token.fingerprint().to_string(),
            expires_at: session.expires_at,
        })
    }

    /// Marks the session revoked. Unknown or already-revoked tokens are a no-op.
    pub fn revoke(&mut self, token: &SessionToken, correlation_id: &CorrelationId) -> Result<(), StoreError> {
        let Some(session) = self.sessions.get_mut(token) else {
            return Ok(());
        };
        if session.revoked {
            return Ok(());
        }
        let mut updated = session.clone();
        updated.revoked = true;
        self.store.save_session(&updated)?;
        *session = updated;
        let actor = self.store.user(&session.user_id)?.map(|u| u.username);
        self.store.append_audit(
            NewAuditEvent::new(AuditKind::Revoke, correlation_id, actor.as_deref())
                .detail(format!("session={}", token.fingerprint())),
        )?;
        Ok(())
    }

    /// Drops every session with `expires_at <= now` and returns how many went.
    pub fn sweep(&mut self, now: i64, correlation_id: &CorrelationId) -> Result<usize, StoreError> {
        let expired: Vec<SessionToken> = self
            .sessions
            .values()
            .filter(|s| s.is_expired_at(now))
            .map(|s| s.token.clone())
            .collect();
        if expired.is_empty() {
            return Ok(0);
        }
        let mut remaining: Vec<Session> = self
            .sessions
            .values()
            .filter(|s| !s.is_expired_at(now))
            .cloned()
            .collect();
        remaining.sort_by(|a, b| (a.established_at, &a.token).cmp(&(b.established_at, &b.token)));
        self.store.compact_sessions(&remaining)?;
        for token in &expired {
            self.sessions.remove(token);
        }
        let purged: Vec<&str> = expired.iter().map(|t| t.fingerprint()).collect();
        self.store.append_audit(
            NewAuditEvent::new(AuditKind::Sweep, correlation_id, None).detail(format!(
                "purged={} sessions={}",
                expired.len(),
                purged.join(",")
            )),
        )?;
        Ok(expired.len())
    }
}

pub(super) async fn run(mut manager: ConnectionManager, mut inbox: UnboundedReceiver<AgentMessage>, peers: Mailboxes) {
    let clock = Arc::clone(manager.store.clock());
    while let Some(AgentMessage {
        correlation_id,
        payload,
    }) = inbox.recv().await
    {
        peers.stats.record(AgentId::ConnectionManagement);
        match payload {
            Payload::SessionEstablished { session, user, reply } => {
                let (token, expires_at) = (session.token.clone(), session.expires_at);
                manager.insert(session);
                reply.send(Ok(super::AuthResult::Success {
                    token,
                    expires_at,
                    user,
                }));
            }
            Payload::SessionCheck { token, op, reply } => match manager.check(&token, clock.now()) {
                Some(session) => {
                    let msg = AgentMessage::new(correlation_id, Payload::AuthorizeAccess { session, op, reply });
                    peers.send(AgentId::Authentication, msg);
                }
                None => reply.send(Err(AccessFailure::NotAuthenticated)),
            },
            Payload::CheckSession { token, now, reply } => {
                let now = now.unwrap_or_else(|| clock.now());
                reply.send(manager.check(&token, now).map(|s| s.user_id));
            }
            Payload::RevokeSession { token, reply } => {
                if let Err(e) = manager.revoke(&token, &correlation_id) {
                    tracing::error!(%correlation_id, error = %e, "revoking session");
                }
                reply.send(());
            }
            Payload::ExpireSweep { now, reply } => {
                let now = now.unwrap_or_else(|| clock.now());
                let purged = manager.sweep(now, &correlation_id).unwrap_or_else(|e| {
                    tracing::error!(error = %e, "session sweep failed");
                    0
                });
                if let Some(reply) = reply {
                    reply.send(purged);
                }
            }
            Payload::Shutdown => break,
            other => tracing::warn!(agent = %AgentId::ConnectionManagement, ?other, "unexpected message"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::store::{HashParams, StoreOptions};

    fn manager() -> (tempfile::TempDir, ConnectionManager) {
        let dir = tempfile::tempdir().unwrap();
        let store = HealthStore::open_with_clock(
            dir.path(),
            StoreOptions {
                hash: HashParams::fast(),
                sync: false,
            },
            Arc::new(ManualClock::new(0)),
        )
        .unwrap();
        let m = ConnectionManager::new(Arc::new(store)).unwrap();
        (dir, m)
    }

    fn session(m: &mut ConnectionManager, now: i64, ttl: u64) -> Session {
        let s = Session::new(UserId::new("u"), now, ttl);
        m.store.save_session(&s).unwrap();
        m.insert(s.clone());
        s
    }

    #[test]
    fn check_honors_expiry_and_revocation() {
        let (_d, mut m) = manager();
        let s = session(&mut m, 100, 3600);
        assert_eq!(m.check(&s.token, 101).unwrap().user_id(), &UserId::new("u"));
        assert!(m.check(&s.token, s.expires_at).is_none());
        assert!(m.check(&SessionToken::generate(), 101).is_none());

        m.revoke(&s.token, &CorrelationId::new()).unwrap();
        assert!(m.check(&s.token, 101).is_none());
    }

    #[test]
    fn revoke_is_idempotent_and_ignores_unknown_tokens() {
        let (_d, mut m) = manager();
        let s = session(&mut m, 0, 60);
        m.revoke(&s.token, &CorrelationId::new()).unwrap();
        let after_first = m.store.load_sessions().unwrap();
        let audit_after_first = m.store.last_audit_sequence().unwrap();
        m.revoke(&s.token, &CorrelationId::new()).unwrap();
        assert_eq!(m.store.load_sessions().unwrap(), after_first);
        assert_eq!(m.store.last_audit_sequence().unwrap(), audit_after_first);

        m.revoke(&SessionToken::generate(), &CorrelationId::new()).unwrap();
        assert_eq!(m.live_count(), 1);
    }

    #[test]
    fn sweep_removes_only_expired() {
        let (_d, mut m) = manager();
        assert_eq!(m.sweep(0, &CorrelationId::system()).unwrap(), 0);
        session(&mut m, 0, 10);
        session(&mut m, 0, 20);
        let keep = session(&mut m, 0, 100);
        assert_eq!(m.sweep(20, &CorrelationId::system()).unwrap(), 2);
        assert_eq!(m.live_count(), 1);
        assert!(m.check(&keep.token, 20).is_some());
        assert_eq!(m.sweep(20, &CorrelationId::system()).unwrap(), 0);
        assert_eq!(m.store.load_sessions().unwrap(), vec![keep]);
    }

    #[test]
    fn persisted_sessions_survive_restart() {
        let (dir, mut m) = manager();
        let s = session(&mut m, 0, 100);
        let store = HealthStore::open_with_clock(
            dir.path(),
            StoreOptions {
                hash: HashParams::fast(),
                sync: false,
            },
            Arc::new(ManualClock::new(0)),
        )
        .unwrap();
        let again = ConnectionManager::new(Arc::new(store)).unwrap();
        assert!(again.check(&s.token, 50).is_some());
    }
}
