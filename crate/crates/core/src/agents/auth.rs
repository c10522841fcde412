//! Authentication: registers users, verifies credentials, and grants
//! file access to holders of a checked session.

use std::sync::Arc;
use std::time::Duration;

use tokio::sync::mpsc::UnboundedReceiver;

use super::manage::VerifiedSession;
use super::messages::{
    AccessFailure, AccessGrant, AccessOp, AccessResult, AgentMessage, AuthResult, InvalidInput, Payload, RegisterError,
};
use super::{AgentId, Mailboxes};
use crate::policy::{
    evaluate_access, filter_record, AccessDecision, AccessMode, AccessRequest, FieldSet, FileId, Role, User,
};
use crate::store::{AuditKind, CorrelationId, CredentialCheck, HealthStore, NewAuditEvent, Secret, StoreError};

/// How file-access requests are decided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessPolicyMode {
    /// Grant whatever is asked. Harness baseline only.
    pub unsafe_allow_all: bool,
    /// Patients may read their own record without a policy tuple.
    pub patient_owner_read: bool,
}

pub struct Authenticator {
    store: Arc<HealthStore>,
    mode: AccessPolicyMode,
}

impl Authenticator {
    pub fn new(store: Arc<HealthStore>, mode: AccessPolicyMode) -> Self {
        Authenticator { store, mode }
    }

    pub fn register(
        &self,
        username: &str,
        password: &Secret,
        role: Role,
        correlation_id: &CorrelationId,
    ) -> Result<User, RegisterError> {
        let user = User::new(username, role).map_err(|e| RegisterError::Invalid(InvalidInput(e.to_string())))?;
        match self.store.put_user(user, password, correlation_id) {
            Ok(user) => Ok(user),
            Err(StoreError::DuplicateUsername(name)) => Err(RegisterError::DuplicateUsername(name)),
            Err(e) => Err(RegisterError::Internal(e.to_string())),
        }
    }

    /// Verifies a password and audits the outcome with its true reason.
    pub fn authenticate(
        &self,
        username: &str,
        password: &Secret,
        correlation_id: &CorrelationId,
    ) -> Result<Option<User>, StoreError> {
        let username = username.trim();
        let (event, user) = match self.store.verify_credentials(username, password)? {
            CredentialCheck::Verified(user) => (
                NewAuditEvent::new(AuditKind::LoginSuccess, correlation_id, Some(&user.username))
                    .detail(format!("role={}", user.role)),
                Some(user),
            ),
            CredentialCheck::WrongPassword => (
                NewAuditEvent::new(AuditKind::LoginFailure, correlation_id, Some(username))
                    .detail("reason=wrong_password"),
                None,
            ),
            CredentialCheck::UnknownUser => (
                NewAuditEvent::new(AuditKind::LoginFailure, correlation_id, None)
                    .detail(format!("reason=unknown_user attempted={username:?}")),
                None,
            ),
        };
        self.store.append_audit(event)?;
        Ok(user)
    }

    fn decide(&self, user: &User, request: &AccessRequest, owner_of_target: bool) -> AccessDecision {
        if self.mode.unsafe_allow_all {
            return AccessDecision::grant(request.requested_fields.clone());
        }
        if self.mode.patient_owner_read
            && user.role == Role::Patient
            && request.mode == AccessMode::Read
            && owner_of_target
        {
            return AccessDecision::grant(request.requested_fields.clone());
        }
        let policies = match self.store.policy_table() {
            Ok(p) => p,
            Err(e) => {
                tracing::error!(error = %e, "loading policy table; denying");
                return AccessDecision::deny(crate::policy::AccessReason::NoMatchingTuple);
            }
        };
        evaluate_access(request, user, &policies)
    }

    #[allow(clippy::too_many_arguments)]
    fn audit_decision(
        &self,
        user: &User,
        session: &VerifiedSession,
        mode: AccessMode,
        file_id: &FileId,
        decision: &AccessDecision,
        extra: &str,
        correlation_id: &CorrelationId,
    ) -> Result<(), StoreError> {
        let kind = if decision.is_granted() && extra.is_empty() {
            AuditKind::AccessGranted
        } else {
            AuditKind::AccessDenied
        };
        let mut detail = format!(
            "mode={mode} file={file_id} reason={} session={}",
            decision.reason().as_str(),
            session.token_fingerprint()
        );
        if !extra.is_empty() {
            detail.push(' ');
            detail.push_str(extra);
        }
        let fields = if kind == AuditKind::AccessGranted {
            decision.granted_fields().clone()
        } else {
            FieldSet::empty()
        };
        self.store.append_audit(
            NewAuditEvent::new(kind, correlation_id, Some(&user.username))
                .detail(detail)
                .fields(fields),
        )?;
        Ok(())
    }

    /// Evaluates an operation for the session's user. Every read or write
    /// decision is audited exactly once, before any data is touched.
    pub fn authorize(&self, session: &VerifiedSession, op: AccessOp, correlation_id: &CorrelationId) -> AccessResult {
        let internal = |e: StoreError| AccessFailure::Internal(e.to_string());
        let user = self
            .store
            .user(session.user_id())
            .map_err(internal)?
            .ok_or(AccessFailure::NotAuthenticated)?;

        match op {
            AccessOp::Read { file_id, fields } => {
                let record = self.store.get_record(&file_id);
                let owns = record.as_ref().is_some_and(|r| r.owner_user_id == user.user_id);
                let request = AccessRequest {
                    user_id: user.user_id.clone(),
                    mode: AccessMode::Read,
                    file_id: file_id.clone(),
                    requested_fields: fields,
                };
                let decision = self.decide(&user, &request, owns);
                self.audit_decision(
                    &user,
                    session,
                    AccessMode::Read,
                    &file_id,
                    &decision,
                    "",
                    correlation_id,
                )
                .map_err(internal)?;
                if !decision.is_granted() {
                    return Err(AccessFailure::Denied(decision.reason()));
                }
                let record = record.ok_or(AccessFailure::NotFound)?;
                Ok(AccessGrant::Record(filter_record(&record, decision.granted_fields())))
            }
            AccessOp::Write { file_id, values } => {
                let requested = FieldSet::of(values.keys().copied());
                let request = AccessRequest {
                    user_id: user.user_id.clone(),
                    mode: AccessMode::Write,
                    file_id: file_id.clone(),
                    requested_fields: requested.clone(),
                };
                let decision = self.decide(&user, &request, false);
                let ungranted = FieldSet::of(requested.iter().filter(|f| !decision.granted_fields().contains(*f)));
                let extra = if decision.is_granted() && !ungranted.is_empty() {
                    format!("strict_write ungranted={ungranted}")
                } else {
                    String::new()
                };
                self.audit_decision(
                    &user,
                    session,
                    AccessMode::Write,
                    &file_id,
                    &decision,
                    &extra,
                    correlation_id,
                )
                .map_err(internal)?;
                if !decision.is_granted() {
                    return Err(AccessFailure::Denied(decision.reason()));
                }
                if !ungranted.is_empty() {
                    return Err(AccessFailure::UngrantedWrite(ungranted));
                }
                let mut record = self.store.get_record(&file_id).ok_or(AccessFailure::NotFound)?;
                record.values.extend(values);
                self.store.put_record(record).map_err(internal)?;
                Ok(AccessGrant::Written {
                    file_id,
                    fields: requested,
                })
            }
            AccessOp::Audit { from } => {
                if user.role != Role::Admin {
                    return Err(AccessFailure::AdminOnly);
                }
                self.store.read_audit(from).map(AccessGrant::Audit).map_err(internal)
            }
        }
    }
}

pub(super) async fn run(
    auth: Arc<Authenticator>,
    mut inbox: UnboundedReceiver<AgentMessage>,
    peers: Mailboxes,
    fail_delay: Duration,
) {
    while let Some(AgentMessage {
        correlation_id,
        payload,
    }) = inbox.recv().await
    {
        peers.stats.record(AgentId::Authentication);
        match payload {
            Payload::RegisterUser {
                username,
                password,
                role,
                reply,
            } => {
                let a = Arc::clone(&auth);
                let cid = correlation_id.clone();
                let result = tokio::task::spawn_blocking(move || a.register(&username, &password, role, &cid))
                    .await
                    .unwrap_or_else(|e| Err(RegisterError::Internal(e.to_string())));
                reply.send(result);
            }
            Payload::LoginRequest {
                username,
                password,
                reply,
            } => {
                let a = Arc::clone(&auth);
                let cid = correlation_id.clone();
                let outcome = tokio::task::spawn_blocking(move || a.authenticate(&username, &password, &cid)).await;
                match outcome {
                    Ok(Ok(Some(user))) => {
                        let msg = AgentMessage::new(correlation_id, Payload::EstablishSession { user, reply });
                        peers.send(AgentId::ConnectionEstablishment, msg);
                    }
                    Ok(Ok(None)) => super::reply_after(fail_delay, reply, Ok(AuthResult::Failure)),
                    Ok(Err(e)) => {
                        tracing::error!(%correlation_id, error = %e, "credential check failed");
                        super::reply_after(fail_delay, reply, Ok(AuthResult::Failure));
                    }
                    Err(e) => {
                        tracing::error!(%correlation_id, error = %e, "credential check panicked");
                        super::reply_after(fail_delay, reply, Ok(AuthResult::Failure));
                    }
                }
            }
            Payload::AuthorizeAccess { session, op, reply } => {
                reply.send(auth.authorize(&session, op, &correlation_id));
            }
            Payload::Shutdown => break,
            other => tracing::warn!(agent = %AgentId::Authentication, ?other, "unexpected message"),
        }
    }
}
