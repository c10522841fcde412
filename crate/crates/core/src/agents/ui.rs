//! User interface agent: shape validation and routing. It makes no
//! authorization decisions.

use tokio::sync::mpsc::UnboundedReceiver;

use super::messages::{AccessFailure, AccessOp, AgentMessage, InvalidInput, Payload, RawAccess, RegisterError};
use super::{AgentId, Mailboxes};
use crate::policy::{FieldId, FieldSet, FileId, Role};
use crate::store::Secret;

pub fn validate_credentials(username: &str, password: &Secret) -> Result<(), InvalidInput> {
    if username.trim().is_empty() {
        return Err(InvalidInput("username must not be empty".into()));
    }
    if password.is_empty() {
        return Err(InvalidInput("password must not be empty".into()));
    }
    Ok(())
}

/// Self-registration is open to every role except admin.
pub fn validate_registration(username: &str, password: &Secret, role: Role) -> Result<(), InvalidInput> {
    validate_credentials(username, password)?;
    if role == Role::Admin {
        return Err(InvalidInput("admin accounts cannot be self-registered".into()));
    }
    Ok(())
}

fn parse_file_id(raw: &str) -> Result<FileId, InvalidInput> {
    FileId::new(raw).map_err(|e| InvalidInput(e.to_string()))
}

fn parse_field(raw: &str) -> Result<FieldId, InvalidInput> {
    raw.trim()
        .parse()
        .map_err(|e: crate::policy::PolicyError| InvalidInput(e.to_string()))
}

pub fn validate_access(raw: RawAccess) -> Result<AccessOp, InvalidInput> {
    Ok(match raw {
        RawAccess::Read { file_id, fields } => AccessOp::Read {
            file_id: parse_file_id(&file_id)?,
            fields: match fields {
                None => FieldSet::Wildcard,
                Some(names) => {
                    let mut set = std::collections::BTreeSet::new();
                    for name in names.iter().filter(|n| !n.trim().is_empty()) {
                        set.insert(parse_field(name)?);
                    }
                    FieldSet::Explicit(set)
                }
            },
        },
        RawAccess::Write { file_id, values } => {
            let file_id = parse_file_id(&file_id)?;
            let mut parsed = std::collections::BTreeMap::new();
            for (name, value) in values {
                let field = parse_field(&name)?;
                if parsed.insert(field, value).is_some() {
                    return Err(InvalidInput(format!("field `{field}` given twice")));
                }
            }
            AccessOp::Write {
                file_id,
                values: parsed,
            }
        }
        RawAccess::Audit { from } => AccessOp::Audit { from },
    })
}

pub(super) async fn run(mut inbox: UnboundedReceiver<AgentMessage>, peers: Mailboxes) {
    while let Some(AgentMessage {
        correlation_id,
        payload,
    }) = inbox.recv().await
    {
        peers.stats.record(AgentId::UserInterface);
        match payload {
            Payload::RegisterUser {
                username,
                password,
                role,
                reply,
            } => match validate_registration(&username, &password, role) {
                Ok(()) => peers.send(
                    AgentId::Authentication,
                    AgentMessage::new(
                        correlation_id,
                        Payload::RegisterUser {
                            username,
                            password,
                            role,
                            reply,
                        },
                    ),
                ),
                Err(e) => reply.send(Err(RegisterError::Invalid(e))),
            },
            Payload::LoginRequest {
                username,
                password,
                reply,
            } => match validate_credentials(&username, &password) {
                Ok(()) => peers.send(
                    AgentId::Authentication,
                    AgentMessage::new(
                        correlation_id,
                        Payload::LoginRequest {
                            username,
                            password,
                            reply,
                        },
                    ),
                ),
                Err(e) => reply.send(Err(e)),
            },
            Payload::AccessRequestMsg { token, op, reply } => match validate_access(op) {
                Ok(op) => peers.send(
                    AgentId::ConnectionManagement,
                    AgentMessage::new(correlation_id, Payload::SessionCheck { token, op, reply }),
                ),
                Err(e) => reply.send(Err(AccessFailure::Invalid(e))),
            },
            Payload::RevokeSession { token, reply } => peers.send(
                AgentId::ConnectionManagement,
                AgentMessage::new(correlation_id, Payload::RevokeSession { token, reply }),
            ),
            Payload::Shutdown => break,
            other => tracing::warn!(agent = %AgentId::UserInterface, ?other, "unexpected message"),
        }
    }
}
