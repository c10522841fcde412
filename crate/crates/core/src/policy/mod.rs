//! Pure access-control decision logic.
//!
//! Holds the domain types, the policy table, the connection gate, file-access
//! evaluation with field-level redaction, and a naive reference evaluator.
//! Everything here is a pure function over immutable inputs.

mod eval;
mod fields;
mod oracle;
mod table;
mod types;

pub use eval::{evaluate_access, evaluate_connection, filter_record};
pub use fields::{FieldGroup, FieldId, FieldSet};
pub use oracle::oracle_evaluate;
pub use table::PolicyTable;
pub use types::{
    normalize_username, AccessDecision, AccessMode, AccessOutcome, AccessReason, AccessRequest, ConnectDecision,
    ConnectOutcome, ConnectReason, FieldValue, FileId, HealthRecord, PolicyTuple, Role, User, UserId,
};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown role `{0}` (expected patient, physician, records_officer or admin)")]
    UnknownRole(String),
    #[error("unknown access mode `{0}` (expected read or write)")]
    UnknownMode(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{field}` does not belong to group {group}")]
    FieldGroupMismatch { field: String, group: &'static str },
    #[error("field `{0}` listed twice")]
    DuplicateField(String),
    #[error("invalid file id `{0}`")]
    InvalidFileId(String),
    #[error("username must not be empty")]
    EmptyUsername,
    #[error("expected 4 columns, found {0}")]
    ColumnCount(usize),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<PolicyError>,
    },
}
