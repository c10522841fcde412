use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FieldId, FieldSet, PolicyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Patient,
    Physician,
    RecordsOfficer,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Patient, Role::Physician, Role::RecordsOfficer, Role::Admin];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Physician => "physician",
            Role::RecordsOfficer => "records_officer",
            Role::Admin => "admin",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| PolicyError::UnknownRole(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    Read,
    Write,
}

impl AccessMode {
    pub const ALL: [AccessMode; 2] = [AccessMode::Read, AccessMode::Write];

    pub fn as_str(self) -> &'static str {
        match self {
            AccessMode::Read => "read",
            AccessMode::Write => "write",
        }
    }
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessMode {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read" => Ok(AccessMode::Read),
            "write" => Ok(AccessMode::Write),
            other => Err(PolicyError::UnknownMode(other.to_string())),
        }
    }
}

/// Opaque user identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn random() -> Self {
        UserId(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque record identifier. Must be non-empty and free of the policy-line
/// separators (`,`, tab, `|`, `/`) and whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FileId(String);

impl FileId {
    pub fn new(id: impl Into<String>) -> Result<Self, PolicyError> {
        let id = id.into();
        let bad = |c: char| c.is_whitespace() || matches!(c, ',' | '|' | '/' | '#');
        if id.is_empty() || id.chars().any(bad) {
            return Err(PolicyError::InvalidFileId(id));
        }
        Ok(FileId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for FileId {
    type Error = PolicyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        FileId::new(value)
    }
}

impl From<FileId> for String {
    fn from(value: FileId) -> Self {
        value.0
    }
}

impl FromStr for FileId {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FileId::new(s)
    }
}

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: UserId,
    pub username: String,
    pub role: Role,
    /// Key of this user's entry in the credential store.
    pub credential_ref: String,
}

impl User {
    pub fn new(username: &str, role: Role) -> Result<Self, PolicyError> {
        let username = normalize_username(username)?;
        let user_id = UserId::random();
        Ok(User {
            credential_ref: user_id.to_string(),
            user_id,
            username,
            role,
        })
    }
}

/// Trims surrounding whitespace; the result must be non-empty.
pub fn normalize_username(raw: &str) -> Result<String, PolicyError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(PolicyError::EmptyUsername);
    }
    Ok(trimmed.to_string())
}

/// One `<role, mode, file, fields>` grant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTuple {
    pub role: Role,
    pub mode: AccessMode,
    pub file_id: FileId,
    pub fields: FieldSet,
}

impl PolicyTuple {
    pub fn new(role: Role, mode: AccessMode, file_id: FileId, fields: FieldSet) -> Self {
        PolicyTuple {
            role,
            mode,
            file_id,
            fields,
        }
    }
}

/// A concrete `<user, mode, file, fields>` access attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub user_id: UserId,
    pub mode: AccessMode,
    pub file_id: FileId,
    /// `Wildcard` asks for everything the policy allows.
    pub requested_fields: FieldSet,
}

/// A stored field value: free-form text or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Number(n) => write!(f, "{n}"),
            FieldValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthRecord {
    pub file_id: FileId,
    /// The patient this record describes.
    pub owner_user_id: UserId,
    #[serde(default)]
    pub values: BTreeMap<FieldId, FieldValue>,
}

impl HealthRecord {
    pub fn new(file_id: FileId, owner_user_id: UserId) -> Self {
        HealthRecord {
            file_id,
            owner_user_id,
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: FieldId, value: impl Into<FieldValue>) -> Self {
        self.values.insert(field, value.into());
        self
    }

    pub fn field_set(&self) -> FieldSet {
        FieldSet::of(self.values.keys().copied())
    }
}

impl From<&str> for FieldValue {
    fn from(value: &str) -> Self {
        FieldValue::Text(value.to_string())
    }
}

impl From<String> for FieldValue {
    fn from(value: String) -> Self {
        FieldValue::Text(value)
    }
}

impl From<f64> for FieldValue {
    fn from(value: f64) -> Self {
        FieldValue::Number(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectOutcome {
    Establish,
    NoConnection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectReason {
    Ok,
    UnknownUser,
    NoPolicyForRole,
}

/// Result of the connection gate. `outcome` is `Establish` exactly when
/// `reason` is `Ok`; the constructors keep it that way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectDecision {
    outcome: ConnectOutcome,
    reason: ConnectReason,
}

impl ConnectDecision {
    pub fn establish() -> Self {
        ConnectDecision {
            outcome: ConnectOutcome::Establish,
            reason: ConnectReason::Ok,
        }
    }

    pub fn refuse(reason: ConnectReason) -> Self {
        debug_assert_ne!(reason, ConnectReason::Ok);
        ConnectDecision {
            outcome: ConnectOutcome::NoConnection,
            reason,
        }
    }

    pub fn outcome(&self) -> ConnectOutcome {
        self.outcome
    }

    pub fn reason(&self) -> ConnectReason {
        self.reason
    }

    pub fn is_established(&self) -> bool {
        self.outcome == ConnectOutcome::Establish
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessOutcome {
    Granted,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessReason {
    Ok,
    NoMatchingTuple,
    NotAuthenticated,
}

impl AccessReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessReason::Ok => "ok",
            AccessReason::NoMatchingTuple => "no_matching_tuple",
            AccessReason::NotAuthenticated => "not_authenticated",
        }
    }
}

/// Outcome of a file-access evaluation. A granted decision always carries a
/// non-empty field set; a denied one always carries the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    outcome: AccessOutcome,
    granted_fields: FieldSet,
    reason: AccessReason,
}

impl AccessDecision {
    /// Grants `fields`, or denies with `NoMatchingTuple` when `fields` is empty.
    pub fn grant(fields: FieldSet) -> Self {
        if fields.is_empty() {
            return AccessDecision::deny(AccessReason::NoMatchingTuple);
        }
        AccessDecision {
            outcome: AccessOutcome::Granted,
            granted_fields: fields,
            reason: AccessReason::Ok,
        }
    }

    pub fn deny(reason: AccessReason) -> Self {
        debug_assert_ne!(reason, AccessReason::Ok);
        AccessDecision {
            outcome: AccessOutcome::Denied,
            granted_fields: FieldSet::empty(),
            reason,
        }
    }

    pub fn outcome(&self) -> AccessOutcome {
        self.outcome
    }

    pub fn granted_fields(&self) -> &FieldSet {
        &self.granted_fields
    }

    pub fn reason(&self) -> AccessReason {
        self.reason
    }

    pub fn is_granted(&self) -> bool {
        self.outcome == AccessOutcome::Granted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_parsing_is_closed() {
        for role in Role::ALL {
            assert_eq!(role.as_str().parse::<Role>().unwrap(), role);
        }
        assert!(matches!("wizard".parse::<Role>(), Err(PolicyError::UnknownRole(r)) if r == "wizard"));
        assert!("Physician".parse::<Role>().is_err());
    }

    #[test]
    fn file_ids_reject_separators() {
        assert!(FileId::new("rec1").is_ok());
        for bad in ["", "a,b", "a|b", "a b", "a\tb", "a/b"] {
            assert!(FileId::new(bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn usernames_are_trimmed() {
        assert_eq!(normalize_username(" dr_a ").unwrap(), "dr_a");
        assert!(matches!(normalize_username("  "), Err(PolicyError::EmptyUsername)));
    }

    #[test]
    fn empty_grant_becomes_denial() {
        let d = AccessDecision::grant(FieldSet::empty());
        assert_eq!(d.outcome(), AccessOutcome::Denied);
        assert_eq!(d.reason(), AccessReason::NoMatchingTuple);
    }

    #[test]
    fn field_values_serialize_untagged() {
        let rec = HealthRecord::new(FileId::new("rec1").unwrap(), UserId::new("p1"))
            .with(FieldId::HeartRate, 72.0)
            .with(FieldId::BloodGroup, "O+");
        let json = serde_json::to_string(&rec.values).unwrap();
        assert_eq!(json, r#"{"blood_group":"O+","heart_rate":72.0}"#);
        let back: BTreeMap<FieldId, FieldValue> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec.values);
    }
}
