//! The closed health-record field catalog and field sets over it.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PolicyError;

/// Top-level grouping of the health database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldGroup {
    /// Where the patient is and when the data was collected.
    Environment,
    PatientInfo,
    CurrentMedical,
}

impl FieldGroup {
    pub const ALL: [FieldGroup; 3] = [
        FieldGroup::Environment,
        FieldGroup::PatientInfo,
        FieldGroup::CurrentMedical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldGroup::Environment => "environment",
            FieldGroup::PatientInfo => "patient_info",
            FieldGroup::CurrentMedical => "current_medical",
        }
    }

    pub fn fields(self) -> impl Iterator<Item = FieldId> {
        FieldId::CATALOG.into_iter().filter(move |f| f.group() == self)
    }
}

/// One field of the canonical catalog. Declaration order is catalog order,
/// which is also the serialization order of explicit field sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldId {
    Location,
    CollectedAt,
    Age,
    Status,
    BloodGroup,
    Height,
    Weight,
    /// Carried opaquely; units are not interpreted.
    Bgm,
    HeartRate,
    BloodPressure,
    SugarLevel,
    OperationHistory,
}

impl FieldId {
    pub const CATALOG: [FieldId; 12] = [
        FieldId::Location,
        FieldId::CollectedAt,
        FieldId::Age,
        FieldId::Status,
        FieldId::BloodGroup,
        FieldId::Height,
        FieldId::Weight,
        FieldId::Bgm,
        FieldId::HeartRate,
        FieldId::BloodPressure,
        FieldId::SugarLevel,
        FieldId::OperationHistory,
    ];

    pub fn group(self) -> FieldGroup {
        match self {
            FieldId::Location | FieldId::CollectedAt => FieldGroup::Environment,
            FieldId::Age | FieldId::Status | FieldId::BloodGroup | FieldId::Height | FieldId::Weight | FieldId::Bgm => {
                FieldGroup::PatientInfo
            }
            FieldId::HeartRate | FieldId::BloodPressure | FieldId::SugarLevel | FieldId::OperationHistory => {
                FieldGroup::CurrentMedical
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldId::Location => "location",
            FieldId::CollectedAt => "collected_at",
            FieldId::Age => "age",
            FieldId::Status => "status",
            FieldId::BloodGroup => "blood_group",
            FieldId::Height => "height",
            FieldId::Weight => "weight",
            FieldId::Bgm => "bgm",
            FieldId::HeartRate => "heart_rate",
            FieldId::BloodPressure => "blood_pressure",
            FieldId::SugarLevel => "sugar_level",
            FieldId::OperationHistory => "operation_history",
        }
    }

    /// Resolves a `group` + `name` pair, rejecting names filed under the wrong group.
    pub fn in_group(group: FieldGroup, name: &str) -> Result<FieldId, PolicyError> {
        let field: FieldId = name.parse()?;
        if field.group() != group {
            return Err(PolicyError::FieldGroupMismatch {
                field: name.to_string(),
                group: group.as_str(),
            });
        }
        Ok(field)
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldId {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldId::CATALOG
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| PolicyError::UnknownField(s.to_string()))
    }
}

impl Serialize for FieldId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FieldId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Either every catalog field or an explicit subset of them.
///
/// Equality is semantic: `Wildcard` equals an explicit set holding the whole
/// catalog.
#[derive(Debug, Clone)]
pub enum FieldSet {
    Wildcard,
    Explicit(BTreeSet<FieldId>),
}

impl FieldSet {
    pub fn empty() -> Self {
        FieldSet::Explicit(BTreeSet::new())
    }

    pub fn of(fields: impl IntoIterator<Item = FieldId>) -> Self {
        FieldSet::Explicit(fields.into_iter().collect())
    }

    pub fn contains(&self, field: FieldId) -> bool {
        match self {
            FieldSet::Wildcard => true,
            FieldSet::Explicit(set) => set.contains(&field),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, FieldSet::Explicit(set) if set.is_empty())
    }

    pub fn len(&self) -> usize {
        match self {
            FieldSet::Wildcard => FieldId::CATALOG.len(),
            FieldSet::Explicit(set) => set.len(),
        }
    }

    /// The fields in catalog order.
    pub fn to_set(&self) -> BTreeSet<FieldId> {
        match self {
            FieldSet::Wildcard => FieldId::CATALOG.into_iter().collect(),
            FieldSet::Explicit(set) => set.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = FieldId> + '_ {
        FieldId::CATALOG.into_iter().filter(move |f| self.contains(*f))
    }

    pub fn intersection(&self, other: &FieldSet) -> FieldSet {
        match (self, other) {
            (FieldSet::Wildcard, FieldSet::Wildcard) => FieldSet::Wildcard,
            (FieldSet::Wildcard, explicit) | (explicit, FieldSet::Wildcard) => explicit.clone(),
            (FieldSet::Explicit(a), FieldSet::Explicit(b)) => FieldSet::Explicit(a.intersection(b).copied().collect()),
        }
    }

    pub fn union(&self, other: &FieldSet) -> FieldSet {
        match (self, other) {
            (FieldSet::Explicit(a), FieldSet::Explicit(b)) => FieldSet::Explicit(a.union(b).copied().collect()),
            _ => FieldSet::Wildcard,
        }
    }

    pub fn is_subset(&self, other: &FieldSet) -> bool {
        self.iter().all(|f| other.contains(f))
    }

    /// Parses the `|`-separated policy-line notation; `*` is the wildcard and
    /// an empty string is the empty set.
    pub fn parse_list(s: &str) -> Result<FieldSet, PolicyError> {
        let s = s.trim();
        if s == "*" {
            return Ok(FieldSet::Wildcard);
        }
        if s.is_empty() {
            return Ok(FieldSet::empty());
        }
        let mut set = BTreeSet::new();
        for name in s.split('|') {
            let field: FieldId = name.trim().parse()?;
            if !set.insert(field) {
                return Err(PolicyError::DuplicateField(field.name().to_string()));
            }
        }
        Ok(FieldSet::Explicit(set))
    }
}

impl PartialEq for FieldSet {
    fn eq(&self, other: &Self) -> bool {
        self.to_set() == other.to_set()
    }
}

impl Eq for FieldSet {}

impl fmt::Display for FieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSet::Wildcard => f.write_str("*"),
            FieldSet::Explicit(set) => {
                for (i, field) in set.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    f.write_str(field.name())?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for FieldSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FieldSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FieldSet::parse_list(&s).map_err(serde::de::Error::custom)
    }
}
