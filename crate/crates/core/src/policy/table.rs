//! The policy table and its line-oriented interchange format.
//!
//! One tuple per line: `role,mode,file_id,field1|field2|...`, with `*` for
//! every field. A tab may stand in for any comma. Lines starting with `#`
//! and blank lines are ignored. Tuples sharing `(role, mode, file_id)` are
//! merged by field-set union, so each key appears once after loading.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{AccessMode, FieldSet, FileId, PolicyError, PolicyTuple, Role};

type Key = (Role, AccessMode, FileId);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyTable {
    grants: BTreeMap<Key, FieldSet>,
}

impl PolicyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tuple, unioning its fields into any existing tuple with the same key.
    pub fn insert(&mut self, tuple: PolicyTuple) {
        let key = (tuple.role, tuple.mode, tuple.file_id);
        match self.grants.get_mut(&key) {
            Some(existing) => *existing = existing.union(&tuple.fields),
            None => {
                self.grants.insert(key, tuple.fields);
            }
        }
    }

    pub fn lookup(&self, role: Role, mode: AccessMode, file_id: &FileId) -> Option<&FieldSet> {
        // BTreeMap keys need an owned FileId; the clone is a short string.
        self.grants.get(&(role, mode, file_id.clone()))
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.grants.keys().any(|(r, _, _)| *r == role)
    }

    pub fn len(&self) -> usize {
        self.grants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    pub fn tuples(&self) -> impl Iterator<Item = PolicyTuple> + '_ {
        self.grants.iter().map(|((role, mode, file_id), fields)| PolicyTuple {
            role: *role,
            mode: *mode,
            file_id: file_id.clone(),
            fields: fields.clone(),
        })
    }

    /// Parses a whole table; errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<PolicyTable, PolicyError> {
        let mut table = PolicyTable::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tuple = parse_line(trimmed).map_err(|source| PolicyError::Line {
                line: idx + 1,
                source: Box::new(source),
            })?;
            table.insert(tuple);
        }
        Ok(table)
    }
}

impl FromIterator<PolicyTuple> for PolicyTable {
    fn from_iter<I: IntoIterator<Item = PolicyTuple>>(iter: I) -> Self {
        let mut table = PolicyTable::new();
        for tuple in iter {
            table.insert(tuple);
        }
        table
    }
}

/// Serializes one tuple per line in key order; the output parses back to
/// an equal table and re-serializes to identical bytes.
impl fmt::Display for PolicyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for tuple in self.tuples() {
            writeln!(f, "{tuple}")?;
        }
        Ok(())
    }
}

impl fmt::Display for PolicyTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.role, self.mode, self.file_id, self.fields)
    }
}

impl FromStr for PolicyTuple {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_line(s.trim())
    }
}

fn parse_line(line: &str) -> Result<PolicyTuple, PolicyError> {
    let parts: Vec<&str> = line.split([',', '\t']).collect();
    if parts.len() != 4 {
        return Err(PolicyError::ColumnCount(parts.len()));
    }
    Ok(PolicyTuple {
        role: parts[0].trim().parse()?,
        mode: parts[1].trim().parse()?,
        file_id: FileId::new(parts[2].trim())?,
        fields: FieldSet::parse_list(parts[3])?,
    })
}
