use std::fs;
use std::io;
use std::path::Path;

use ibac_core::policy::HealthRecord;
use ibac_core::store::{CREDENTIALS_FILE, POLICY_FILE, RECORDS_FILE, USERS_FILE};

use crate::HarnessError;

/// Comparable state of a store directory, sessions and audit excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreSnapshot {
    pub users: Vec<u8>,
    pub credentials: Vec<u8>,
    pub records: Vec<HealthRecord>,
    pub policy: Vec<u8>,
}

fn read_or_empty(path: &Path) -> io::Result<Vec<u8>> {
    match fs::read(path) {
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        other => other,
    }
}

impl StoreSnapshot {
    /// Reads the files directly so a live gateway can keep the store open.
    pub fn take(dir: &Path) -> Result<Self, HarnessError> {
        let text = String::from_utf8_lossy(&read_or_empty(&dir.join(RECORDS_FILE))?).into_owned();
        let mut records = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: HealthRecord =
                serde_json::from_str(line).map_err(|e| HarnessError::Fixture(format!("{RECORDS_FILE}: {e}")))?;
            records.push(rec);
        }
        records.sort_by(|a, b| a.file_id.cmp(&b.file_id));
        Ok(StoreSnapshot {
            users: read_or_empty(&dir.join(USERS_FILE))?,
            credentials: read_or_empty(&dir.join(CREDENTIALS_FILE))?,
            records,
            policy: read_or_empty(&dir.join(POLICY_FILE))?,
        })
    }
}
