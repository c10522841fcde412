//! The health database: users, credentials, policy table, health records,
//! sessions and the append-only audit log.
//!
//! Layout of the data directory (all UTF-8, one entity per line):
//!
//! ```text
//! users.ndjson  credentials.ndjson  records.ndjson
//! sessions.ndjson  audit.ndjson  policy.tbl
//! ```
//!
//! Users, credentials and audit events are append-only. Records are
//! rewritten atomically on upsert. Sessions are appended on every state
//! change (last line per token wins) and compacted by [`HealthStore::compact_sessions`].

mod audit;
mod credentials;
mod ndjson;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::SystemTime;

pub use audit::{AuditEvent, AuditKind, CorrelationId, NewAuditEvent};
pub use credentials::{CredentialRecord, HashParams, Secret, SALT_LEN};

use crate::clock::{Clock, SystemClock};
use crate::policy::{
    normalize_username, FileId, HealthRecord, PolicyError, PolicyTable, PolicyTuple, Role, User, UserId,
};
use crate::session::{Session, SessionToken};
use ndjson::NdjsonFile;

pub const USERS_FILE: &str = "users.ndjson";
pub const CREDENTIALS_FILE: &str = "credentials.ndjson";
pub const RECORDS_FILE: &str = "records.ndjson";
pub const SESSIONS_FILE: &str = "sessions.ndjson";
pub const AUDIT_FILE: &str = "audit.ndjson";
pub const POLICY_FILE: &str = "policy.tbl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("username `{0}` is already taken")]
    DuplicateUsername(String),
    #[error("storage i/o on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    PolicyParse {
        path: PathBuf,
        #[source]
        source: PolicyError,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("unsupported credential scheme `{0}`")]
    UnsupportedHash(String),
}

/// Outcome of a credential check. Callers must not reveal which mismatch occurred.
#[derive(Debug, Clone, PartialEq)]
pub enum CredentialCheck {
    Verified(User),
    UnknownUser,
    WrongPassword,
}

#[derive(Debug, Clone)]
pub struct StoreOptions {
    pub hash: HashParams,
    /// fsync after every append and rewrite.
    pub sync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            hash: HashParams::default(),
            sync: true,
        }
    }
}

#[derive(Default)]
struct Directory {
    by_name: HashMap<String, User>,
    by_id: HashMap<UserId, String>,
    credentials: HashMap<String, CredentialRecord>,
    users_offset: u64,
    users_line: usize,
    credentials_offset: u64,
    credentials_line: usize,
}

#[derive(Default)]
struct AuditTail {
    last_sequence: u64,
    offset: u64,
    line: usize,
}

struct PolicyCache {
    stamp: Option<(SystemTime, u64)>,
    table: Arc<PolicyTable>,
}

pub struct HealthStore {
    dir: PathBuf,
    options: StoreOptions,
    clock: Arc<dyn Clock>,
    users: NdjsonFile,
    credentials: NdjsonFile,
    records_file: NdjsonFile,
    sessions: NdjsonFile,
    audit_file: NdjsonFile,
    directory: RwLock<Directory>,
    records: Mutex<BTreeMap<FileId, HealthRecord>>,
    sessions_lock: Mutex<()>,
    audit: Mutex<AuditTail>,
    policy: Mutex<PolicyCache>,
    dummy_credential: CredentialRecord,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl HealthStore {
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        Self::open_with_clock(dir, options, Arc::new(SystemClock))
    }

    pub fn open_with_clock(
        dir: impl AsRef<Path>,
        options: StoreOptions,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let file = |name: &str| NdjsonFile::open(dir.join(name), options.sync);
        let dummy_credential = options
            .hash
            .create(UserId::new("-"), &Secret::new(uuid::Uuid::new_v4().to_string()))?;
        let store = HealthStore {
            users: file(USERS_FILE)?,
            credentials: file(CREDENTIALS_FILE)?,
            records_file: file(RECORDS_FILE)?,
            sessions: file(SESSIONS_FILE)?,
            audit_file: file(AUDIT_FILE)?,
            directory: RwLock::new(Directory::default()),
            records: Mutex::new(BTreeMap::new()),
            sessions_lock: Mutex::new(()),
            audit: Mutex::new(AuditTail::default()),
            policy: Mutex::new(PolicyCache {
                stamp: None,
                table: Arc::new(PolicyTable::new()),
            }),
            dummy_credential,
            clock,
            options,
            dir,
        };
        {
            let mut d = store.directory.write().unwrap_or_else(|p| p.into_inner());
            store.refresh_directory(&mut d)?;
        }
        {
            let mut records = lock(&store.records);
            for rec in store.records_file.read_all::<HealthRecord>()? {
                records.insert(rec.file_id.clone(), rec);
            }
        }
        {
            let mut tail = lock(&store.audit);
            store.refresh_audit_tail(&mut tail)?;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn hash_params(&self) -> HashParams {
        self.options.hash
    }

    // ---- users and credentials ----

    fn refresh_directory(&self, d: &mut Directory) -> Result<(), StoreError> {
        // Credentials first: a user line is only written after its credential.
        if self.credentials.len()? > d.credentials_offset {
            let (lines, offset) = self
                .credentials
                .read_from::<CredentialRecord>(d.credentials_offset, d.credentials_line + 1)?;
            d.credentials_line += lines.len();
            d.credentials_offset = offset;
            for (_, cred) in lines {
                d.credentials.insert(cred.user_id.to_string(), cred);
            }
        }
        if self.users.len()? > d.users_offset {
            let (lines, offset) = self.users.read_from::<User>(d.users_offset, d.users_line + 1)?;
            d.users_line += lines.len();
            d.users_offset = offset;
            for (_, user) in lines {
                d.by_id.insert(user.user_id.clone(), user.username.clone());
                d.by_name.insert(user.username.clone(), user);
            }
        }
        Ok(())
    }

    fn directory(&self) -> Result<std::sync::RwLockReadGuard<'_, Directory>, StoreError> {
        let stale = {
            let d = self.directory.read().unwrap_or_else(|p| p.into_inner());
            self.users.len()? > d.users_offset || self.credentials.len()? > d.credentials_offset
        };
        if stale {
            let mut d = self.directory.write().unwrap_or_else(|p| p.into_inner());
            self.refresh_directory(&mut d)?;
        }
        Ok(self.directory.read().unwrap_or_else(|p| p.into_inner()))
    }

    /// Persists a new user with a freshly salted credential and audits `register`.
    /// The username is trimmed before the uniqueness check.
    pub fn put_user(
        &self,
        mut user: User,
        password: &Secret,
        correlation_id: &CorrelationId,
    ) -> Result<User, StoreError> {
        user.username = normalize_username(&user.username)?;
        user.credential_ref = user.user_id.to_string();
        let credential = self.options.hash.create(user.user_id.clone(), password)?;

        {
            let mut d = self.directory.write().unwrap_or_else(|p| p.into_inner());
            let mut users_append = self.users.lock_for_append()?;
            self.refresh_directory(&mut d)?;
            if d.by_name.contains_key(&user.username) {
                return Err(StoreError::DuplicateUsername(user.username));
            }
            if d.by_id.contains_key(&user.user_id) {
                return Err(StoreError::InvalidRecord(format!(
                    "user id {} already exists",
                    user.user_id
                )));
            }
            self.credentials.lock_for_append()?.append(&credential)?;
            users_append.append(&user)?;
            drop(users_append);
            self.refresh_directory(&mut d)?;
        }

        self.append_audit(
            NewAuditEvent::new(AuditKind::Register, correlation_id, Some(&user.username))
                .detail(format!("role={}", user.role)),
        )?;
        Ok(user)
    }

    pub fn find_user(&self, username: &str) -> Result<Option<User>, StoreError> {
        let name = username.trim();
        Ok(self.directory()?.by_name.get(name).cloned())
    }

    pub fn user(&self, user_id: &UserId) -> Result<Option<User>, StoreError> {
        let d = self.directory()?;
        Ok(d.by_id.get(user_id).and_then(|name| d.by_name.get(name)).cloned())
    }

    /// Every registered user, sorted by username.
    pub fn users(&self) -> Result<Vec<User>, StoreError> {
        let mut users: Vec<User> = self.directory()?.by_name.values().cloned().collect();
        users.sort_by(|a, b| a.username.cmp(&b.username));
        Ok(users)
    }

    /// Looks the user up and verifies the password. Unknown users are
    /// checked against a throwaway credential so both mismatches cost one hash.
    pub fn verify_credentials(&self, username: &str, password: &Secret) -> Result<CredentialCheck, StoreError> {
        let (user, credential) = {
            let d = self.directory()?;
            match d.by_name.get(username.trim()) {
                Some(user) => (Some(user.clone()), d.credentials.get(&user.credential_ref).cloned()),
                None => (None, None),
            }
        };
        match (user, credential) {
            (Some(user), Some(credential)) => Ok(if credential.verify(password)? {
                CredentialCheck::Verified(user)
            } else {
                CredentialCheck::WrongPassword
            }),
            (Some(user), None) => Err(StoreError::Corrupt {
                file: CREDENTIALS_FILE.into(),
                line: 0,
                message: format!("no credential for user {}", user.user_id),
            }),
            (None, _) => {
                let _ = self.dummy_credential.verify(password)?;
                Ok(CredentialCheck::UnknownUser)
            }
        }
    }

    // ---- records ----

    /// Upserts a record. Its owner must be a registered patient.
    pub fn put_record(&self, record: HealthRecord) -> Result<(), StoreError> {
        match self.user(&record.owner_user_id)? {
            Some(owner) if owner.role == Role::Patient => {}
            Some(owner) => {
                return Err(StoreError::InvalidRecord(format!(
                    "owner {} of {} has role {}, not patient",
                    owner.username, record.file_id, owner.role
                )))
            }
            None => {
                return Err(StoreError::InvalidRecord(format!(
                    "owner {} of {} is not a registered user",
                    record.owner_user_id, record.file_id
                )))
            }
        }
        let mut records = lock(&self.records);
        let previous = records.insert(record.file_id.clone(), record.clone());
        if let Err(e) = self.records_file.rewrite(records.values()) {
            match previous {
                Some(prev) => records.insert(prev.file_id.clone(), prev),
                None => records.remove(&record.file_id),
            };
            return Err(e);
        }
        Ok(())
    }

    pub fn get_record(&self, file_id: &FileId) -> Option<HealthRecord> {
        lock(&self.records).get(file_id).cloned()
    }

    pub fn records(&self) -> Vec<HealthRecord> {
        lock(&self.records).values().cloned().collect()
    }

    // ---- sessions ----

    /// Appends the current state of a session.
    pub fn save_session(&self, session: &Session) -> Result<(), StoreError> {
        let _g = lock(&self.sessions_lock);
        self.sessions.lock_for_append()?.append(session)
    }

    /// Latest state of every persisted session, in first-seen order.
    pub fn load_sessions(&self) -> Result<Vec<Session>, StoreError> {
        let _g = lock(&self.sessions_lock);
        let mut order: Vec<SessionToken> = Vec::new();
        let mut latest: HashMap<SessionToken, Session> = HashMap::new();
        for s in self.sessions.read_all::<Session>()? {
            if !latest.contains_key(&s.token) {
                order.push(s.token.clone());
            }
            latest.insert(s.token.clone(), s);
        }
        Ok(order.into_iter().filter_map(|t| latest.remove(&t)).collect())
    }

    /// Rewrites the session file to exactly `live`.
    pub fn compact_sessions(&self, live: &[Session]) -> Result<(), StoreError> {
        let _g = lock(&self.sessions_lock);
        self.sessions.rewrite(live)
    }

    // ---- audit ----

    fn refresh_audit_tail(&self, tail: &mut AuditTail) -> Result<(), StoreError> {
        if self.audit_file.len()? > tail.offset {
            let (events, offset) = self.audit_file.read_from::<AuditEvent>(tail.offset, tail.line + 1)?;
            for (line, event) in &events {
                if event.sequence != tail.last_sequence + 1 {
                    return Err(StoreError::Corrupt {
                        file: AUDIT_FILE.into(),
                        line: *line,
                        message: format!("sequence {} follows {}", event.sequence, tail.last_sequence),
                    });
                }
                tail.last_sequence = event.sequence;
            }
            tail.line += events.len();
            tail.offset = offset;
        }
        Ok(())
    }

    /// Appends an event and returns its sequence number (the first is 1).
    pub fn append_audit(&self, event: NewAuditEvent) -> Result<u64, StoreError> {
        let mut tail = lock(&self.audit);
        let mut file = self.audit_file.lock_for_append()?;
        self.refresh_audit_tail(&mut tail)?;
        let stored = AuditEvent {
            sequence: tail.last_sequence + 1,
            timestamp: self.clock.now(),
            correlation_id: event.correlation_id,
            actor_username: event.actor_username,
            event_kind: event.event_kind,
            detail: event.detail,
            decision_fields: event.decision_fields,
        };
        file.append(&stored)?;
        drop(file);
        self.refresh_audit_tail(&mut tail)?;
        Ok(stored.sequence)
    }

    /// Events with `sequence >= from`, in order.
    pub fn read_audit(&self, from: u64) -> Result<Vec<AuditEvent>, StoreError> {
        Ok(self
            .audit_file
            .read_all::<AuditEvent>()?
            .into_iter()
            .filter(|e| e.sequence >= from)
            .collect())
    }

    pub fn last_audit_sequence(&self) -> Result<u64, StoreError> {
        let mut tail = lock(&self.audit);
        self.refresh_audit_tail(&mut tail)?;
        Ok(tail.last_sequence)
    }

    // ---- policy ----

    pub fn policy_path(&self) -> PathBuf {
        self.dir.join(POLICY_FILE)
    }

    /// The current policy table, reloaded whenever `policy.tbl` changes on disk.
    /// A missing file is an empty table.
    pub fn policy_table(&self) -> Result<Arc<PolicyTable>, StoreError> {
        let path = self.policy_path();
        let stamp = match fs::metadata(&path) {
            Ok(m) => Some((m.modified().unwrap_or(SystemTime::UNIX_EPOCH), m.len())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let mut cache = lock(&self.policy);
        if cache.stamp != stamp {
            cache.table = Arc::new(match stamp {
                Some(_) => load_policy_table(&path)?,
                None => PolicyTable::new(),
            });
            cache.stamp = stamp;
        }
        Ok(Arc::clone(&cache.table))
    }

    pub fn set_policy_table(&self, table: &PolicyTable) -> Result<(), StoreError> {
        save_policy_table(table, &self.policy_path())?;
        lock(&self.policy).stamp = None;
        Ok(())
    }

    /// Merges one tuple into the stored table.
    pub fn add_policy(&self, tuple: PolicyTuple) -> Result<Arc<PolicyTable>, StoreError> {
        let mut table = (*self.policy_table()?).clone();
        table.insert(tuple);
        self.set_policy_table(&table)?;
        self.policy_table()
    }
}

pub fn load_policy_table(path: &Path) -> Result<PolicyTable, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    PolicyTable::parse(&text).map_err(|source| StoreError::PolicyParse {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the canonical serialization atomically.
pub fn save_policy_table(table: &PolicyTable, path: &Path) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tbl.tmp");
    fs::write(&tmp, table.to_string()).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}
