//! `key=value` configuration shared by the runtime, the gateway and the CLI.
//!
//! Values come from defaults, then an optional file, then `IBAC_<KEY>`
//! environment variables (e.g. `IBAC_SESSION_TTL_SECONDS`).

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::store::{HashParams, StoreOptions};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for {key}")]
    InvalidValue { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub listen_addr: SocketAddr,
    pub data_dir: PathBuf,
    pub session_ttl_seconds: u64,
    pub auth_fail_delay_ms: u64,
    pub sweep_interval_seconds: u64,
    /// Maximum in-flight interactions before new ones are rejected.
    pub queue_bound: usize,
    pub password_hash_memory_kib: u32,
    pub password_hash_iterations: u32,
    pub store_sync: bool,
    /// Lets a patient read their own record without an explicit grant. Off by default.
    pub patient_owner_read: bool,
    /// Replaces file-access evaluation with "grant everything requested".
    /// Only for exercising the threat harness against a broken deployment.
    pub unsafe_allow_all: bool,
}

impl Default for Config {
    fn default() -> Self {
        let hash = HashParams::default();
        Config {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            session_ttl_seconds: 3600,
            auth_fail_delay_ms: 200,
            sweep_interval_seconds: 60,
            queue_bound: 1024,
            password_hash_memory_kib: hash.memory_kib,
            password_hash_iterations: hash.iterations,
            store_sync: true,
            patient_owner_read: false,
            unsafe_allow_all: false,
        }
    }
}

const KEYS: [&str; 11] = [
    "listen_addr",
    "data_dir",
    "session_ttl_seconds",
    "auth_fail_delay_ms",
    "sweep_interval_seconds",
    "queue_bound",
    "password_hash_memory_kib",
    "password_hash_iterations",
    "store_sync",
    "patient_owner_read",
    "unsafe_allow_all",
];

/// Parses `key=value` lines; `#` comments and blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "listen_addr" => self.listen_addr = parse_value(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "session_ttl_seconds" => self.session_ttl_seconds = parse_value(key, value)?,
            "auth_fail_delay_ms" => self.auth_fail_delay_ms = parse_value(key, value)?,
            "sweep_interval_seconds" => self.sweep_interval_seconds = parse_value(key, value)?,
            "queue_bound" => self.queue_bound = parse_value(key, value)?,
            "password_hash_memory_kib" => self.password_hash_memory_kib = parse_value(key, value)?,
            "password_hash_iterations" => self.password_hash_iterations = parse_value(key, value)?,
            "store_sync" => self.store_sync = parse_value(key, value)?,
            "patient_owner_read" => self.patient_owner_read = parse_value(key, value)?,
            "unsafe_allow_all" => self.unsafe_allow_all = parse_value(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every pair from `text`. Keys this type does not know are
    /// skipped when `ignore_unknown` is set, so files can carry extra sections.
    pub fn apply_text(&mut self, text: &str, ignore_unknown: bool) -> Result<(), ConfigError> {
        for (k, v) in parse_pairs(text)? {
            match self.set(&k, &v) {
                Err(ConfigError::UnknownKey(_)) if ignore_unknown => {}
                other => other?,
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Config::default();
        cfg.apply_text(&text, false)?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env_from(|k| std::env::var(k).ok())
    }

    pub fn apply_env_from(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        for key in KEYS {
            if let Some(v) = lookup(&format!("IBAC_{}", key.to_ascii_uppercase())) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    /// Defaults, then `path` if given, then the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Config::from_file(p)?,
            None => Config::default(),
        };
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn hash_params(&self) -> HashParams {
        HashParams {
            memory_kib: self.password_hash_memory_kib,
            iterations: self.password_hash_iterations,
            parallelism: 1,
        }
    }

    pub fn store_options(&self) -> StoreOptions {
        StoreOptions {
            hash: self.hash_params(),
            sync: self.store_sync,
        }
    }

    pub fn auth_fail_delay(&self) -> Duration {
        Duration::from_millis(self.auth_fail_delay_ms)
    }

    pub fn sweep_interval(&self) -> Duration {
        Duration::from_secs(self.sweep_interval_seconds.max(1))
    }
}
