//! Salted, memory-hard password hashes.
//!
//! Each record carries an `algorithm_tag` such as
//! `argon2id;v=19;m=19456;t=2;p=1` and verification re-derives the hash with
//! exactly the parameters in the tag, so records hashed under older settings
//! keep verifying after the defaults change.

use std::fmt;

use argon2::{Algorithm, Argon2, Params, Version};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use super::StoreError;
use crate::policy::UserId;

pub const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

/// A password held in memory. `Debug` never prints it.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

impl From<&str> for Secret {
    fn from(value: &str) -> Self {
        Secret::new(value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialRecord {
    pub user_id: UserId,
    /// Hex-encoded 16-byte salt.
    pub salt: String,
    /// Hex-encoded derived key.
    pub hash: String,
    pub algorithm_tag: String,
}

/// Argon2id cost parameters for newly created credentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for HashParams {
    /// OWASP's minimum recommendation for Argon2id.
    fn default() -> Self {
        HashParams {
            memory_kib: 19 * 1024,
            iterations: 2,
            parallelism: 1,
        }
    }
}

impl HashParams {
    /// Cheap parameters for fixtures and tests.
    pub fn fast() -> Self {
        HashParams {
            memory_kib: 256,
            iterations: 1,
            parallelism: 1,
        }
    }

    pub fn tag(&self) -> String {
        format!(
            "argon2id;v=19;m={};t={};p={}",
            self.memory_kib, self.iterations, self.parallelism
        )
    }

    pub fn from_tag(tag: &str) -> Result<Self, StoreError> {
        let unsupported = || StoreError::UnsupportedHash(tag.to_string());
        let mut parts = tag.split(';');
        if parts.next() != Some("argon2id") || parts.next() != Some("v=19") {
            return Err(unsupported());
        }
        let mut field = |key: &str| -> Result<u32, StoreError> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(unsupported)
        };
        let params = HashParams {
            memory_kib: field("m=")?,
            iterations: field("t=")?,
            parallelism: field("p=")?,
        };
        if parts.next().is_some() {
            return Err(unsupported());
        }
        Ok(params)
    }

    fn derive(&self, password: &Secret, salt: &[u8]) -> Result<[u8; HASH_LEN], StoreError> {
        let params = Params::new(self.memory_kib, self.iterations, self.parallelism, Some(HASH_LEN))
            .map_err(|e| StoreError::UnsupportedHash(format!("{}: {e}", self.tag())))?;
        let mut out = [0u8; HASH_LEN];
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
            .hash_password_into(password.expose().as_bytes(), salt, &mut out)
            .map_err(|e| StoreError::UnsupportedHash(format!("{}: {e}", self.tag())))?;
        Ok(out)
    }

    pub fn create(&self, user_id: UserId, password: &Secret) -> Result<CredentialRecord, StoreError> {
        let mut salt = [0u8; SALT_LEN];
        rand::rng().fill_bytes(&mut salt);
        let hash = self.derive(password, &salt)?;
        Ok(CredentialRecord {
            user_id,
            salt: hex::encode(salt),
            hash: hex::encode(hash),
            algorithm_tag: self.tag(),
        })
    }
}

impl CredentialRecord {
    pub fn verify(&self, password: &Secret) -> Result<bool, StoreError> {
        let params = HashParams::from_tag(&self.algorithm_tag)?;
        let corrupt = |what: &str| StoreError::Corrupt {
            file: "credentials.ndjson".into(),
            line: 0,
            message: format!("{what} for {}", self.user_id),
        };
        let salt = hex::decode(&self.salt).map_err(|_| corrupt("bad salt"))?;
        let expected = hex::decode(&self.hash).map_err(|_| corrupt("bad hash"))?;
        let actual = params.derive(password, &salt)?;
        Ok(actual.ct_eq(expected.as_slice()).into())
    }
}
