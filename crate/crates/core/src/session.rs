use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::policy::UserId;

/// 32 random bytes, hex-encoded (64 lowercase hex chars).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionToken(String);

impl SessionToken {
    pub const BYTES: usize = 32;

    /// Draws a fresh token from the thread-local CSPRNG.
    pub fn generate() -> Self {
        let mut bytes = [0u8; Self::BYTES];
        rand::rng().fill_bytes(&mut bytes);
        SessionToken(hex::encode(bytes))
    }

    /// Accepts any string; unknown tokens simply fail the session check.
    pub fn from_raw(raw: impl Into<String>) -> Self {
        SessionToken(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Short prefix suitable for logs and audit details.
    pub fn fingerprint(&self) -> &str {
        let end = self.0.char_indices().nth(8).map_or(self.0.len(), |(i, _)| i);
        &self.0[..end]
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionToken({}…)", self.fingerprint())
    }
}

/// An established connection between a user and the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: SessionToken,
    pub user_id: UserId,
    pub established_at: i64,
    pub expires_at: i64,
    #[serde(default)]
    pub revoked: bool,
}

impl Session {
    /// `ttl_seconds` is clamped to at least 1 so that `expires_at > established_at`.
    pub fn new(user_id: UserId, now: i64, ttl_seconds: u64) -> Self {
        let ttl = ttl_seconds.max(1) as i64;
        Session {
            token: SessionToken::generate(),
            user_id,
            established_at: now,
            expires_at: now.saturating_add(ttl),
            revoked: false,
        }
    }

    /// Expiry is exclusive: a session is dead at `expires_at`.
    pub fn is_valid_at(&self, now: i64) -> bool {
        !self.revoked && now < self.expires_at
    }

    pub fn is_expired_at(&self, now: i64) -> bool {
        self.expires_at <= now
    }
}
