//! The four cooperating agents and the runtime that hosts them.
//!
//! ```text
//! client ──► user interface ──► authentication ──► connection establishment
//!                  │                  ▲                     │
//!                  ▼                  │                     ▼
//!            connection management ───┘◄────────────────────┘
//! ```
//!
//! Each agent is one tokio task draining its own inbox, so it handles one
//! message at a time in arrival order. Agents share nothing but the store
//! and talk only through messages. A reply handle travels with each
//! interaction and is answered by whichever agent finishes it.

mod auth;
mod establish;
mod manage;
mod messages;
mod ui;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tokio::sync::mpsc::{self, UnboundedSender};
use tokio::sync::{OwnedSemaphorePermit, Semaphore};
use tokio::task::JoinHandle;

pub use auth::{AccessPolicyMode, Authenticator};
pub use establish::{ConnectionEstablisher, EstablishError};
pub use manage::{ConnectionManager, VerifiedSession};
pub use messages::{
    AccessFailure, AccessGrant, AccessOp, AccessResult, AgentId, AgentMessage, AuthResult, InvalidInput, LoginResult,
    Payload, RawAccess, RegisterError, Reply, Response,
};
pub use ui::{validate_access, validate_credentials, validate_registration};

use crate::config::Config;
use crate::policy::{Role, User, UserId};
use crate::session::SessionToken;
use crate::store::{CorrelationId, HealthStore, Secret, StoreError};

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub session_ttl_seconds: u64,
    pub auth_fail_delay: Duration,
    /// `None` disables the periodic sweep.
    pub sweep_interval: Option<Duration>,
    pub queue_bound: usize,
    pub access_mode: AccessPolicyMode,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig::from(&Config::default())
    }
}

impl From<&Config> for RuntimeConfig {
    fn from(c: &Config) -> Self {
        RuntimeConfig {
            session_ttl_seconds: c.session_ttl_seconds,
            auth_fail_delay: c.auth_fail_delay(),
            sweep_interval: Some(c.sweep_interval()),
            queue_bound: c.queue_bound.max(1),
            access_mode: AccessPolicyMode {
                unsafe_allow_all: c.unsafe_allow_all,
                patient_owner_read: c.patient_owner_read,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("too many requests in flight")]
    Overloaded,
    #[error("agent {0} is unavailable")]
    Unavailable(AgentId),
}

/// Messages received per agent.
#[derive(Debug, Default)]
pub struct AgentStats {
    received: [AtomicU64; 4],
}

impl AgentStats {
    fn index(agent: AgentId) -> usize {
        AgentId::ALL.iter().position(|a| *a == agent).unwrap_or(0)
    }

    fn record(&self, agent: AgentId) {
        self.received[Self::index(agent)].fetch_add(1, Ordering::Relaxed);
    }

    pub fn received(&self, agent: AgentId) -> u64 {
        self.received[Self::index(agent)].load(Ordering::Relaxed)
    }
}

#[derive(Clone)]
struct Mailboxes {
    ui: UnboundedSender<AgentMessage>,
    auth: UnboundedSender<AgentMessage>,
    establish: UnboundedSender<AgentMessage>,
    manage: UnboundedSender<AgentMessage>,
    stats: Arc<AgentStats>,
}

impl Mailboxes {
    fn sender(&self, agent: AgentId) -> &UnboundedSender<AgentMessage> {
        match agent {
            AgentId::UserInterface => &self.ui,
            AgentId::Authentication => &self.auth,
            AgentId::ConnectionEstablishment => &self.establish,
            AgentId::ConnectionManagement => &self.manage,
        }
    }

    /// Delivers to a peer. If the peer is gone the message, and with it the
    /// caller's reply handle, is dropped; the caller then sees `Unavailable`.
    fn send(&self, agent: AgentId, msg: AgentMessage) {
        if self.sender(agent).send(msg).is_err() {
            tracing::error!(%agent, "routing to stopped agent");
        }
    }
}

/// Sends `body` after `delay` without holding up the sending agent.
fn reply_after<T: Send + 'static>(delay: Duration, reply: Reply<T>, body: T) {
    if delay.is_zero() {
        reply.send(body);
        return;
    }
    tokio::spawn(async move {
        tokio::time::sleep(delay).await;
        reply.send(body);
    });
}

/// A running set of agents.
pub struct AgentRuntime {
    handle: RuntimeHandle,
    agents: Vec<JoinHandle<()>>,
    ticker: Option<JoinHandle<()>>,
}

impl AgentRuntime {
    /// Spawns the four agents (and the sweep ticker) on the current tokio runtime.
    pub fn start(store: Arc<HealthStore>, config: RuntimeConfig) -> Result<Self, StoreError> {
        let (ui_tx, ui_rx) = mpsc::unbounded_channel();
        let (auth_tx, auth_rx) = mpsc::unbounded_channel();
        let (est_tx, est_rx) = mpsc::unbounded_channel();
        let (mgmt_tx, mgmt_rx) = mpsc::unbounded_channel();
        let peers = Mailboxes {
            ui: ui_tx,
            auth: auth_tx,
            establish: est_tx,
            manage: mgmt_tx,
            stats: Arc::new(AgentStats::default()),
        };

        let manager = ConnectionManager::new(Arc::clone(&store))?;
        let authenticator = Arc::new(Authenticator::new(Arc::clone(&store), config.access_mode));
        let establisher = ConnectionEstablisher::new(Arc::clone(&store), config.session_ttl_seconds);

        let agents = vec![
            tokio::spawn(ui::run(ui_rx, peers.clone())),
            tokio::spawn(auth::run(authenticator, auth_rx, peers.clone(), config.auth_fail_delay)),
            tokio::spawn(establish::run(
                establisher,
                est_rx,
                peers.clone(),
                config.auth_fail_delay,
            )),
            tokio::spawn(manage::run(manager, mgmt_rx, peers.clone())),
        ];
        let ticker = config.sweep_interval.map(|every| {
            let manage = peers.manage.clone();
            tokio::spawn(async move {
                let mut ticker = tokio::time::interval(every);
                ticker.tick().await;
                loop {
                    ticker.tick().await;
                    let msg =
                        AgentMessage::new(CorrelationId::system(), Payload::ExpireSweep { now: None, reply: None });
                    if manage.send(msg).is_err() {
                        break;
                    }
                }
            })
        });

        Ok(AgentRuntime {
            handle: RuntimeHandle {
                peers,
                permits: Arc::new(Semaphore::new(config.queue_bound)),
            },
            agents,
            ticker,
        })
    }

    pub fn handle(&self) -> RuntimeHandle {
        self.handle.clone()
    }

    /// Stops every agent after it drains what is already queued.
    pub async fn shutdown(self) {
        if let Some(ticker) = self.ticker {
            ticker.abort();
        }
        for agent in AgentId::ALL {
            let _ = self
                .handle
                .peers
                .sender(agent)
                .send(AgentMessage::new(CorrelationId::system(), Payload::Shutdown));
        }
        for task in self.agents {
            let _ = task.await;
        }
    }
}

/// Cloneable client-side entry point. Every call is one interaction with
/// its own correlation id, and its response carries that id back.
#[derive(Clone)]
pub struct RuntimeHandle {
    peers: Mailboxes,
    permits: Arc<Semaphore>,
}

impl RuntimeHandle {
    pub fn stats(&self) -> &AgentStats {
        &self.peers.stats
    }

    fn admit(&self) -> Result<OwnedSemaphorePermit, RuntimeError> {
        Arc::clone(&self.permits)
            .try_acquire_owned()
            .map_err(|_| RuntimeError::Overloaded)
    }

    async fn call<T>(
        &self,
        to: AgentId,
        correlation_id: CorrelationId,
        build: impl FnOnce(Reply<T>) -> Payload,
    ) -> Result<Response<T>, RuntimeError> {
        let _permit = self.admit()?;
        let (reply, rx) = Reply::channel(correlation_id.clone());
        let msg = AgentMessage::new(correlation_id, build(reply));
        if self.peers.sender(to).send(msg).is_err() {
            return Err(RuntimeError::Unavailable(to));
        }
        rx.await.map_err(|_| RuntimeError::Unavailable(to))
    }

    pub async fn register(
        &self,
        correlation_id: CorrelationId,
        username: &str,
        password: Secret,
        role: Role,
    ) -> Result<Response<Result<User, RegisterError>>, RuntimeError> {
        let username = username.to_string();
        self.call(AgentId::UserInterface, correlation_id, |reply| Payload::RegisterUser {
            username,
            password,
            role,
            reply,
        })
        .await
    }

    pub async fn login(
        &self,
        correlation_id: CorrelationId,
        username: &str,
        password: Secret,
    ) -> Result<Response<LoginResult>, RuntimeError> {
        let username = username.to_string();
        self.call(AgentId::UserInterface, correlation_id, |reply| Payload::LoginRequest {
            username,
            password,
            reply,
        })
        .await
    }

    pub async fn access(
        &self,
        correlation_id: CorrelationId,
        token: SessionToken,
        op: RawAccess,
    ) -> Result<Response<AccessResult>, RuntimeError> {
        self.call(AgentId::UserInterface, correlation_id, |reply| {
            Payload::AccessRequestMsg { token, op, reply }
        })
        .await
    }

    pub async fn logout(
        &self,
        correlation_id: CorrelationId,
        token: SessionToken,
    ) -> Result<Response<()>, RuntimeError> {
        self.call(AgentId::UserInterface, correlation_id, |reply| Payload::RevokeSession {
            token,
            reply,
        })
        .await
    }

    /// Asks connection management whether `token` is valid at `now`
    /// (the runtime clock when `None`).
    pub async fn check(&self, token: SessionToken, now: Option<i64>) -> Result<Option<UserId>, RuntimeError> {
        self.call(AgentId::ConnectionManagement, CorrelationId::new(), |reply| {
            Payload::CheckSession { token, now, reply }
        })
        .await
        .map(|r| r.body)
    }

    pub async fn sweep(&self, now: Option<i64>) -> Result<usize, RuntimeError> {
        self.call(AgentId::ConnectionManagement, CorrelationId::system(), |reply| {
            Payload::ExpireSweep {
                now,
                reply: Some(reply),
            }
        })
        .await
        .map(|r| r.body)
    }
}
