//! Core of the IBAC health-record gateway: policy evaluation, the
//! health-record store, and the four-agent runtime that mediates access.

pub mod agents;
pub mod clock;
pub mod config;
pub mod policy;
pub mod session;
pub mod store;

pub use agents::{AgentRuntime, RuntimeConfig, RuntimeHandle};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::Config;
pub use session::{Session, SessionToken};
pub use store::{CorrelationId, HealthStore, StoreError};
