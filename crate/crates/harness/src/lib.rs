//! Adversarial scenarios run against a live gateway over HTTP.
//!
//! Breaches are judged against the policy oracle for the identity the
//! attacker actually held, never by status code alone. The scenarios are
//! application-level stand-ins for classic attack classes:
//!
//! | scenario                | attack class                           |
//! |-------------------------|----------------------------------------|
//! | `credential_stuffing`   | password guessing / spoofing           |
//! | `token_replay`          | replay of an intercepted session       |
//! | `privilege_escalation`  | acting beyond one's role               |
//! | `field_exfiltration`    | spying on data outside a grant         |
//! | `session_hijack`        | forging or guessing session identity   |
//! | `expired_session_reuse` | stale credentials                      |
//!
//! Network-level attacks (jamming, collision, desynchronisation) have no
//! counterpart at this layer and are not modelled.

mod attacks;
pub mod client;
pub mod fixture;
pub mod local;
pub mod report;
pub mod scenario;
pub mod snapshot;

use std::path::PathBuf;

pub use client::{ApiClient, Auth, Exchange};
pub use fixture::Fixture;
pub use local::LocalGateway;
pub use report::Summary;
pub use scenario::{run_scenario, run_weakened_baseline, Judge, Scenario, ScenarioName, ScenarioReport};
pub use snapshot::StoreSnapshot;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Store(#[from] ibac_core::StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a gateway listens, and where its data lives if the harness can see it.
#[derive(Debug, Clone)]
pub struct Target {
    pub base_url: String,
    pub data_dir: Option<PathBuf>,
}

impl Target {
    pub fn remote(addr: &str) -> Self {
        let base_url = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.to_string()
        } else {
            format!("http://{addr}")
        };
        Target {
            base_url,
            data_dir: None,
        }
    }
}

/// Runs all six scenarios against `target`, then the policy-sensitive
/// ones against `weakened` when given.
pub async fn run_all(
    seed: u64,
    fixture: &Fixture,
    target: &Target,
    weakened: Option<&Target>,
) -> Result<Summary, HarnessError> {
    let mut summary = Summary {
        seed,
        reports: Vec::new(),
    };
    for name in ScenarioName::ALL {
        summary
            .reports
            .push(run_scenario(&Scenario::new(name, seed), target, fixture).await?);
    }
    if let Some(weak) = weakened {
        for name in ScenarioName::SENSITIVE {
            summary
                .reports
                .push(run_weakened_baseline(&Scenario::new(name, seed), weak, fixture).await?);
        }
    }
    Ok(summary)
}
