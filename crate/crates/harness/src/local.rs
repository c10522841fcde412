use std::fs;
use std::path::Path;

use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use ibac_core::store::{CREDENTIALS_FILE, POLICY_FILE, RECORDS_FILE, USERS_FILE};
use ibac_core::Config;
use ibac_gateway::Gateway;

use crate::fixture::SCENARIO_FILE;
use crate::{HarnessError, Target};

/// An in-process gateway serving a private copy of a fixture directory.
pub struct LocalGateway {
    target: Target,
    dir: tempfile::TempDir,
    stop: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl LocalGateway {
    /// Launches on an ephemeral loopback port. Settings come from the
    /// fixture's `scenario.cfg`, then from `overrides`.
    pub async fn launch(fixture_dir: &Path, overrides: &[(&str, &str)]) -> Result<Self, HarnessError> {
        let dir = tempfile::tempdir()?;
        for name in [USERS_FILE, CREDENTIALS_FILE, RECORDS_FILE, POLICY_FILE, SCENARIO_FILE] {
            let src = fixture_dir.join(name);
            if src.exists() {
                fs::copy(&src, dir.path().join(name))?;
            }
        }
        let mut config = Config::default();
        let cfg_text = fs::read_to_string(dir.path().join(SCENARIO_FILE)).unwrap_or_default();
        config
            .apply_text(&cfg_text, true)
            .map_err(|e| HarnessError::Fixture(e.to_string()))?;
        for (k, v) in overrides {
            config.set(k, v).map_err(|e| HarnessError::Fixture(e.to_string()))?;
        }
        config.data_dir = dir.path().to_path_buf();

        let gateway = Gateway::open(&config).map_err(|e| HarnessError::Fixture(e.to_string()))?;
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let (stop, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(gateway.serve(listener, async {
            let _ = rx.await;
        }));
        Ok(LocalGateway {
            target: Target {
                base_url: format!("http://{addr}"),
                data_dir: Some(dir.path().to_path_buf()),
            },
            dir,
            stop,
            task,
        })
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// Stops the gateway and hands back its data directory.
    pub async fn stop(self) -> tempfile::TempDir {
        let _ = self.stop.send(());
        let _ = self.task.await;
        self.dir
    }
}
