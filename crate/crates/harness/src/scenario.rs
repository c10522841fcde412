use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use ibac_core::policy::{
    oracle_evaluate, AccessDecision, AccessMode, AccessReason, AccessRequest, FieldId, FieldSet, FieldValue, FileId,
    PolicyTuple, Role, User,
};
use ibac_core::store::AuditEvent;

use crate::attacks;
use crate::client::{ApiClient, Auth, Exchange};
use crate::snapshot::StoreSnapshot;
use crate::{Fixture, HarnessError, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    CredentialStuffing,
    TokenReplay,
    PrivilegeEscalation,
    FieldExfiltration,
    SessionHijack,
    ExpiredSessionReuse,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::CredentialStuffing,
        ScenarioName::TokenReplay,
        ScenarioName::PrivilegeEscalation,
        ScenarioName::FieldExfiltration,
        ScenarioName::SessionHijack,
        ScenarioName::ExpiredSessionReuse,
    ];

    /// Scenarios that must find a breach on an allow-all gateway.
    pub const SENSITIVE: [ScenarioName; 2] = [ScenarioName::FieldExfiltration, ScenarioName::PrivilegeEscalation];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::CredentialStuffing => "credential_stuffing",
            ScenarioName::TokenReplay => "token_replay",
            ScenarioName::PrivilegeEscalation => "privilege_escalation",
            ScenarioName::FieldExfiltration => "field_exfiltration",
            ScenarioName::SessionHijack => "session_hijack",
            ScenarioName::ExpiredSessionReuse => "expired_session_reuse",
        }
    }

    fn index(self) -> u64 {
        ScenarioName::ALL.iter().position(|n| *n == self).unwrap_or(0) as u64
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| HarnessError::UnknownScenario(s.to_string()))
    }
}

/// A scenario and its parameters. Everything random derives from `seed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub params: BTreeMap<String, String>,
}

impl Scenario {
    pub fn new(name: ScenarioName, seed: u64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("seed".into(), seed.to_string());
        Scenario { name, params }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn seed(&self) -> u64 {
        self.param("seed", 0)
    }

    pub fn param<T: FromStr>(&self, key: &str, default: T) -> T {
        self.params.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    }

    pub fn text_param(&self, key: &str, default: &str) -> String {
        self.params.get(key).cloned().unwrap_or_else(|| default.to_string())
    }

    pub(crate) fn rng(&self) -> StdRng {
        StdRng::seed_from_u64(self.seed().wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.name.index())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: String,
    pub status: u16,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    /// Run against an allow-all gateway.
    pub weakened: bool,
    pub attempts: u64,
    pub successes: u64,
    pub transcript: Vec<TranscriptEntry>,
    pub audit_delta: Vec<AuditEvent>,
    /// Whether the store matched its pre-run snapshot afterwards; `None`
    /// when the target's data directory is not visible to the harness.
    pub state_restored: Option<bool>,
}

impl ScenarioReport {
    /// What a correct harness expects for this run.
    pub fn expected_breach(&self) -> bool {
        self.weakened && ScenarioName::SENSITIVE.contains(&self.scenario.name)
    }

    pub fn passed(&self) -> bool {
        let breaches_ok = if self.expected_breach() {
            self.successes >= 1
        } else {
            self.successes == 0
        };
        breaches_ok && self.state_restored != Some(false)
    }
}

/// Decides breaches by comparing responses with [`oracle_evaluate`] for the
/// identity actually presented.
pub struct Judge {
    tuples: Vec<PolicyTuple>,
}

impl Judge {
    pub fn new(fixture: &Fixture) -> Self {
        Judge {
            tuples: fixture.tuples(),
        }
    }

    pub fn decide(&self, who: Option<&User>, mode: AccessMode, file: &FileId, requested: &FieldSet) -> AccessDecision {
        match who {
            None => AccessDecision::deny(AccessReason::NotAuthenticated),
            Some(user) => {
                let request = AccessRequest {
                    user_id: user.user_id.clone(),
                    mode,
                    file_id: file.clone(),
                    requested_fields: requested.clone(),
                };
                oracle_evaluate(&request, user, &self.tuples)
            }
        }
    }

    /// A read exposes too much if it succeeds where the oracle denies, or
    /// returns any field outside the oracle's grant.
    pub fn read_breach(&self, who: Option<&User>, file: &FileId, requested: &FieldSet, ex: &Exchange) -> bool {
        let keys = ex.value_keys();
        if !ex.is_success() {
            return !keys.is_empty();
        }
        let decision = self.decide(who, AccessMode::Read, file, requested);
        if !decision.is_granted() {
            return true;
        }
        keys.iter().any(|k| match k.parse::<FieldId>() {
            Ok(f) => !decision.granted_fields().contains(f),
            Err(_) => true,
        })
    }

    /// A write succeeded although some field in it is not granted.
    pub fn write_breach(&self, who: Option<&User>, file: &FileId, fields: &FieldSet, ex: &Exchange) -> bool {
        if !ex.is_success() {
            return false;
        }
        let decision = self.decide(who, AccessMode::Write, file, fields);
        !decision.is_granted() || !fields.is_subset(decision.granted_fields())
    }

    pub fn audit_breach(&self, who: Option<&User>, ex: &Exchange) -> bool {
        ex.is_success() && who.is_none_or(|u| u.role != Role::Admin)
    }

    /// Files on which `role` holds a `mode` grant, with the granted fields.
    pub fn grants(&self, role: Role, mode: AccessMode) -> Vec<(FileId, FieldSet)> {
        self.tuples
            .iter()
            .filter(|t| t.role == role && t.mode == mode)
            .map(|t| (t.file_id.clone(), t.fields.clone()))
            .collect()
    }
}

/// Attempts, breaches and transcript accumulated by one attack.
#[derive(Debug, Default)]
pub struct Tally {
    pub attempts: u64,
    pub successes: u64,
    pub transcript: Vec<TranscriptEntry>,
}

impl Tally {
    pub fn attempt(&mut self, request: impl Into<String>, ex: &Exchange, breach: bool) {
        self.attempts += 1;
        if breach {
            self.successes += 1;
            tracing::warn!(request_id = %ex.correlation_id, status = ex.status, "breach observed");
        }
        self.transcript.push(TranscriptEntry {
            request: request.into(),
            status: ex.status,
        });
    }

    /// Records a preparatory request that is not itself an attack.
    pub fn setup(&mut self, request: impl Into<String>, ex: &Exchange) {
        self.transcript.push(TranscriptEntry {
            request: format!("[setup] {}", request.into()),
            status: ex.status,
        });
    }
}

pub(crate) struct Ctx<'a> {
    pub scenario: &'a Scenario,
    pub fixture: &'a Fixture,
    pub client: &'a ApiClient,
    pub judge: Judge,
    pub rng: StdRng,
    pub tally: Tally,
}

impl Ctx<'_> {
    pub fn user(&self, username: &str) -> Result<User, HarnessError> {
        self.fixture
            .user(username)
            .cloned()
            .ok_or_else(|| HarnessError::Fixture(format!("fixture has no user `{username}`")))
    }
}

async fn audit_cursor(client: &ApiClient, fixture: &Fixture) -> Result<u64, HarnessError> {
    let admin = client.session(&fixture.custodian, &fixture.password).await?;
    let all = client.audit(Auth::Bearer(&admin.token), 1).await?;
    client.logout(Auth::Bearer(&admin.token)).await?;
    let last = all
        .body
        .as_array()
        .and_then(|a| a.last())
        .and_then(|e| e["sequence"].as_u64())
        .unwrap_or(0);
    Ok(last + 1)
}

async fn audit_since(client: &ApiClient, fixture: &Fixture, from: u64) -> Result<Vec<AuditEvent>, HarnessError> {
    let admin = client.session(&fixture.custodian, &fixture.password).await?;
    let ex = client.audit(Auth::Bearer(&admin.token), from).await?;
    client.logout(Auth::Bearer(&admin.token)).await?;
    serde_json::from_value(ex.body).map_err(|e| HarnessError::Fixture(format!("audit response: {e}")))
}

/// Puts every fixture record back through the API, as the custodian.
pub async fn restore(client: &ApiClient, fixture: &Fixture) -> Result<(), HarnessError> {
    let mut admin = client.session(&fixture.custodian, &fixture.password).await?;
    for rec in &fixture.records {
        client.refresh(&mut admin, &fixture.password).await?;
        let current = client.read(Auth::Bearer(&admin.token), &rec.file_id, None).await?;
        let values: Option<BTreeMap<FieldId, FieldValue>> = current
            .body
            .get("values")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok());
        if current.status == 200 && values.as_ref() == Some(&rec.values) {
            continue;
        }
        let ex = client
            .write(
                Auth::Bearer(&admin.token),
                &rec.file_id,
                rec.values.iter().map(|(f, v)| (*f, v.clone())),
            )
            .await?;
        if ex.status != 200 {
            return Err(HarnessError::Fixture(format!(
                "restoring {} failed with {}",
                rec.file_id, ex.status
            )));
        }
    }
    client.logout(Auth::Bearer(&admin.token)).await?;
    Ok(())
}

async fn execute(
    scenario: &Scenario,
    target: &Target,
    fixture: &Fixture,
    weakened: bool,
) -> Result<ScenarioReport, HarnessError> {
    let prefix = format!(
        "{}-{}{}",
        scenario.name,
        scenario.seed(),
        if weakened { "-weak" } else { "" }
    );
    let client = ApiClient::new(&target.base_url, &prefix);
    client.health().await?;
    let before = target.data_dir.as_deref().map(StoreSnapshot::take).transpose()?;
    let cursor = audit_cursor(&client, fixture).await?;

    let mut ctx = Ctx {
        scenario,
        fixture,
        client: &client,
        judge: Judge::new(fixture),
        rng: scenario.rng(),
        tally: Tally::default(),
    };
    tracing::info!(scenario = %scenario.name, weakened, "running");
    match scenario.name {
        ScenarioName::CredentialStuffing => attacks::credential_stuffing(&mut ctx).await?,
        ScenarioName::TokenReplay => attacks::token_replay(&mut ctx).await?,
        ScenarioName::PrivilegeEscalation => attacks::privilege_escalation(&mut ctx).await?,
        ScenarioName::FieldExfiltration => attacks::field_exfiltration(&mut ctx).await?,
        ScenarioName::SessionHijack => attacks::session_hijack(&mut ctx).await?,
        ScenarioName::ExpiredSessionReuse => attacks::expired_session_reuse(&mut ctx).await?,
    }
    let tally = ctx.tally;

    restore(&client, fixture).await?;
    let audit_delta = audit_since(&client, fixture, cursor).await?;
    let state_restored = match (before, target.data_dir.as_deref()) {
        (Some(before), Some(dir)) => Some(StoreSnapshot::take(dir)? == before),
        _ => None,
    };
    Ok(ScenarioReport {
        scenario: scenario.clone(),
        weakened,
        attempts: tally.attempts,
        successes: tally.successes,
        transcript: tally.transcript,
        audit_delta,
        state_restored,
    })
}

/// Runs one scenario against a correctly configured gateway.
pub async fn run_scenario(
    scenario: &Scenario,
    target: &Target,
    fixture: &Fixture,
) -> Result<ScenarioReport, HarnessError> {
    execute(scenario, target, fixture, false).await
}

/// Runs one scenario against a gateway started with policy checks disabled.
pub async fn run_weakened_baseline(
    scenario: &Scenario,
    target: &Target,
    fixture: &Fixture,
) -> Result<ScenarioReport, HarnessError> {
    execute(scenario, target, fixture, true).await
}
