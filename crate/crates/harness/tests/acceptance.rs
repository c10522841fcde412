//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use ibac_core::agents::{AgentRuntime, AuthResult, RuntimeConfig};
use ibac_core::policy::{
    evaluate_access, oracle_evaluate, AccessMode, AccessRequest, FieldId, FieldSet, FieldValue, FileId, PolicyTable,
    PolicyTuple, Role, User,
};
use ibac_core::store::{AuditKind, HashParams, NewAuditEvent, Secret, StoreOptions, AUDIT_FILE};
use ibac_core::{Clock, CorrelationId, HealthStore, ManualClock, SessionToken};
use ibac_harness::client::{ApiClient, Auth, Login};
use ibac_harness::{run_all, Fixture, Judge, LocalGateway, ScenarioName, StoreSnapshot};

const DURABILITY_CHILD: &str = "IBAC_ACCEPTANCE_DURABILITY_CHILD";

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    if let Ok(dir) = std::env::var(DURABILITY_CHILD) {
        durability_child(Path::new(&dir));
        return;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap();
    type Check<'a> = Box<dyn FnOnce() -> Verdict + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("oracle equivalence (exhaustive)", Box::new(oracle_equivalence)),
        (
            "connection gate over 50 random users",
            Box::new(|| rt.block_on(connection_gate(50, 0x5eed))),
        ),
        (
            "no-bypass fuzz, 1000 random tokens",
            Box::new(|| rt.block_on(no_bypass_fuzz(1000, 0xf022))),
        ),
        (
            "redaction soundness and strict write",
            Box::new(|| rt.block_on(redaction_soundness(1000, 0x0ddba11))),
        ),
        (
            "audit completeness",
            Box::new(|| rt.block_on(audit_completeness(400, 0xa0d17))),
        ),
        ("session lifecycle", Box::new(|| rt.block_on(session_lifecycle(0x11fe)))),
        ("threat harness", Box::new(|| rt.block_on(threat_harness(0x7157)))),
        ("store durability under kill", Box::new(store_durability)),
    ];

    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let verdict =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  {name:<40} {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<40} {why} [{secs:.1}s]");
            }
        }
    }
    std::io::stdout().flush().ok();
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown".into())
}

/// Correlation ids made of letters only, so numeric field values cannot
/// appear in them by accident.
fn letters(mut n: usize) -> String {
    let mut s = String::new();
    loop {
        s.insert(0, (b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            return s;
        }
    }
}

/// Whole-token occurrence: `age` inside `message` does not count.
fn mentions(haystack: &str, needle: &str) -> bool {
    let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.');
    haystack
        .match_indices(needle)
        .any(|(at, _)| !word(haystack[..at].chars().next_back()) && !word(haystack[at + needle.len()..].chars().next()))
}

fn fast_store(dir: &Path) -> HealthStore {
    HealthStore::open(
        dir,
        StoreOptions {
            hash: HashParams::fast(),
            sync: false,
        },
    )
    .unwrap()
}

fn fixture_dir(fixture: &Fixture) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fixture.write(dir.path()).unwrap();
    dir
}

fn read_audit(dir: &Path) -> Vec<ibac_core::store::AuditEvent> {
    fast_store(dir).read_audit(1).unwrap()
}

fn body_fields(body: &Value) -> BTreeSet<FieldId> {
    body["values"]
        .as_object()
        .map(|m| m.keys().filter_map(|k| k.parse().ok()).collect())
        .unwrap_or_default()
}

// Every table of at most two raw tuples over 3 roles x 2 modes x 2 files,
// field sets drawn from all 16 subsets of a 4-field sub-catalog plus the
// wildcard, against every request over the same space. Pairs cover every
// interaction between keys because evaluation reads a single key.
fn oracle_equivalence() -> Verdict {
    let roles = [Role::Patient, Role::Physician, Role::RecordsOfficer];
    let files = [FileId::new("f1").unwrap(), FileId::new("f2").unwrap()];
    let sub = [FieldId::Age, FieldId::BloodGroup, FieldId::HeartRate, FieldId::Location];
    let mut sets: Vec<FieldSet> = (0u8..16)
        .map(|mask| {
            FieldSet::of(
                sub.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, f)| *f),
            )
        })
        .collect();
    sets.push(FieldSet::Wildcard);

    let mut singles = Vec::new();
    for role in roles {
        for mode in [AccessMode::Read, AccessMode::Write] {
            for file in &files {
                for set in &sets {
                    singles.push(PolicyTuple::new(role, mode, file.clone(), set.clone()));
                }
            }
        }
    }
    let users: Vec<User> = roles
        .iter()
        .map(|r| User::new(&format!("u_{r}"), *r).unwrap())
        .collect();
    let mut requests = Vec::new();
    for user in &users {
        for mode in [AccessMode::Read, AccessMode::Write] {
            for file in &files {
                for set in &sets {
                    requests.push((
                        user,
                        AccessRequest {
                            user_id: user.user_id.clone(),
                            mode,
                            file_id: file.clone(),
                            requested_fields: set.clone(),
                        },
                    ));
                }
            }
        }
    }

    let mut tables: Vec<Vec<PolicyTuple>> = vec![Vec::new()];
    tables.extend(singles.iter().map(|t| vec![t.clone()]));
    for a in &singles {
        for b in &singles {
            tables.push(vec![a.clone(), b.clone()]);
        }
    }

    let started = Instant::now();
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4);
    let chunk = tables.len().div_ceil(threads);
    let (cases, mismatches) = std::thread::scope(|s| {
        let handles: Vec<_> = tables
            .chunks(chunk)
            .map(|part| {
                let requests = &requests;
                s.spawn(move || {
                    let (mut cases, mut bad) = (0u64, 0u64);
                    for raw in part {
                        let table: PolicyTable = raw.iter().cloned().collect();
                        for (user, req) in requests {
                            cases += 1;
                            if evaluate_access(req, user, &table) != oracle_evaluate(req, user, raw) {
                                bad += 1;
                            }
                        }
                    }
                    (cases, bad)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    });
    let secs = started.elapsed().as_secs_f64();
    ensure!(mismatches == 0, "{mismatches} mismatches in {cases} cases");
    ensure!(secs < 60.0, "took {secs:.1}s, limit 60s");
    Ok(format!(
        "{} tables x {} requests = {cases} cases, 0 mismatches",
        tables.len(),
        requests.len()
    ))
}

async fn connection_gate(n_users: usize, seed: u64) -> Verdict {
    let mut rng = StdRng::seed_from_u64(seed);
    let (connected, users) = loop {
        let connected: BTreeSet<Role> = Role::ALL.into_iter().filter(|_| rng.random_bool(0.5)).collect();
        let users: Vec<(String, Role)> = (0..n_users)
            .map(|i| (format!("user_{i}"), *Role::ALL.choose(&mut rng).unwrap()))
            .collect();
        let with = users.iter().filter(|(_, r)| connected.contains(r)).count();
        if with > 0 && with < n_users {
            break (connected, users);
        }
    };

    let dir = tempfile::tempdir().unwrap();
    {
        let store = fast_store(dir.path());
        for (name, role) in &users {
            store
                .put_user(User::new(name, *role).unwrap(), &"pw".into(), &CorrelationId::system())
                .unwrap();
        }
        let mut table = PolicyTable::default();
        for role in &connected {
            for _ in 0..rng.random_range(1..=3) {
                let file = FileId::new(format!("rec{}", rng.random_range(0..5))).unwrap();
                let mode = if rng.random_bool(0.5) {
                    AccessMode::Read
                } else {
                    AccessMode::Write
                };
                let field = *FieldId::CATALOG.choose(&mut rng).unwrap();
                table.insert(PolicyTuple::new(*role, mode, file, FieldSet::of([field])));
            }
        }
        store.set_policy_table(&table).unwrap();
    }
    let gw = LocalGateway::launch(dir.path(), &[]).await.map_err(|e| e.to_string())?;
    let client = ApiClient::new(&gw.target().base_url, "gate");
    let results: Vec<_> = stream::iter(users.iter())
        .map(|(name, _)| async { client.login(name, "pw").await })
        .buffered(16)
        .collect()
        .await;
    let data = gw.stop().await;
    let audit = read_audit(data.path());
    let kinds: HashMap<String, Vec<AuditKind>> = audit.iter().fold(HashMap::new(), |mut m, e| {
        m.entry(e.correlation_id.to_string()).or_default().push(e.event_kind);
        m
    });

    let (mut established, mut refused) = (0, 0);
    for ((name, role), ex) in users.iter().zip(results) {
        let ex = ex.map_err(|e| e.to_string())?;
        let events = kinds.get(&ex.correlation_id).cloned().unwrap_or_default();
        if connected.contains(role) {
            ensure!(ex.status == 200, "{name} ({role}) has tuples but got {}", ex.status);
            ensure!(
                events.contains(&AuditKind::ConnectEstablish),
                "{name}: no connect_establish"
            );
            established += 1;
        } else {
            ensure!(ex.status == 401, "{name} ({role}) has no tuples but got {}", ex.status);
            ensure!(events.contains(&AuditKind::ConnectRefuse), "{name}: no connect_refuse");
            ensure!(
                !events.contains(&AuditKind::ConnectEstablish),
                "{name}: session established"
            );
            refused += 1;
        }
    }
    Ok(format!(
        "{established}/{established} established, {refused}/{refused} refused"
    ))
}

async fn no_bypass_fuzz(n: usize, seed: u64) -> Verdict {
    let fixture = Fixture::generate(seed);
    let dir = fixture_dir(&fixture);
    let gw = LocalGateway::launch(dir.path(), &[]).await.map_err(|e| e.to_string())?;
    let http = reqwest::Client::new();
    let mut rng = StdRng::seed_from_u64(seed);

    let mut forbidden: Vec<String> = FieldId::CATALOG.iter().map(|f| f.name().to_string()).collect();
    for rec in &fixture.records {
        for v in rec.values.values() {
            forbidden.push(match v {
                FieldValue::Number(x) => serde_json::to_string(x).unwrap(),
                FieldValue::Text(t) => t.clone(),
            });
        }
    }

    let mut unauthorized = 0;
    for i in 0..n {
        let token = SessionToken::generate();
        let file = &fixture.records.choose(&mut rng).unwrap().file_id;
        let cid = format!("fuzz-{}", letters(i));
        let url = if rng.random_bool(0.5) {
            format!("{}/api/records/{file}", gw.target().base_url)
        } else {
            let f = FieldId::CATALOG.choose(&mut rng).unwrap();
            format!("{}/api/records/{file}?fields={}", gw.target().base_url, f.name())
        };
        let resp = http
            .get(url)
            .bearer_auth(token.as_str())
            .header(ibac_gateway::CORRELATION_HEADER, &cid)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(|e| e.to_string())?;
        let scrubbed = text.replace(&cid, "");
        ensure!(status == 401, "request {i} returned {status}");
        let body: Value = serde_json::from_str(&text).map_err(|e| format!("request {i}: {e}"))?;
        let keys: Vec<&str> = body
            .as_object()
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default();
        ensure!(
            keys == ["code", "correlation_id", "message"],
            "request {i} body keys {keys:?}"
        );
        ensure!(
            body["message"] == "invalid credentials",
            "request {i} message {}",
            body["message"]
        );
        if let Some(leak) = forbidden.iter().find(|v| mentions(&scrubbed, v)) {
            return Err(format!("request {i} body mentions `{leak}`: {text}"));
        }
        unauthorized += 1;
    }
    gw.stop().await;
    Ok(format!("{unauthorized}/{n} x 401, 0 bodies with field names or values"))
}

struct Sessions<'a> {
    client: &'a ApiClient,
    password: String,
    live: HashMap<String, Login>,
}

impl<'a> Sessions<'a> {
    fn new(client: &'a ApiClient, fixture: &Fixture) -> Self {
        Sessions {
            client,
            password: fixture.password.clone(),
            live: HashMap::new(),
        }
    }

    async fn token(&mut self, user: &str) -> Result<String, String> {
        match self.live.get_mut(user) {
            Some(login) => self
                .client
                .refresh(login, &self.password)
                .await
                .map_err(|e| e.to_string())?,
            None => {
                let login = self
                    .client
                    .session(user, &self.password)
                    .await
                    .map_err(|e| e.to_string())?;
                self.live.insert(user.to_string(), login);
            }
        }
        Ok(self.live[user].token.clone())
    }
}

fn random_subset(rng: &mut StdRng) -> Vec<FieldId> {
    loop {
        let fs: Vec<FieldId> = FieldId::CATALOG.into_iter().filter(|_| rng.random_bool(0.3)).collect();
        if !fs.is_empty() {
            return fs;
        }
    }
}

async fn redaction_soundness(n: usize, seed: u64) -> Verdict {
    let mut fixture = Fixture::generate(seed);
    let rec1 = FileId::new("rec1").unwrap();
    fixture.policies.insert(PolicyTuple::new(
        Role::Physician,
        AccessMode::Write,
        rec1.clone(),
        FieldSet::of([FieldId::HeartRate, FieldId::BloodPressure]),
    ));
    let dir = fixture_dir(&fixture);
    let gw = LocalGateway::launch(dir.path(), &[]).await.map_err(|e| e.to_string())?;
    let data_dir = gw.target().data_dir.clone().unwrap();
    let client = ApiClient::new(&gw.target().base_url, "redact");
    let judge = Judge::new(&fixture);
    let mut sessions = Sessions::new(&client, &fixture);
    let mut rng = StdRng::seed_from_u64(seed);

    let mut checked = 0;
    while checked < n {
        let user = fixture.users.choose(&mut rng).unwrap().clone();
        let rec = fixture.records.choose(&mut rng).unwrap();
        let fields = if rng.random_bool(0.1) {
            None
        } else {
            Some(random_subset(&mut rng))
        };
        let requested = fields
            .as_ref()
            .map_or(FieldSet::Wildcard, |f| FieldSet::of(f.iter().copied()));
        let decision = judge.decide(Some(&user), AccessMode::Read, &rec.file_id, &requested);
        if !decision.is_granted() {
            continue;
        }
        let token = sessions.token(&user.username).await?;
        let ex = client
            .read(Auth::Bearer(&token), &rec.file_id, fields.as_deref())
            .await
            .map_err(|e| e.to_string())?;
        ensure!(
            ex.status == 200,
            "{} reading {} got {}",
            user.username,
            rec.file_id,
            ex.status
        );
        let got = FieldSet::of(body_fields(&ex.body));
        ensure!(
            got.is_subset(decision.granted_fields()),
            "{} got {got} but oracle grants {}",
            user.username,
            decision.granted_fields()
        );
        let expected = FieldSet::of(decision.granted_fields().iter().filter(|f| rec.values.contains_key(f)));
        ensure!(got == expected, "{} got {got}, expected {expected}", user.username);
        checked += 1;
    }

    let writers: Vec<User> = fixture.users_with_role(Role::Physician).cloned().collect();
    let write_grants = judge.grants(Role::Physician, AccessMode::Write);
    let (mut rejected, mut partial) = (0, 0);
    for i in 0..100 {
        let user = writers.choose(&mut rng).unwrap();
        let (file, granted) = write_grants.choose(&mut rng).unwrap();
        let mut body: Vec<(FieldId, FieldValue)> = granted
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .map(|f| (f, FieldValue::Text(format!("w{i}"))))
            .collect();
        let outside: Vec<FieldId> = FieldId::CATALOG.into_iter().filter(|f| !granted.contains(*f)).collect();
        body.push((*outside.choose(&mut rng).unwrap(), FieldValue::Text(format!("x{i}"))));

        let before = StoreSnapshot::take(&data_dir).map_err(|e| e.to_string())?;
        let token = sessions.token(&user.username).await?;
        let ex = client
            .write(Auth::Bearer(&token), file, body)
            .await
            .map_err(|e| e.to_string())?;
        ensure!(ex.status == 403, "strict write {i} returned {}", ex.status);
        rejected += 1;
        if StoreSnapshot::take(&data_dir).map_err(|e| e.to_string())?.records != before.records {
            partial += 1;
        }
    }
    let token = sessions.token(&writers[0].username).await?;
    let ex = client
        .write(
            Auth::Bearer(&token),
            &rec1,
            [(FieldId::HeartRate, FieldValue::Number(61.0))],
        )
        .await
        .map_err(|e| e.to_string())?;
    ensure!(ex.status == 200, "granted write returned {}", ex.status);
    gw.stop().await;
    ensure!(partial == 0, "{partial} partial writes after 403");
    Ok(format!(
        "{checked} granted reads within oracle grant; {rejected} strict writes rejected, 0 partial"
    ))
}

async fn audit_completeness(steps: usize, seed: u64) -> Verdict {
    let fixture = Fixture::generate(seed);
    let dir = fixture_dir(&fixture);
    let gw = LocalGateway::launch(dir.path(), &[]).await.map_err(|e| e.to_string())?;
    let client = ApiClient::new(&gw.target().base_url, "trail");
    let mut sessions = Sessions::new(&client, &fixture);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut reached: BTreeSet<String> = BTreeSet::new();
    let mut not_reached: BTreeSet<String> = BTreeSet::new();
    let mut dead_tokens: Vec<String> = Vec::new();

    for _ in 0..steps {
        let user = fixture.users.choose(&mut rng).unwrap().clone();
        let rec = fixture.records.choose(&mut rng).unwrap().clone();
        let missing = FileId::new("rec99").unwrap();
        let ex = match rng.random_range(0..9) {
            0 | 1 => {
                let token = sessions.token(&user.username).await?;
                let fields = random_subset(&mut rng);
                client.read(Auth::Bearer(&token), &rec.file_id, Some(&fields)).await
            }
            2 => {
                let token = sessions.token(&user.username).await?;
                client.read(Auth::Bearer(&token), &missing, None).await
            }
            3 => {
                let token = sessions.token(&user.username).await?;
                let f = *FieldId::CATALOG.choose(&mut rng).unwrap();
                let value = rec.values[&f].clone();
                client.write(Auth::Bearer(&token), &rec.file_id, [(f, value)]).await
            }
            4 => {
                let ex = client
                    .read(Auth::Bearer(SessionToken::generate().as_str()), &rec.file_id, None)
                    .await;
                not_reached.insert(ex.as_ref().map(|e| e.correlation_id.clone()).unwrap_or_default());
                ex.map(|e| (e, false)).map(|(e, _)| e).map_err(|e| e.to_string())?;
                continue;
            }
            5 => {
                let token = sessions.token(&user.username).await?;
                let ex = client
                    .call(
                        reqwest::Method::GET,
                        &format!("/api/records/{}?fields=shoe_size", rec.file_id),
                        Auth::Bearer(&token),
                        None,
                    )
                    .await
                    .map_err(|e| e.to_string())?;
                ensure!(ex.status == 400, "unknown field returned {}", ex.status);
                not_reached.insert(ex.correlation_id);
                continue;
            }
            6 => {
                let token = sessions.token(&user.username).await?;
                client.logout(Auth::Bearer(&token)).await.map_err(|e| e.to_string())?;
                sessions.live.remove(&user.username);
                dead_tokens.push(token);
                continue;
            }
            7 => {
                let Some(token) = dead_tokens.choose(&mut rng).cloned() else {
                    continue;
                };
                let ex = client
                    .read(Auth::Bearer(&token), &rec.file_id, None)
                    .await
                    .map_err(|e| e.to_string())?;
                ensure!(ex.status == 401, "revoked token returned {}", ex.status);
                not_reached.insert(ex.correlation_id);
                continue;
            }
            _ => {
                let ex = client
                    .read(Auth::None, &rec.file_id, None)
                    .await
                    .map_err(|e| e.to_string())?;
                not_reached.insert(ex.correlation_id);
                continue;
            }
        };
        let ex = ex.map_err(|e| e.to_string())?;
        ensure!(
            [200, 403, 404].contains(&ex.status),
            "evaluated request returned {}",
            ex.status
        );
        reached.insert(ex.correlation_id);
    }
    let data = gw.stop().await;
    let audit = read_audit(data.path());

    for (i, e) in audit.iter().enumerate() {
        ensure!(
            e.sequence == i as u64 + 1,
            "gap: position {i} holds sequence {}",
            e.sequence
        );
    }
    let mut per_cid: BTreeMap<String, usize> = BTreeMap::new();
    for e in audit
        .iter()
        .filter(|e| matches!(e.event_kind, AuditKind::AccessGranted | AuditKind::AccessDenied))
    {
        *per_cid.entry(e.correlation_id.to_string()).or_default() += 1;
    }
    let decisions: usize = per_cid.values().sum();
    ensure!(
        decisions == reached.len(),
        "{decisions} access events for {} evaluated requests",
        reached.len()
    );
    for cid in &reached {
        ensure!(
            per_cid.get(cid) == Some(&1),
            "request {cid} has {:?} access events",
            per_cid.get(cid)
        );
    }
    if let Some(cid) = not_reached.iter().find(|c| per_cid.contains_key(*c)) {
        return Err(format!("request {cid} never reached evaluation but was audited"));
    }
    Ok(format!(
        "{decisions} access events = {} evaluated requests ({} others unaudited); {} events gapless",
        reached.len(),
        not_reached.len(),
        audit.len()
    ))
}

async fn session_lifecycle(seed: u64) -> Verdict {
    let fixture = Fixture::generate(seed);
    let dir = fixture_dir(&fixture);
    let gw = LocalGateway::launch(dir.path(), &[("session_ttl_seconds", "1")])
        .await
        .map_err(|e| e.to_string())?;
    let client = ApiClient::new(&gw.target().base_url, "life");
    let judge = Judge::new(&fixture);
    let (file, _) = judge.grants(Role::Physician, AccessMode::Read)[0].clone();

    let login = client
        .session("dr_0", &fixture.password)
        .await
        .map_err(|e| e.to_string())?;
    let early = client
        .read(Auth::Bearer(&login.token), &file, None)
        .await
        .map_err(|e| e.to_string())?;
    tokio::time::sleep(Duration::from_secs(2)).await;
    let late = client
        .read(Auth::Bearer(&login.token), &file, None)
        .await
        .map_err(|e| e.to_string())?;
    ensure!(late.status == 401, "request at t+2s returned {}", late.status);

    let login = client
        .session("dr_0", &fixture.password)
        .await
        .map_err(|e| e.to_string())?;
    let out = client
        .logout(Auth::Bearer(&login.token))
        .await
        .map_err(|e| e.to_string())?;
    let replay = client
        .read(Auth::Bearer(&login.token), &file, None)
        .await
        .map_err(|e| e.to_string())?;
    ensure!(out.status == 204, "logout returned {}", out.status);
    ensure!(replay.status == 401, "replay after logout returned {}", replay.status);
    gw.stop().await;

    let sdir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(1_000_000));
    let store = Arc::new(
        HealthStore::open_with_clock(
            sdir.path(),
            StoreOptions {
                hash: HashParams::fast(),
                sync: false,
            },
            clock.clone(),
        )
        .unwrap(),
    );
    store
        .put_user(
            User::new("dr", Role::Physician).unwrap(),
            &"pw".into(),
            &CorrelationId::system(),
        )
        .unwrap();
    store.add_policy("physician,read,rec1,*".parse().unwrap()).unwrap();
    let ttl = 10;
    let cfg = RuntimeConfig {
        session_ttl_seconds: ttl,
        auth_fail_delay: Duration::ZERO,
        sweep_interval: None,
        ..Default::default()
    };
    let runtime = AgentRuntime::start(Arc::clone(&store), cfg).unwrap();
    let h = runtime.handle();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut issued = Vec::new();
    for _ in 0..30 {
        clock.advance(rng.random_range(0..2));
        let r = h
            .login(CorrelationId::new(), "dr", Secret::new("pw"))
            .await
            .map_err(|e| e.to_string())?;
        let Ok(AuthResult::Success { token, expires_at, .. }) = r.body else {
            return Err("login failed".into());
        };
        issued.push((token, expires_at));
    }
    clock.advance(rng.random_range(3..12));
    let now = clock.now();
    let expired: BTreeSet<String> = issued
        .iter()
        .filter(|(_, e)| *e <= now)
        .map(|(t, _)| t.as_str().to_string())
        .collect();
    let swept = h.sweep(None).await.map_err(|e| e.to_string())?;
    let left: BTreeSet<String> = store
        .load_sessions()
        .unwrap()
        .into_iter()
        .map(|s| s.token.as_str().to_string())
        .collect();
    let live: BTreeSet<String> = issued
        .iter()
        .map(|(t, _)| t.as_str().to_string())
        .filter(|t| !expired.contains(t))
        .collect();
    runtime.shutdown().await;
    ensure!(
        swept == expired.len(),
        "sweep removed {swept}, expected {}",
        expired.len()
    );
    ensure!(
        left == live,
        "store keeps {} sessions, expected the {} unexpired",
        left.len(),
        live.len()
    );
    ensure!(!expired.is_empty() && !live.is_empty(), "degenerate sweep sample");
    Ok(format!(
        "t+0 {} -> t+2s 401; logout 204 -> replay 401; sweep removed {swept}/{} (exactly the expired)",
        early.status,
        issued.len()
    ))
}

async fn threat_harness(seed: u64) -> Verdict {
    let started = Instant::now();
    let fixture = Fixture::generate(seed);
    let dir = fixture_dir(&fixture);
    let correct = LocalGateway::launch(dir.path(), &[]).await.map_err(|e| e.to_string())?;
    let weak = LocalGateway::launch(dir.path(), &[("unsafe_allow_all", "true")])
        .await
        .map_err(|e| e.to_string())?;
    let summary = run_all(seed, &fixture, correct.target(), Some(weak.target()))
        .await
        .map_err(|e| e.to_string())?;
    correct.stop().await;
    weak.stop().await;
    let secs = started.elapsed().as_secs_f64();
    eprint!("{}", summary.to_text());
    let out = tempfile::tempdir().unwrap();
    summary.write(out.path()).map_err(|e| e.to_string())?;
    ensure!(out.path().join("report.ndjson").exists(), "report.ndjson missing");

    for r in &summary.reports {
        let name = r.scenario.name;
        if r.weakened {
            ensure!(r.successes >= 1, "{name} found nothing on the allow-all gateway");
        } else {
            ensure!(
                r.successes == 0,
                "{name} found {} breaches on the correct gateway",
                r.successes
            );
        }
        ensure!(r.state_restored == Some(true), "{name} left the store changed");
    }
    let correct_runs = summary.reports.iter().filter(|r| !r.weakened).count();
    ensure!(correct_runs == ScenarioName::ALL.len(), "ran {correct_runs} scenarios");
    ensure!(secs < 300.0, "suite took {secs:.0}s, limit 300s");
    let weak_hits: Vec<String> = summary
        .reports
        .iter()
        .filter(|r| r.weakened)
        .map(|r| format!("{}={}", r.scenario.name, r.successes))
        .collect();
    Ok(format!(
        "6/6 scenarios 0 breaches over {} attempts; allow-all baseline caught: {}",
        summary
            .reports
            .iter()
            .filter(|r| !r.weakened)
            .map(|r| r.attempts)
            .sum::<u64>(),
        weak_hits.join(", ")
    ))
}

fn durability_child(dir: &Path) {
    let store = HealthStore::open(
        dir,
        StoreOptions {
            hash: HashParams::fast(),
            sync: true,
        },
    )
    .unwrap();
    let padding = "x".repeat(4096);
    let mut out = std::io::stdout();
    loop {
        let seq = store
            .append_audit(NewAuditEvent::new(AuditKind::Sweep, &CorrelationId::system(), None).detail(padding.clone()))
            .unwrap();
        writeln!(out, "{seq}").unwrap();
        out.flush().unwrap();
    }
}

fn store_durability() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(0xd0d0);
    let rounds = 6;
    let mut torn = 0;
    let mut expected_next = 1;
    for round in 0..rounds {
        let mut child = Command::new(&exe)
            .env(DURABILITY_CHILD, dir.path())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let stdout = child.stdout.take().unwrap();
        let mut lines = BufReader::new(stdout).lines();
        let wanted = rng.random_range(20..80);
        let mut last_committed = 0u64;
        for _ in 0..wanted {
            match lines.next() {
                Some(Ok(l)) => last_committed = l.trim().parse().map_err(|_| format!("bad child output `{l}`"))?,
                _ => return Err(format!("round {round}: child stopped early")),
            }
        }
        child.kill().map_err(|e| e.to_string())?;
        child.wait().map_err(|e| e.to_string())?;
        drop(lines);

        let raw = std::fs::read(dir.path().join(AUDIT_FILE)).map_err(|e| e.to_string())?;
        if raw.last() != Some(&b'\n') {
            torn += 1;
        }
        let store = fast_store(dir.path());
        let audit = store.read_audit(1).map_err(|e| e.to_string())?;
        for (i, e) in audit.iter().enumerate() {
            ensure!(e.sequence == i as u64 + 1, "round {round}: gap at position {i}");
        }
        let last = audit.last().map_or(0, |e| e.sequence);
        ensure!(
            last >= last_committed,
            "round {round}: committed event {last_committed} lost (log ends at {last})"
        );
        ensure!(
            last_committed >= expected_next,
            "round {round}: child did not resume after {expected_next}"
        );
        let next = store
            .append_audit(NewAuditEvent::new(AuditKind::Sweep, &CorrelationId::system(), None))
            .unwrap();
        ensure!(
            next == last + 1,
            "round {round}: append after restart got {next}, expected {}",
            last + 1
        );
        expected_next = next + 1;
    }
    Ok(format!(
        "{rounds} kills, {torn} torn tails recovered, log contiguous through {}",
        expected_next - 1
    ))
}
