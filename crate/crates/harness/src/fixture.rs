//! Seeded users, policies and records, plus `scenario.cfg`.
//!
//! A fixture directory has the same layout as a store data directory, so
//! a gateway can be pointed straight at (a copy of) it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

use ibac_core::config::parse_pairs;
use ibac_core::policy::{
    AccessMode, FieldId, FieldSet, FieldValue, FileId, HealthRecord, PolicyTable, PolicyTuple, Role, User,
};
use ibac_core::store::{HashParams, StoreOptions};
use ibac_core::{CorrelationId, HealthStore};

use crate::HarnessError;

pub const SCENARIO_FILE: &str = "scenario.cfg";
pub const CUSTODIAN: &str = "custodian";

/// Everything the harness knows about the seeded state of its target.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub users: Vec<User>,
    pub policies: PolicyTable,
    pub records: Vec<HealthRecord>,
    /// Shared password of every fixture account.
    pub password: String,
    /// Admin account holding read and write `*` on every record.
    pub custodian: String,
    /// Raw `scenario.cfg` pairs, gateway keys included.
    pub settings: BTreeMap<String, String>,
}

fn fixture_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Fixture(msg.into())
}

fn random_value(field: FieldId, rng: &mut StdRng) -> FieldValue {
    match field {
        FieldId::Location => FieldValue::Text(["ward-3", "icu-1", "home", "clinic-b"].choose(rng).unwrap().to_string()),
        FieldId::CollectedAt => FieldValue::Number(rng.random_range(1_600_000_000..1_700_000_000) as f64),
        FieldId::Age => FieldValue::Number(rng.random_range(1..95) as f64),
        FieldId::Status => FieldValue::Text(["stable", "critical", "discharged"].choose(rng).unwrap().to_string()),
        FieldId::BloodGroup => FieldValue::Text(["A+", "A-", "B+", "O+", "O-", "AB+"].choose(rng).unwrap().to_string()),
        FieldId::Height => FieldValue::Number(rng.random_range(140..200) as f64),
        FieldId::Weight => FieldValue::Number(rng.random_range(40..120) as f64),
        FieldId::Bgm => FieldValue::Number(rng.random_range(70..180) as f64),
        FieldId::HeartRate => FieldValue::Number(rng.random_range(50..120) as f64),
        FieldId::BloodPressure => {
            FieldValue::Text(format!("{}/{}", rng.random_range(100..160), rng.random_range(60..100)))
        }
        FieldId::SugarLevel => FieldValue::Number(rng.random_range(70..200) as f64),
        FieldId::OperationHistory => {
            FieldValue::Text(["none", "appendectomy", "bypass"].choose(rng).unwrap().to_string())
        }
    }
}

fn random_subset(rng: &mut StdRng, min: usize, max: usize) -> FieldSet {
    let mut fields = FieldId::CATALOG.to_vec();
    fields.shuffle(rng);
    let n = rng.random_range(min..=max);
    FieldSet::of(fields.into_iter().take(n))
}

impl Fixture {
    /// A deterministic fixture for `seed`.
    ///
    /// Layout: one custodian admin, four physicians, two records officers
    /// and six patients each owning one record. The records-officer role is
    /// granted exactly one field (`location`) on `rec0` so that exfiltration
    /// attempts have a narrow target.
    pub fn generate(seed: u64) -> Fixture {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut users = vec![User::new(CUSTODIAN, Role::Admin).unwrap()];
        users.extend((0..4).map(|i| User::new(&format!("dr_{i}"), Role::Physician).unwrap()));
        users.extend((0..2).map(|i| User::new(&format!("officer_{i}"), Role::RecordsOfficer).unwrap()));
        let patients: Vec<User> = (0..6)
            .map(|i| User::new(&format!("pat_{i}"), Role::Patient).unwrap())
            .collect();
        users.extend(patients.iter().cloned());

        let records: Vec<HealthRecord> = patients
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rec = HealthRecord::new(FileId::new(format!("rec{i}")).unwrap(), p.user_id.clone());
                for f in FieldId::CATALOG {
                    rec.values.insert(f, random_value(f, &mut rng));
                }
                rec
            })
            .collect();

        let mut policies = PolicyTable::default();
        for rec in &records {
            let file = &rec.file_id;
            policies.insert(PolicyTuple::new(
                Role::Admin,
                AccessMode::Read,
                file.clone(),
                FieldSet::Wildcard,
            ));
            policies.insert(PolicyTuple::new(
                Role::Admin,
                AccessMode::Write,
                file.clone(),
                FieldSet::Wildcard,
            ));
            if rng.random_bool(0.6) {
                let fields = random_subset(&mut rng, 2, 8);
                policies.insert(PolicyTuple::new(
                    Role::Physician,
                    AccessMode::Read,
                    file.clone(),
                    fields,
                ));
            }
            if rng.random_bool(0.4) {
                let fields = FieldSet::of([FieldId::HeartRate, FieldId::BloodPressure]);
                policies.insert(PolicyTuple::new(
                    Role::Physician,
                    AccessMode::Write,
                    file.clone(),
                    fields,
                ));
            }
            let patient_view = FieldSet::of(
                FieldId::CATALOG
                    .into_iter()
                    .filter(|f| f.group() == ibac_core::policy::FieldGroup::PatientInfo),
            );
            policies.insert(PolicyTuple::new(
                Role::Patient,
                AccessMode::Read,
                file.clone(),
                patient_view,
            ));
        }
        let rec0 = records[0].file_id.clone();
        policies.insert(PolicyTuple::new(
            Role::RecordsOfficer,
            AccessMode::Read,
            rec0,
            FieldSet::of([FieldId::Location]),
        ));
        policies.insert(PolicyTuple::new(
            Role::Physician,
            AccessMode::Read,
            records[1].file_id.clone(),
            FieldSet::of([FieldId::HeartRate]),
        ));

        let mut settings = BTreeMap::new();
        settings.insert("harness.seed".into(), seed.to_string());
        settings.insert("harness.password".into(), format!("fixture-{seed:x}-pw"));
        settings.insert("harness.custodian".into(), CUSTODIAN.into());
        settings.insert("session_ttl_seconds".into(), "2".into());

        Fixture {
            users,
            policies,
            records,
            password: settings["harness.password"].clone(),
            custodian: CUSTODIAN.into(),
            settings,
        }
    }

    pub fn user(&self, username: &str) -> Option<&User> {
        self.users.iter().find(|u| u.username == username)
    }

    pub fn users_with_role(&self, role: Role) -> impl Iterator<Item = &User> {
        self.users.iter().filter(move |u| u.role == role)
    }

    pub fn record(&self, file_id: &FileId) -> Option<&HealthRecord> {
        self.records.iter().find(|r| &r.file_id == file_id)
    }

    pub fn tuples(&self) -> Vec<PolicyTuple> {
        self.policies.tuples().collect()
    }

    /// Setting from `scenario.cfg`, parsed.
    pub fn setting<T: std::str::FromStr>(&self, key: &str) -> Option<T> {
        self.settings.get(key)?.parse().ok()
    }

    pub fn session_ttl(&self) -> u64 {
        self.setting("session_ttl_seconds").unwrap_or(3600)
    }

    /// Writes the fixture as a fresh store directory plus `scenario.cfg`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        if fs::read_dir(dir)?.next().is_some() {
            return Err(fixture_err(format!("{} is not empty", dir.display())));
        }
        let store = HealthStore::open(
            dir,
            StoreOptions {
                hash: HashParams::default(),
                sync: true,
            },
        )?;
        let cid = CorrelationId::system();
        for user in &self.users {
            store.put_user(user.clone(), &self.password.as_str().into(), &cid)?;
        }
        for rec in &self.records {
            store.put_record(rec.clone())?;
        }
        store.set_policy_table(&self.policies)?;
        let mut cfg = String::from("# threat-harness fixture\n");
        for (k, v) in &self.settings {
            cfg.push_str(&format!("{k}={v}\n"));
        }
        fs::write(dir.join(SCENARIO_FILE), cfg)?;
        Ok(())
    }

    /// Loads a fixture written by [`Fixture::write`] (or hand-built in the same layout).
    pub fn load(dir: &Path) -> Result<Fixture, HarnessError> {
        let cfg_path = dir.join(SCENARIO_FILE);
        let text =
            fs::read_to_string(&cfg_path).map_err(|e| fixture_err(format!("reading {}: {e}", cfg_path.display())))?;
        let settings = parse_pairs(&text).map_err(|e| fixture_err(e.to_string()))?;
        let password = settings
            .get("harness.password")
            .cloned()
            .ok_or_else(|| fixture_err("scenario.cfg lacks harness.password"))?;
        let custodian = settings
            .get("harness.custodian")
            .cloned()
            .unwrap_or_else(|| CUSTODIAN.into());

        let store = HealthStore::open(
            dir,
            StoreOptions {
                hash: HashParams::default(),
                sync: false,
            },
        )?;
        let users = store.users()?;
        if !users.iter().any(|u| u.username == custodian && u.role == Role::Admin) {
            return Err(fixture_err(format!("custodian `{custodian}` missing or not an admin")));
        }
        Ok(Fixture {
            users,
            policies: (*store.policy_table()?).clone(),
            records: store.records(),
            password,
            custodian,
            settings,
        })
    }
}
