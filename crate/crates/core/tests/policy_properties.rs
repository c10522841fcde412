//! Property tests for the policy invariants.

use ibac_core::policy::{
    evaluate_access, evaluate_connection, filter_record, oracle_evaluate, AccessMode, AccessRequest, FieldId, FieldSet,
    FileId, HealthRecord, PolicyTable, PolicyTuple, Role, User, UserId,
};
use proptest::prelude::*;

const FILES: [&str; 3] = ["rec1", "rec2", "rec3"];

fn field_set() -> impl Strategy<Value = FieldSet> {
    prop_oneof![
        1 => Just(FieldSet::Wildcard),
        6 => prop::collection::btree_set(prop::sample::select(FieldId::CATALOG.to_vec()), 0..=12)
            .prop_map(FieldSet::Explicit),
    ]
}

fn role() -> impl Strategy<Value = Role> {
    prop::sample::select(Role::ALL.to_vec())
}

fn mode() -> impl Strategy<Value = AccessMode> {
    prop::sample::select(AccessMode::ALL.to_vec())
}

fn file() -> impl Strategy<Value = FileId> {
    prop::sample::select(FILES.to_vec()).prop_map(|f| FileId::new(f).unwrap())
}

fn tuple() -> impl Strategy<Value = PolicyTuple> {
    (role(), mode(), file(), field_set()).prop_map(|(r, m, f, fs)| PolicyTuple::new(r, m, f, fs))
}

fn tuples() -> impl Strategy<Value = Vec<PolicyTuple>> {
    prop::collection::vec(tuple(), 0..12)
}

fn user_with(role: Role) -> User {
    User {
        user_id: UserId::new("u1"),
        username: "u1".into(),
        role,
        credential_ref: "u1".into(),
    }
}

fn request(user: &User, mode: AccessMode, file_id: FileId, fields: FieldSet) -> AccessRequest {
    AccessRequest {
        user_id: user.user_id.clone(),
        mode,
        file_id,
        requested_fields: fields,
    }
}

fn record() -> impl Strategy<Value = HealthRecord> {
    prop::collection::btree_map(prop::sample::select(FieldId::CATALOG.to_vec()), "[a-z0-9]{1,6}", 0..=12).prop_map(
        |values| {
            let mut r = HealthRecord::new(FileId::new("rec1").unwrap(), UserId::new("p"));
            for (k, v) in values {
                r.values.insert(k, v.into());
            }
            r
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn granted_fields_come_from_a_matching_tuple(
        raw in tuples(), r in role(), m in mode(), f in file(), fs in field_set()
    ) {
        let table: PolicyTable = raw.iter().cloned().collect();
        let user = user_with(r);
        let d = evaluate_access(&request(&user, m, f.clone(), fs.clone()), &user, &table);
        if d.is_granted() {
            prop_assert!(!d.granted_fields().is_empty());
            prop_assert!(d.granted_fields().is_subset(&fs));
            let covered = d.granted_fields().iter().all(|field| {
                raw.iter().any(|t| t.role == r && t.mode == m && t.file_id == f && t.fields.contains(field))
            });
            prop_assert!(covered);
        } else {
            prop_assert!(d.granted_fields().is_empty());
        }
    }

    #[test]
    fn shrinking_the_request_never_widens_the_grant(
        raw in tuples(), r in role(), m in mode(), f in file(), big in field_set(), mask in field_set()
    ) {
        let table: PolicyTable = raw.into_iter().collect();
        let user = user_with(r);
        let small = big.intersection(&mask);
        let wide = evaluate_access(&request(&user, m, f.clone(), big), &user, &table);
        let narrow = evaluate_access(&request(&user, m, f, small), &user, &table);
        if narrow.is_granted() {
            prop_assert!(wide.is_granted());
        }
        prop_assert!(narrow.granted_fields().is_subset(wide.granted_fields()));
    }

    #[test]
    fn indexed_evaluation_matches_oracle(
        raw in tuples(), r in role(), m in mode(), f in file(), fs in field_set()
    ) {
        let table: PolicyTable = raw.iter().cloned().collect();
        let user = user_with(r);
        let req = request(&user, m, f, fs);
        prop_assert_eq!(evaluate_access(&req, &user, &table), oracle_evaluate(&req, &user, &raw));
    }

    #[test]
    fn filtering_is_idempotent(rec in record(), g in field_set()) {
        let once = filter_record(&rec, &g);
        prop_assert_eq!(filter_record(&once, &g), once.clone());
        prop_assert!(once.field_set().is_subset(&g));
    }

    #[test]
    fn connection_gate_is_role_existence(raw in tuples(), r in role()) {
        let table: PolicyTable = raw.iter().cloned().collect();
        let users = vec![user_with(r)];
        let expected = raw.iter().any(|t| t.role == r);
        prop_assert_eq!(evaluate_connection("u1", &users, &table).is_established(), expected);
    }

    #[test]
    fn decisions_depend_only_on_role(
        raw in tuples(), r in role(), m in mode(), f in file(), fs in field_set(), name in "[a-z]{3,8}"
    ) {
        let table: PolicyTable = raw.into_iter().collect();
        let a = user_with(r);
        let b = User { user_id: UserId::new(format!("id-{name}")), username: name, role: r, credential_ref: "x".into() };
        let da = evaluate_access(&request(&a, m, f.clone(), fs.clone()), &a, &table);
        let db = evaluate_access(&request(&b, m, f, fs), &b, &table);
        prop_assert_eq!(da, db);
    }

    #[test]
    fn table_text_round_trips(raw in tuples()) {
        let table: PolicyTable = raw.into_iter().collect();
        let text = table.to_string();
        let reparsed = PolicyTable::parse(&text).unwrap();
        prop_assert_eq!(&reparsed, &table);
        prop_assert_eq!(reparsed.to_string(), text);
    }
}
