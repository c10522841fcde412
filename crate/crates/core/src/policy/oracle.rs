//! Naive reference evaluator for file access.
//!
//! Scans every raw tuple for every catalog field, one field at a time. It
//! never uses the table index, never merges field sets, and never calls the
//! set operations on [`FieldSet`]; it exists to be compared against
//! [`evaluate_access`](super::evaluate_access).

use std::collections::BTreeSet;

use super::{AccessDecision, AccessReason, AccessRequest, FieldId, FieldSet, PolicyTuple, User};

pub fn oracle_evaluate(request: &AccessRequest, requester: &User, tuples: &[PolicyTuple]) -> AccessDecision {
    if request.user_id != requester.user_id {
        return AccessDecision::deny(AccessReason::NotAuthenticated);
    }

    let mut granted = BTreeSet::new();
    for field in FieldId::CATALOG {
        let requested = match &request.requested_fields {
            FieldSet::Wildcard => true,
            FieldSet::Explicit(set) => set.iter().any(|f| *f == field),
        };
        if !requested {
            continue;
        }
        for tuple in tuples {
            if tuple.role != requester.role || tuple.mode != request.mode || tuple.file_id != request.file_id {
                continue;
            }
            let allowed = match &tuple.fields {
                FieldSet::Wildcard => true,
                FieldSet::Explicit(set) => set.iter().any(|f| *f == field),
            };
            if allowed {
                granted.insert(field);
                break;
            }
        }
    }

    if granted.is_empty() {
        AccessDecision::deny(AccessReason::NoMatchingTuple)
    } else {
        AccessDecision::grant(FieldSet::Explicit(granted))
    }
}
