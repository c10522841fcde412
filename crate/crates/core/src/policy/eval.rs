use super::{
    AccessDecision, AccessReason, AccessRequest, ConnectDecision, ConnectReason, FieldSet, HealthRecord, PolicyTable,
    User,
};

/// Connection gate: the user must exist and its role must hold at least one
/// grant somewhere in the table.
pub fn evaluate_connection(username: &str, users: &[User], policies: &PolicyTable) -> ConnectDecision {
    let Some(user) = users.iter().find(|u| u.username == username) else {
        return ConnectDecision::refuse(ConnectReason::UnknownUser);
    };
    if policies.has_role(user.role) {
        ConnectDecision::establish()
    } else {
        ConnectDecision::refuse(ConnectReason::NoPolicyForRole)
    }
}

/// File-access evaluation. Grants the intersection of the matching tuple's
/// fields with the requested fields; an empty intersection is a denial.
///
/// Only the requester's role is consulted. A request whose `user_id` does not
/// belong to `requester` is denied as unauthenticated.
pub fn evaluate_access(request: &AccessRequest, requester: &User, policies: &PolicyTable) -> AccessDecision {
    if request.user_id != requester.user_id {
        return AccessDecision::deny(AccessReason::NotAuthenticated);
    }
    match policies.lookup(requester.role, request.mode, &request.file_id) {
        Some(allowed) => AccessDecision::grant(allowed.intersection(&request.requested_fields)),
        None => AccessDecision::deny(AccessReason::NoMatchingTuple),
    }
}

/// Restricts a record's values to `granted`.
pub fn filter_record(record: &HealthRecord, granted: &FieldSet) -> HealthRecord {
    HealthRecord {
        file_id: record.file_id.clone(),
        owner_user_id: record.owner_user_id.clone(),
        values: record
            .values
            .iter()
            .filter(|(field, _)| granted.contains(**field))
            .map(|(field, value)| (*field, value.clone()))
            .collect(),
    }
}
