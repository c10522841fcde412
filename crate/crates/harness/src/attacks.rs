//! Attack scripts. Each records every attempt in the context's tally and
//! judges it against the oracle for the identity it actually presented.

use std::time::Duration;

use futures::stream::{self, StreamExt};
use rand::seq::SliceRandom;
use rand::Rng;

use ibac_core::policy::{AccessMode, FieldGroup, FieldId, FieldSet, FieldValue, FileId, Role, User};
use ibac_core::SessionToken;

use crate::client::{unix_now, Auth, Login};
use crate::scenario::Ctx;
use crate::HarnessError;

const STUFFING_CONCURRENCY: usize = 16;

fn field_query(fields: Option<&[FieldId]>) -> String {
    match fields {
        None => "*".into(),
        Some(fs) => fs.iter().map(|f| f.name()).collect::<Vec<_>>().join(","),
    }
}

fn requested(fields: Option<&[FieldId]>) -> FieldSet {
    fields.map_or(FieldSet::Wildcard, |fs| FieldSet::of(fs.iter().copied()))
}

/// A readable file for `role` and the fields granted on it.
fn readable(ctx: &Ctx<'_>, role: Role) -> Result<(FileId, FieldSet), HarnessError> {
    ctx.judge
        .grants(role, AccessMode::Read)
        .into_iter()
        .next()
        .ok_or_else(|| HarnessError::Fixture(format!("role {role} has no read grant")))
}

async fn session(ctx: &mut Ctx<'_>, username: &str) -> Result<Login, HarnessError> {
    let ex = ctx.client.login(username, &ctx.fixture.password).await?;
    ctx.tally.setup(format!("POST /api/login user={username}"), &ex);
    match (ex.body["token"].as_str(), ex.body["expires_at"].as_i64()) {
        (Some(t), Some(e)) if ex.status == 200 => Ok(Login {
            username: username.into(),
            token: t.into(),
            expires_at: e,
        }),
        _ => Err(HarnessError::Fixture(format!(
            "fixture user `{username}` cannot log in (status {})",
            ex.status
        ))),
    }
}

/// Wrong passwords against one real account, up to 16 in flight.
pub(crate) async fn credential_stuffing(ctx: &mut Ctx<'_>) -> Result<(), HarnessError> {
    let victim = ctx.scenario.text_param("victim", "dr_0");
    ctx.user(&victim)?;
    let attempts: usize = ctx.scenario.param("attempts", 500);
    let real = ctx.fixture.password.clone();
    let guesses: Vec<String> = (0..attempts)
        .map(|i| {
            let g = format!("guess-{i}-{:08x}", ctx.rng.random::<u32>());
            if g == real {
                format!("{g}!")
            } else {
                g
            }
        })
        .collect();

    let client = ctx.client;
    let results: Vec<_> = stream::iter(guesses.iter().enumerate())
        .map(|(i, pw)| {
            let victim = victim.as_str();
            async move { (i, client.login(victim, pw).await) }
        })
        .buffered(STUFFING_CONCURRENCY)
        .collect()
        .await;
    for (i, ex) in results {
        let ex = ex?;
        let breach = ex.is_success() || ex.body.get("token").is_some();
        ctx.tally
            .attempt(format!("POST /api/login user={victim} guess#{i}"), &ex, breach);
    }
    Ok(())
}

/// Reuse of a token after its owner logged out.
pub(crate) async fn token_replay(ctx: &mut Ctx<'_>) -> Result<(), HarnessError> {
    let victim = ctx.user(&ctx.scenario.text_param("victim", "dr_0"))?;
    let replays: usize = ctx.scenario.param("attempts", 20);
    let (file, _) = readable(ctx, victim.role)?;
    let writable = ctx.judge.grants(victim.role, AccessMode::Write).into_iter().next();

    let login = session(ctx, &victim.username).await?;
    let ex = ctx.client.read(Auth::Bearer(&login.token), &file, None).await?;
    ctx.tally
        .setup(format!("GET /api/records/{file} as {}", victim.username), &ex);
    let ex = ctx.client.logout(Auth::Bearer(&login.token)).await?;
    ctx.tally.setup("POST /api/logout", &ex);

    for i in 0..replays {
        let auth = Auth::Bearer(&login.token);
        match i % 3 {
            0 => {
                let ex = ctx.client.read(auth, &file, None).await?;
                let breach = ctx.judge.read_breach(None, &file, &FieldSet::Wildcard, &ex);
                ctx.tally
                    .attempt(format!("GET /api/records/{file} replayed"), &ex, breach);
            }
            1 => match &writable {
                Some((wfile, fields)) => {
                    let Some(field) = fields.iter().next() else { continue };
                    let value = FieldValue::Text(format!("replayed-{i}"));
                    let ex = ctx.client.write(auth, wfile, [(field, value)]).await?;
                    let breach = ctx.judge.write_breach(None, wfile, &FieldSet::of([field]), &ex);
                    ctx.tally
                        .attempt(format!("PUT /api/records/{wfile} {field} replayed"), &ex, breach);
                }
                None => {
                    let ex = ctx.client.read(auth, &file, Some(&FieldId::CATALOG)).await?;
                    let breach = ctx.judge.read_breach(None, &file, &FieldSet::Wildcard, &ex);
                    ctx.tally
                        .attempt(format!("GET /api/records/{file} all fields replayed"), &ex, breach);
                }
            },
            _ => {
                let ex = ctx.client.audit(auth, 1).await?;
                let breach = ctx.judge.audit_breach(None, &ex);
                ctx.tally.attempt("GET /api/audit replayed", &ex, breach);
            }
        }
    }
    Ok(())
}

/// Low-privilege users reaching for data, mutations and endpoints their
/// role does not hold.
pub(crate) async fn privilege_escalation(ctx: &mut Ctx<'_>) -> Result<(), HarnessError> {
    let attackers = ctx.scenario.text_param("attackers", "officer_0,pat_0");
    let attackers: Vec<User> = attackers
        .split(',')
        .map(|u| ctx.user(u.trim()))
        .collect::<Result<_, _>>()?;
    let password = ctx.fixture.password.clone();
    let records = ctx.fixture.records.clone();

    for attacker in &attackers {
        let mut login = session(ctx, &attacker.username).await?;
        let who = Some(attacker);
        for rec in &records {
            ctx.client.refresh(&mut login, &password).await?;
            let ex = ctx.client.read(Auth::Bearer(&login.token), &rec.file_id, None).await?;
            let breach = ctx.judge.read_breach(who, &rec.file_id, &FieldSet::Wildcard, &ex);
            ctx.tally.attempt(
                format!("GET /api/records/{} as {}", rec.file_id, attacker.username),
                &ex,
                breach,
            );

            let mut fields: Vec<FieldId> = rec.values.keys().copied().collect();
            fields.shuffle(&mut ctx.rng);
            let forbidden = fields.into_iter().find(|f| {
                let d = ctx
                    .judge
                    .decide(who, AccessMode::Write, &rec.file_id, &FieldSet::of([*f]));
                !d.is_granted()
            });
            if let Some(field) = forbidden {
                ctx.client.refresh(&mut login, &password).await?;
                let value = FieldValue::Text(format!("tampered-by-{}", attacker.username));
                let ex = ctx
                    .client
                    .write(Auth::Bearer(&login.token), &rec.file_id, [(field, value)])
                    .await?;
                let breach = ctx.judge.write_breach(who, &rec.file_id, &FieldSet::of([field]), &ex);
                ctx.tally.attempt(
                    format!("PUT /api/records/{} {field} as {}", rec.file_id, attacker.username),
                    &ex,
                    breach,
                );
            }
        }

        ctx.client.refresh(&mut login, &password).await?;
        let ex = ctx.client.audit(Auth::Bearer(&login.token), 1).await?;
        let breach = ctx.judge.audit_breach(who, &ex);
        ctx.tally
            .attempt(format!("GET /api/audit as {}", attacker.username), &ex, breach);

        for (i, role) in ["admin", "Admin", " admin"].iter().enumerate() {
            let name = format!("{}-escalate-{i}", attacker.username);
            let ex = ctx.client.register(&name, &password, role).await?;
            let breach = ex.is_success();
            ctx.tally
                .attempt(format!("POST /api/register role={role:?}"), &ex, breach);
        }
        let ex = ctx.client.logout(Auth::Bearer(&login.token)).await?;
        ctx.tally.setup("POST /api/logout", &ex);
    }
    Ok(())
}

/// Over-broad field requests from a narrowly granted user.
pub(crate) async fn field_exfiltration(ctx: &mut Ctx<'_>) -> Result<(), HarnessError> {
    let attacker = ctx.user(&ctx.scenario.text_param("attacker", "officer_0"))?;
    let password = ctx.fixture.password.clone();
    let files: Vec<FileId> = ctx.fixture.records.iter().map(|r| r.file_id.clone()).collect();
    let mut shapes: Vec<Option<Vec<FieldId>>> = vec![Some(FieldId::CATALOG.to_vec()), None];
    for group in [
        FieldGroup::Environment,
        FieldGroup::PatientInfo,
        FieldGroup::CurrentMedical,
    ] {
        shapes.push(Some(
            FieldId::CATALOG.into_iter().filter(|f| f.group() == group).collect(),
        ));
    }

    let mut login = session(ctx, &attacker.username).await?;
    for file in &files {
        for shape in &shapes {
            ctx.client.refresh(&mut login, &password).await?;
            let fields = shape.as_deref();
            let ex = ctx.client.read(Auth::Bearer(&login.token), file, fields).await?;
            let breach = ctx.judge.read_breach(Some(&attacker), file, &requested(fields), &ex);
            ctx.tally.attempt(
                format!("GET /api/records/{file}?fields={}", field_query(fields)),
                &ex,
                breach,
            );
        }
    }
    let ex = ctx.client.logout(Auth::Bearer(&login.token)).await?;
    ctx.tally.setup("POST /api/logout", &ex);
    Ok(())
}

fn flip_hex(c: char) -> char {
    if c == '0' {
        '1'
    } else {
        '0'
    }
}

/// Forged and near-miss tokens against a victim's live session.
pub(crate) async fn session_hijack(ctx: &mut Ctx<'_>) -> Result<(), HarnessError> {
    let victim = ctx.user(&ctx.scenario.text_param("victim", "dr_0"))?;
    let random_tokens: usize = ctx.scenario.param("attempts", 40);
    let (file, _) = readable(ctx, victim.role)?;
    let mut login = session(ctx, &victim.username).await?;

    let mut forged: Vec<(String, String)> = Vec::new();
    for i in 0..random_tokens {
        let token = if i % 2 == 0 {
            SessionToken::generate().as_str().to_string()
        } else {
            (0..64)
                .map(|_| char::from_digit(ctx.rng.random_range(0..16), 16).unwrap())
                .collect()
        };
        forged.push((format!("Bearer <random#{i}>"), format!("Bearer {token}")));
    }
    let real = login.token.clone();
    let pos = ctx.rng.random_range(0..real.len());
    let flipped: String = real
        .chars()
        .enumerate()
        .map(|(i, c)| if i == pos { flip_hex(c) } else { c })
        .collect();
    let near_misses = [
        ("Bearer <victim, one char flipped>", format!("Bearer {flipped}")),
        (
            "Bearer <victim, truncated>",
            format!("Bearer {}", &real[..real.len() - 1]),
        ),
        ("Bearer <victim fingerprint>", format!("Bearer {}", &real[..8])),
        ("Bearer <victim, uppercased>", format!("Bearer {}", real.to_uppercase())),
        ("Bearer <victim + suffix>", format!("Bearer {real}0")),
        (
            "Bearer <victim reversed>",
            format!("Bearer {}", real.chars().rev().collect::<String>()),
        ),
        ("Bearer <empty>", "Bearer ".to_string()),
        ("Bearer <all zeros>", format!("Bearer {}", "0".repeat(64))),
        ("Basic <victim token>", format!("Basic {real}")),
        ("<victim token without scheme>", real.clone()),
    ];
    forged.extend(near_misses.into_iter().map(|(l, h)| (l.to_string(), h)));

    for (label, header) in &forged {
        ctx.client.refresh(&mut login, &ctx.fixture.password.clone()).await?;
        let ex = ctx.client.read(Auth::Raw(header), &file, None).await?;
        let breach = ctx.judge.read_breach(None, &file, &FieldSet::Wildcard, &ex);
        ctx.tally
            .attempt(format!("GET /api/records/{file} with {label}"), &ex, breach);
    }
    let ex = ctx
        .client
        .call(
            reqwest::Method::GET,
            &format!("/api/records/{file}?token={real}"),
            Auth::None,
            None,
        )
        .await?;
    let breach = ctx.judge.read_breach(None, &file, &FieldSet::Wildcard, &ex);
    ctx.tally
        .attempt(format!("GET /api/records/{file}?token=<victim>"), &ex, breach);

    let ex = ctx.client.logout(Auth::Bearer(&login.token)).await?;
    ctx.tally.setup("POST /api/logout", &ex);
    Ok(())
}

/// Requests with a token one second past its expiry.
pub(crate) async fn expired_session_reuse(ctx: &mut Ctx<'_>) -> Result<(), HarnessError> {
    let victim = ctx.user(&ctx.scenario.text_param("victim", "dr_0"))?;
    let attempts: usize = ctx.scenario.param("attempts", 5);
    let max_wait: i64 = ctx.scenario.param("max_wait_seconds", 5);
    let (file, granted) = readable(ctx, victim.role)?;

    let login = session(ctx, &victim.username).await?;
    let wait = login.expires_at + 1 - unix_now();
    if wait > max_wait {
        return Err(HarnessError::Fixture(format!(
            "session lifetime too long for this scenario: would wait {wait}s, max_wait_seconds={max_wait}"
        )));
    }
    while unix_now() < login.expires_at + 1 {
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    let explicit: Vec<FieldId> = granted.iter().collect();
    for i in 0..attempts {
        let fields = if i % 2 == 0 { None } else { Some(explicit.as_slice()) };
        let ex = ctx.client.read(Auth::Bearer(&login.token), &file, fields).await?;
        let breach = ctx.judge.read_breach(None, &file, &requested(fields), &ex);
        ctx.tally.attempt(
            format!("GET /api/records/{file}?fields={} expired", field_query(fields)),
            &ex,
            breach,
        );
    }
    Ok(())
}
