//! The `ibac` operator command line.
//!
//! Exit codes: 0 success, 1 parse or validation error, 2 I/O error,
//! 3 target unreachable, 4 a threat-harness scenario failed its verdict.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use ibac_core::config::ConfigError;
use ibac_core::policy::{PolicyTuple, Role, User};
use ibac_core::store::{Secret, CREDENTIALS_FILE, POLICY_FILE, RECORDS_FILE, USERS_FILE};
use ibac_core::{Config, CorrelationId, HealthStore, StoreError};
use ibac_gateway::{Gateway, GatewayError};
use ibac_harness::{Fixture, HarnessError, Target};

/// Environment variable read by `user-add` instead of prompting.
pub const PASSWORD_ENV: &str = "IBAC_USER_PASSWORD";

#[derive(Debug, Parser)]
#[command(
    name = "ibac",
    version,
    about = "Field-level access-control gateway for health records"
)]
pub struct Cli {
    /// key=value configuration file
    #[arg(long, global = true, env = "IBAC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP gateway until interrupted
    Serve {
        /// Grant every authenticated request (test deployments only)
        #[arg(long)]
        unsafe_allow_all: bool,
    },
    /// Install a harness fixture into the data directory
    Seed {
        #[arg(long)]
        fixture: PathBuf,
        /// Generate a fresh fixture with this seed into `--fixture` first
        #[arg(long)]
        generate: Option<u64>,
    },
    /// Register a user; the password is prompted for or read from IBAC_USER_PASSWORD
    UserAdd {
        #[arg(long)]
        username: String,
        #[arg(long, required_unless_present = "admin", conflicts_with = "admin")]
        role: Option<Role>,
        /// Shorthand for `--role admin`
        #[arg(long)]
        admin: bool,
    },
    /// Add a policy tuple: "<role>,<mode>,<file>,<fields>"
    PolicyAdd { line: String },
    /// Print the policy table, one tuple per line
    PolicyList,
    /// Print audit events in sequence order
    AuditTail {
        #[arg(long)]
        follow: bool,
        #[arg(long, default_value_t = 1)]
        from: u64,
    },
    /// Run the threat harness against a running gateway
    Simulate {
        #[arg(long)]
        target: String,
        #[arg(long)]
        seed: u64,
        /// Fixture directory the target was seeded from (default: generated from --seed)
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// A gateway running with unsafe_allow_all, for the baseline runs
        #[arg(long)]
        weakened: Option<String>,
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Verdict(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Config(ConfigError::Io { .. }) => 2,
            CliError::Config(_) => 1,
            CliError::Store(e) | CliError::Gateway(GatewayError::Store(e)) => store_exit_code(e),
            CliError::Gateway(_) | CliError::Io(_) => 2,
            CliError::Harness(HarnessError::TargetUnreachable(_)) => 3,
            CliError::Harness(HarnessError::Store(e)) => store_exit_code(e),
            CliError::Harness(HarnessError::Io(_)) => 2,
            CliError::Harness(_) => 1,
            CliError::Verdict(_) => 4,
        }
    }
}

fn store_exit_code(e: &StoreError) -> u8 {
    match e {
        StoreError::Io { .. } | StoreError::Corrupt { .. } => 2,
        _ => 1,
    }
}

/// Parses `args`, runs the command and reports failures as one stderr line.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    match cli.command {
        Command::Serve { unsafe_allow_all } => {
            config.unsafe_allow_all |= unsafe_allow_all;
            serve(config)
        }
        Command::Seed { fixture, generate } => seed(&config, &fixture, generate),
        Command::UserAdd { username, role, admin } => {
            let role = if admin {
                Role::Admin
            } else {
                role.expect("clap enforces --role or --admin")
            };
            user_add(&config, &username, role)
        }
        Command::PolicyAdd { line } => {
            let tuple: PolicyTuple = line.parse().map_err(|e| CliError::Invalid(format!("{e}")))?;
            let store = open_existing(&config, true)?;
            store.add_policy(tuple.clone())?;
            println!("{tuple}");
            Ok(())
        }
        Command::PolicyList => {
            let table = open_existing(&config, false)?.policy_table()?;
            let mut out = io::stdout().lock();
            write!(out, "{table}")?;
            Ok(())
        }
        Command::AuditTail { follow, from } => audit_tail(&config, from, follow),
        Command::Simulate {
            target,
            seed,
            fixture,
            weakened,
            report_dir,
        } => simulate(
            &target,
            seed,
            fixture.as_deref(),
            weakened.as_deref(),
            report_dir.as_deref(),
        ),
    }
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, CliError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn open_existing(config: &Config, create: bool) -> Result<HealthStore, CliError> {
    if !create && !config.data_dir.is_dir() {
        return Err(CliError::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("data directory {} does not exist", config.data_dir.display()),
        )));
    }
    Ok(HealthStore::open(&config.data_dir, config.store_options())?)
}

fn serve(config: Config) -> Result<(), CliError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .try_init();
    tokio_runtime()?.block_on(async {
        let gateway = Gateway::open(&config)?;
        let listener = ibac_gateway::bind(&config.listen_addr.to_string()).await?;
        gateway
            .serve(listener, async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await?;
        Ok(())
    })
}

fn seed(config: &Config, fixture_dir: &Path, generate: Option<u64>) -> Result<(), CliError> {
    if let Some(seed) = generate {
        Fixture::generate(seed).write(fixture_dir)?;
    }
    let fixture = Fixture::load(fixture_dir)?;
    fs::create_dir_all(&config.data_dir)?;
    if fs::canonicalize(fixture_dir)? != fs::canonicalize(&config.data_dir)? {
        let occupied = [USERS_FILE, CREDENTIALS_FILE, RECORDS_FILE, POLICY_FILE]
            .iter()
            .any(|f| config.data_dir.join(f).exists());
        if occupied {
            return Err(CliError::Invalid(format!(
                "{} already holds a store",
                config.data_dir.display()
            )));
        }
        for f in [USERS_FILE, CREDENTIALS_FILE, RECORDS_FILE, POLICY_FILE] {
            fs::copy(fixture_dir.join(f), config.data_dir.join(f))?;
        }
    }
    println!(
        "seeded {}: {} users, {} records, {} policy tuples",
        config.data_dir.display(),
        fixture.users.len(),
        fixture.records.len(),
        fixture.policies.tuples().count()
    );
    Ok(())
}

fn read_password() -> Result<Secret, CliError> {
    let password = match std::env::var(PASSWORD_ENV) {
        Ok(p) => p,
        Err(_) => {
            let first = rpassword::prompt_password("password: ")?;
            let again = rpassword::prompt_password("repeat password: ")?;
            if first != again {
                return Err(CliError::Invalid("passwords do not match".into()));
            }
            first
        }
    };
    if password.is_empty() {
        return Err(CliError::Invalid("password must not be empty".into()));
    }
    Ok(Secret::new(password))
}

fn user_add(config: &Config, username: &str, role: Role) -> Result<(), CliError> {
    let user = User::new(username, role).map_err(|e| CliError::Invalid(e.to_string()))?;
    let password = read_password()?;
    let store = open_existing(config, true)?;
    let user = store.put_user(user, &password, &CorrelationId::new())?;
    println!("{}\t{}\t{}", user.user_id, user.username, user.role);
    Ok(())
}

fn audit_tail(config: &Config, from: u64, follow: bool) -> Result<(), CliError> {
    let store = open_existing(config, false)?;
    let mut next = from.max(1);
    loop {
        let events = store.read_audit(next)?;
        let mut out = io::stdout().lock();
        for event in &events {
            writeln!(out, "{event}")?;
            next = event.sequence + 1;
        }
        out.flush()?;
        drop(out);
        if !follow {
            return Ok(());
        }
        std::thread::sleep(Duration::from_millis(500));
    }
}

fn simulate(
    target: &str,
    seed: u64,
    fixture_dir: Option<&Path>,
    weakened: Option<&str>,
    report_dir: Option<&Path>,
) -> Result<(), CliError> {
    let fixture = match fixture_dir {
        Some(dir) => Fixture::load(dir)?,
        None => Fixture::generate(seed),
    };
    let target = Target::remote(target);
    let weak = weakened.map(Target::remote);
    let summary = tokio_runtime()?.block_on(ibac_harness::run_all(seed, &fixture, &target, weak.as_ref()))?;
    print!("{}", summary.to_text());
    if let Some(dir) = report_dir {
        summary.write(dir)?;
    }
    let failed = summary.reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::Verdict(format!(
            "{failed} scenario run(s) failed their verdict"
        )));
    }
    Ok(())
}
