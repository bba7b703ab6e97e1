//! `medclaim`: validate envelopes, run scenarios, compare topologies, serve
//! the gateway, and talk to a running gateway.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use medclaim_client::Client;
use medclaim_core::api::PreAuthForm;
use medclaim_core::domain::{CertifyingDoctor, Decision, Money};
use medclaim_core::envelope::validate;
use medclaim_core::orchestrator::{
    compare_topologies, parse_scenario, render_report, render_table, run_scenario, scenario_stamper, ClaimState,
};
use medclaim_core::platform::Platform;
use medclaim_core::registry::BindState;
use medclaim_core::store::PolicyDirectory;
use medclaim_server::{config_path, Config};
use serde::Serialize;
use uuid::Uuid;

const DEMO_FIXTURES: &str = include_str!("../../../fixtures/demo.txt");

#[derive(Parser)]
#[command(name = "medclaim", version, about = "Cashless health-insurance claim platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Remote {
    /// Gateway base URL.
    #[arg(long, env = "MEDCLAIM_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long, env = "MEDCLAIM_USER")]
    user: String,
    #[arg(long, env = "MEDCLAIM_SECRET", hide_env_values = true)]
    secret: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check an XML envelope; prints `valid` or one PATH<TAB>RULE<TAB>DETAIL line per violation.
    Validate { file: PathBuf },
    /// Check a policy fixture file, or load it into a running gateway with --server.
    Seed {
        #[arg(long)]
        fixtures: PathBuf,
        /// Gateway to load the fixtures into (needs admin credentials).
        #[arg(long, requires_all = ["user", "secret"])]
        server: Option<String>,
        #[arg(long, env = "MEDCLAIM_USER")]
        user: Option<String>,
        #[arg(long, env = "MEDCLAIM_SECRET", hide_env_values = true)]
        secret: Option<String>,
    },
    /// Run a scenario script against an in-process platform.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Policy fixtures; the bundled demo set when omitted.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Also replay the recorded envelopes on a fresh store and compare journals.
        #[arg(long)]
        verify_replay: bool,
        /// Write the claim journal here.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Build the shared and per-policy-type registries and compare instance counts.
    Compare {
        #[arg(long)]
        policy_types: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP gateway. MEDCLAIM_CONFIG, when set, wins over --config.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// List claims visible to the user.
    Claims {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        state: Option<ClaimState>,
    },
    /// Show one claim.
    Claim {
        #[command(flatten)]
        remote: Remote,
        id: Uuid,
    },
    /// File a pre-authorization request.
    Submit {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        uid: String,
        #[arg(long)]
        hospital: String,
        #[arg(long)]
        illness: String,
        #[arg(long)]
        treatment: String,
        /// Estimated expense in minor units.
        #[arg(long)]
        estimate: u64,
        #[arg(long)]
        doctor: String,
        #[arg(long)]
        doctor_registration: String,
        #[arg(long, default_value = "INR")]
        currency: String,
    },
    /// Approve or deny a claim under scrutiny.
    Scrutinize {
        #[command(flatten)]
        remote: Remote,
        id: Uuid,
        #[arg(long)]
        decision: Decision,
        #[arg(long, default_value = "")]
        notes: String,
    },
    /// Authorize cash for an approved claim.
    Authorize {
        #[command(flatten)]
        remote: Remote,
        id: Uuid,
    },
    /// Report the actual bill and pay the hospital.
    Pay {
        #[command(flatten)]
        remote: Remote,
        id: Uuid,
        /// Actual expense in minor units.
        #[arg(long)]
        actual: u64,
        #[arg(long, default_value = "INR")]
        currency: String,
    },
    /// Settle a paid claim.
    Settle {
        #[command(flatten)]
        remote: Remote,
        id: Uuid,
    },
    /// List hospitals, optionally only one TPA's network.
    Hospitals {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        tpa: Option<String>,
    },
    /// List registered service instances.
    Services {
        #[command(flatten)]
        remote: Remote,
    },
    /// Bind or unbind a service instance by hand.
    SetState {
        #[command(flatten)]
        remote: Remote,
        id: Uuid,
        state: BindState,
    },
    /// Show availability and latency metrics.
    Metrics {
        #[command(flatten)]
        remote: Remote,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn money(amount: u64, currency: &str) -> Result<Money> {
    let currency = medclaim_core::domain::Currency::new(currency).map_err(anyhow::Error::msg)?;
    Ok(Money::new(amount, currency))
}

fn validate_file(file: &Path) -> Result<ExitCode> {
    let bytes = std::fs::read(file).with_context(|| format!("cannot read {}", file.display()))?;
    let report = validate(&bytes);
    if report.valid {
        println!("valid");
        return Ok(ExitCode::SUCCESS);
    }
    for v in &report.violations {
        println!("{}\t{}\t{}", v.path, v.rule, v.detail.replace(['\t', '\n'], " "));
    }
    Ok(ExitCode::from(1))
}

async fn simulate(
    scenario: &Path,
    fixtures: Option<&Path>,
    verify_replay: bool,
    journal: Option<&Path>,
    json: bool,
) -> Result<ExitCode> {
    let script = parse_scenario(&read(scenario)?)?;
    let fixture_text = match fixtures {
        Some(p) => read(p)?,
        None => DEMO_FIXTURES.to_string(),
    };
    let directory = || PolicyDirectory::from_fixtures(&fixture_text);
    let platform = Platform::builder(directory()?).record_requests().build();
    let report = run_scenario(&script, &platform, Arc::new(scenario_stamper())).await;
    if json {
        print_json(&report)?;
    } else {
        print!("{}", render_report(&report));
    }
    if let Some(path) = journal {
        std::fs::write(path, platform.store.journal_bytes()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if verify_replay {
        let fresh = Platform::builder(directory()?).build();
        for request in platform.recorded_requests() {
            fresh.bus.replay(&request).await?;
        }
        let (a, b) = (platform.store.journal_bytes(), fresh.store.journal_bytes());
        if a != b {
            eprintln!("replay: journals differ ({} vs {} bytes)", a.len(), b.len());
            return Ok(ExitCode::from(1));
        }
        eprintln!("replay: journal identical ({} envelopes, {} bytes)", platform.recorded_requests().len(), a.len());
    }
    Ok(ExitCode::SUCCESS)
}

async fn connect(remote: &Remote) -> Result<Client> {
    let mut client = Client::new(&remote.server)?;
    client.login(&remote.user, &remote.secret).await?;
    Ok(client)
}

async fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { file } => return validate_file(&file),
        Command::Seed { fixtures, server, user, secret } => {
            let text = read(&fixtures)?;
            let summary = match server {
                None => PolicyDirectory::from_fixtures(&text)?.summary(),
                Some(server) => {
                    let remote = Remote { server, user: user.unwrap_or_default(), secret: secret.unwrap_or_default() };
                    connect(&remote).await?.seed_fixtures(&text).await?
                }
            };
            print_json(&summary)?;
        }
        Command::Simulate { scenario, fixtures, verify_replay, journal, json } => {
            return simulate(&scenario, fixtures.as_deref(), verify_replay, journal.as_deref(), json).await
        }
        Command::Compare { policy_types, json } => {
            let (soa, baseline) = compare_topologies(policy_types)?;
            if json {
                print_json(&[soa, baseline])?;
            } else {
                print!("{}", render_table(&[soa, baseline]));
            }
        }
        Command::Serve { config, port } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let mut cfg = match config_path(config) {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            if let Some(p) = port {
                cfg.server.port = p;
            }
            medclaim_server::serve(cfg).await?;
        }
        Command::Claims { remote, state } => print_json(&connect(&remote).await?.claims(state).await?)?,
        Command::Claim { remote, id } => print_json(&connect(&remote).await?.claim(id).await?)?,
        Command::Submit { remote, uid, hospital, illness, treatment, estimate, doctor, doctor_registration, currency } => {
            let form = PreAuthForm {
                uid,
                hospital_id: hospital,
                illness_details: illness,
                proposed_treatment: treatment,
                estimated_expense: money(estimate, &currency)?,
                certifying_doctor: CertifyingDoctor { name: doctor, registration_number: doctor_registration },
            };
            print_json(&connect(&remote).await?.submit_preauth(&form).await?)?
        }
        Command::Scrutinize { remote, id, decision, notes } => {
            print_json(&connect(&remote).await?.scrutinize(id, decision, &notes).await?)?
        }
        Command::Authorize { remote, id } => print_json(&connect(&remote).await?.authorize(id).await?)?,
        Command::Pay { remote, id, actual, currency } => {
            print_json(&connect(&remote).await?.report_payment(id, money(actual, &currency)?).await?)?
        }
        Command::Settle { remote, id } => print_json(&connect(&remote).await?.settle(id).await?)?,
        Command::Hospitals { remote, tpa } => print_json(&connect(&remote).await?.hospitals(tpa.as_deref()).await?)?,
        Command::Services { remote } => print_json(&connect(&remote).await?.services().await?)?,
        Command::SetState { remote, id, state } => {
            print_json(&connect(&remote).await?.set_service_state(id, state).await?)?
        }
        Command::Metrics { remote } => print_json(&connect(&remote).await?.metrics().await?)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
