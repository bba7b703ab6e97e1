//! Scenario scripts: a line-oriented list of claim submissions and events,
//! run through the full service path.
//!
//! ```text
//! # comment
//! claim A submit INS-ACME-0001 HOSP-001 90000
//! claim A event ScrutinyApprove looks fine
//! claim A event Authorize
//! claim A event PaymentDone 80000
//! claim A event Settle
//! ```
//!
//! Verification runs automatically after a submission, so `VerifyOk` and
//! `VerifyFail` cannot be scripted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::domain::{CertifyingDoctor, Decision, Money, PreAuthRequest, Role};
use crate::envelope::{Actor, Fault, FaultCode};
use crate::orchestrator::{ClaimState, ClaimWorkflow, EventKind};
use crate::platform::Platform;
use crate::store::ClaimRepository;
use crate::transport::{MessageStamper, SequenceStamper};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Submit { uid: String, hospital_id: String, estimated_minor: u64 },
    ScrutinyApprove { notes: String },
    ScrutinyDeny { notes: String },
    Authorize,
    PaymentDone { actual_minor: u64 },
    Settle,
}

impl Step {
    pub fn label(&self) -> &'static str {
        match self {
            Step::Submit { .. } => "submit",
            Step::ScrutinyApprove { .. } => EventKind::ScrutinyApprove.as_str(),
            Step::ScrutinyDeny { .. } => EventKind::ScrutinyDeny.as_str(),
            Step::Authorize => EventKind::Authorize.as_str(),
            Step::PaymentDone { .. } => EventKind::PaymentDone.as_str(),
            Step::Settle => EventKind::Settle.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioLine {
    pub line: usize,
    pub claim_ref: String,
    pub step: Step,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub lines: Vec<ScenarioLine>,
}

fn minor_units(s: Option<&&str>, what: &str, line: usize) -> Result<u64, ScenarioParseError> {
    let err = |message: String| ScenarioParseError { line, message };
    let s = s.ok_or_else(|| err(format!("missing {what}")))?;
    s.parse().map_err(|_| err(format!("{what} '{s}' is not a whole number of minor units")))
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioParseError> {
    let mut lines = Vec::new();
    let mut submitted = std::collections::BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ScenarioParseError { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let (claim_ref, verb, args) = match tokens.as_slice() {
            ["claim", r, verb, args @ ..] => (r.to_string(), *verb, args),
            _ => return Err(err("expected 'claim <ref> submit ...' or 'claim <ref> event ...'".into())),
        };
        let rest = |from: usize| args.get(from..).unwrap_or_default().join(" ");
        let step = match verb {
            "submit" => {
                if args.len() != 3 {
                    return Err(err("submit takes <uid> <hospital-id> <estimated-minor-units>".into()));
                }
                if !submitted.insert(claim_ref.clone()) {
                    return Err(err(format!("claim {claim_ref} is submitted twice")));
                }
                Step::Submit {
                    uid: args[0].to_string(),
                    hospital_id: args[1].to_string(),
                    estimated_minor: minor_units(args.get(2), "estimated expense", line)?,
                }
            }
            "event" => {
                if !submitted.contains(&claim_ref) {
                    return Err(err(format!("claim {claim_ref} has not been submitted")));
                }
                let name = args.first().ok_or_else(|| err("missing event name".into()))?;
                let kind: EventKind = name.parse().map_err(err)?;
                let no_args = |step: Step| {
                    if args.len() == 1 {
                        Ok(step)
                    } else {
                        Err(err(format!("{kind} takes no arguments")))
                    }
                };
                match kind {
                    EventKind::ScrutinyApprove => Step::ScrutinyApprove { notes: rest(1) },
                    EventKind::ScrutinyDeny => Step::ScrutinyDeny { notes: rest(1) },
                    EventKind::Authorize => no_args(Step::Authorize)?,
                    EventKind::Settle => no_args(Step::Settle)?,
                    EventKind::PaymentDone => {
                        if args.len() != 2 {
                            return Err(err("PaymentDone takes <actual-minor-units>".into()));
                        }
                        Step::PaymentDone { actual_minor: minor_units(args.get(1), "actual expense", line)? }
                    }
                    EventKind::Submit | EventKind::VerifyOk | EventKind::VerifyFail => {
                        return Err(err(format!("{kind} happens automatically and cannot be scripted")))
                    }
                }
            }
            other => return Err(err(format!("unknown verb '{other}'"))),
        };
        lines.push(ScenarioLine { line, claim_ref, step });
    }
    Ok(Scenario { lines })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum StepOutcome {
    Ok { state: ClaimState, message: Option<String> },
    Fault { fault: Fault },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub line: usize,
    pub claim_ref: String,
    pub step: String,
    pub claim_id: Option<Uuid>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub trace: Vec<TraceEntry>,
    pub claims: BTreeMap<String, Uuid>,
    pub final_states: BTreeMap<String, ClaimState>,
    pub state_counts: BTreeMap<ClaimState, usize>,
}

const SCENARIO_NAMESPACE: Uuid = Uuid::from_u128(0x6d65_6463_6c61_696d_0000_0000_0000_0003);

/// The deterministic clock and id source scenario runs use.
pub fn scenario_stamper() -> SequenceStamper {
    SequenceStamper::new(SCENARIO_NAMESPACE, Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
}

fn hospital_actor(hospital_id: &str) -> Actor {
    Actor::new(format!("desk-{}", hospital_id.to_ascii_lowercase()), Role::Hospital, hospital_id)
}

/// Runs every scripted step through `platform`'s services, in order.
pub async fn run_scenario(scenario: &Scenario, platform: &Platform, stamper: Arc<dyn MessageStamper>) -> ScenarioReport {
    let workflow: ClaimWorkflow = platform.workflow(Arc::clone(&stamper));
    let mut report = ScenarioReport::default();
    let mut hospitals: BTreeMap<String, String> = BTreeMap::new();
    for sl in &scenario.lines {
        let corr = workflow.correlation_id();
        let claim_id = report.claims.get(&sl.claim_ref).copied();
        let hospital = hospitals.get(&sl.claim_ref).cloned().unwrap_or_default();
        let adjuster = {
            let dir = platform.directory.read();
            let tpa = dir.hospital(&hospital).and_then(|h| h.tpa_networks.iter().next().cloned()).unwrap_or_default();
            Actor::new("scenario-adjuster", Role::Tpa, tpa)
        };
        let result: Result<(Uuid, ClaimState, Option<String>), Fault> = match (&sl.step, claim_id) {
            (Step::Submit { uid, hospital_id, estimated_minor }, _) => {
                hospitals.insert(sl.claim_ref.clone(), hospital_id.clone());
                let preauth = PreAuthRequest {
                    uid: uid.clone(),
                    hospital_id: hospital_id.clone(),
                    illness_details: format!("scripted case {}", sl.claim_ref),
                    proposed_treatment: "as certified".into(),
                    estimated_expense: Money::inr(*estimated_minor),
                    certifying_doctor: CertifyingDoctor {
                        name: "Dr. Scenario".into(),
                        registration_number: "REG-0001".into(),
                    },
                    submitted_at: stamper.now(),
                };
                workflow.submit(hospital_actor(hospital_id), preauth, corr).await.map(|o| {
                    report.claims.insert(sl.claim_ref.clone(), o.claim_id);
                    (o.claim_id, o.state, o.verification.message)
                })
            }
            (_, None) => Err(Fault::new(FaultCode::UnknownClaim, format!("claim {} was never created", sl.claim_ref))),
            (Step::ScrutinyApprove { notes }, Some(id)) => workflow
                .scrutinize(adjuster, id, Decision::Approve, notes.clone(), corr)
                .await
                .map(|r| (id, r.state, None)),
            (Step::ScrutinyDeny { notes }, Some(id)) => workflow
                .scrutinize(adjuster, id, Decision::Deny, notes.clone(), corr)
                .await
                .map(|r| (id, r.state, None)),
            (Step::Authorize, Some(id)) => workflow.authorize(adjuster, id, corr).await.map(|r| (id, r.state, None)),
            (Step::PaymentDone { actual_minor }, Some(id)) => workflow
                .pay(hospital_actor(&hospital), id, Money::inr(*actual_minor), corr)
                .await
                .map(|r| (id, r.state, None)),
            (Step::Settle, Some(id)) => workflow.settle(adjuster, id, corr).await.map(|r| (id, r.state, None)),
        };
        let (claim_id, outcome) = match result {
            Ok((id, state, message)) => (Some(id), StepOutcome::Ok { state, message }),
            Err(fault) => (claim_id, StepOutcome::Fault { fault }),
        };
        report.trace.push(TraceEntry {
            line: sl.line,
            claim_ref: sl.claim_ref.clone(),
            step: sl.step.label().to_string(),
            claim_id,
            outcome,
        });
    }
    for (claim_ref, id) in &report.claims {
        if let Ok(claim) = platform.store.load(*id) {
            report.final_states.insert(claim_ref.clone(), claim.state);
            *report.state_counts.entry(claim.state).or_default() += 1;
        }
    }
    report
}

/// Human-readable trace and summary.
pub fn render_report(report: &ScenarioReport) -> String {
    let mut out = String::new();
    for t in &report.trace {
        let what = match &t.outcome {
            StepOutcome::Ok { state, message: Some(m) } => format!("{state} ({m})"),
            StepOutcome::Ok { state, message: None } => state.to_string(),
            StepOutcome::Fault { fault } => format!("fault {fault}"),
        };
        let _ = writeln!(out, "line {:>3}  claim {:<6} {:<16} {what}", t.line, t.claim_ref, t.step);
    }
    let _ = writeln!(out);
    for (claim_ref, state) in &report.final_states {
        let _ = writeln!(out, "claim {claim_ref:<6} {state}");
    }
    let counts: Vec<String> = report.state_counts.iter().map(|(s, n)| format!("{s}:{n}")).collect();
    let _ = writeln!(out, "final states {{{}}}", counts.join(", "));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_steps_and_comments() {
        let s = parse_scenario(
            "# demo\n\nclaim A submit U1 H1 500\nclaim A event ScrutinyDeny too   costly\nclaim A event PaymentDone 40\n",
        )
        .unwrap();
        assert_eq!(s.lines.len(), 3);
        assert_eq!(s.lines[0].line, 3);
        assert_eq!(s.lines[1].step, Step::ScrutinyDeny { notes: "too costly".into() });
        assert_eq!(s.lines[2].step, Step::PaymentDone { actual_minor: 40 });
    }

    #[test]
    fn reports_the_offending_line() {
        let line = |t: &str| parse_scenario(t).unwrap_err().line;
        assert_eq!(line("claim A submit U1 H1 500\nclaim A submit U1 H1 500"), 2);
        assert_eq!(line("claim A submit U1 H1 lots"), 1);
        assert_eq!(line("# x\nclaim B event Settle"), 2);
        assert_eq!(line("claim A submit U1 H1 5\nclaim A event Teleport"), 2);
        assert_eq!(line("claim A submit U1 H1 5\nclaim A event VerifyOk"), 2);
        assert_eq!(line("claim A submit U1 H1 5\nclaim A event Settle now"), 2);
        assert_eq!(line("claim A submit U1 H1 5\nclaim A event PaymentDone"), 2);
        assert_eq!(line("bogus"), 1);
    }
}
