//! The claim workflow state machine.
//!
//! The transition table in [`next_state`] is the single source of truth for
//! which events a claim accepts in each state.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    wire_enum, Authorization, Claim, HistoryEntry, PaymentRecord, PolicyRecord, ScrutinyRecord,
    Settlement,
};

wire_enum!(ClaimState {
    Submitted => "SUBMITTED",
    IdRejected => "ID_REJECTED",
    Verified => "VERIFIED",
    UnderScrutiny => "UNDER_SCRUTINY",
    ScrutinyDenied => "SCRUTINY_DENIED",
    ScrutinyApproved => "SCRUTINY_APPROVED",
    CashAuthorized => "CASH_AUTHORIZED",
    Paid => "PAID",
    Settled => "SETTLED",
});

impl ClaimState {
    pub fn is_terminal(self) -> bool {
        matches!(self, ClaimState::IdRejected | ClaimState::ScrutinyDenied | ClaimState::Settled)
    }
}

wire_enum!(EventKind {
    Submit => "Submit",
    VerifyOk => "VerifyOk",
    VerifyFail => "VerifyFail",
    ScrutinyApprove => "ScrutinyApprove",
    ScrutinyDeny => "ScrutinyDeny",
    Authorize => "Authorize",
    PaymentDone => "PaymentDone",
    Settle => "Settle",
});

wire_enum!(
    /// Steps the orchestrator takes on its own after an event.
    InternalCommand {
        EnqueueForScrutiny => "EnqueueForScrutiny",
    }
);

/// What caused a recorded transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Trigger {
    Event(EventKind),
    Internal(InternalCommand),
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Event(e) => e.fmt(f),
            Trigger::Internal(c) => c.fmt(f),
        }
    }
}

impl FromStr for Trigger {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<EventKind>()
            .map(Trigger::Event)
            .or_else(|_| s.parse::<InternalCommand>().map(Trigger::Internal))
            .map_err(|_| format!("unknown trigger '{s}'"))
    }
}

impl TryFrom<String> for Trigger {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Trigger> for String {
    fn from(t: Trigger) -> String {
        t.to_string()
    }
}

/// An event with the record it attaches to the claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClaimEvent {
    Submit,
    VerifyOk(PolicyRecord),
    VerifyFail,
    ScrutinyApprove(ScrutinyRecord),
    ScrutinyDeny(ScrutinyRecord),
    Authorize(Authorization),
    PaymentDone(PaymentRecord),
    Settle(Settlement),
}

impl ClaimEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            ClaimEvent::Submit => EventKind::Submit,
            ClaimEvent::VerifyOk(_) => EventKind::VerifyOk,
            ClaimEvent::VerifyFail => EventKind::VerifyFail,
            ClaimEvent::ScrutinyApprove(_) => EventKind::ScrutinyApprove,
            ClaimEvent::ScrutinyDeny(_) => EventKind::ScrutinyDeny,
            ClaimEvent::Authorize(_) => EventKind::Authorize,
            ClaimEvent::PaymentDone(_) => EventKind::PaymentDone,
            ClaimEvent::Settle(_) => EventKind::Settle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event {event} is not allowed in state {state}")]
pub struct IllegalTransition {
    pub state: ClaimState,
    pub event: EventKind,
}

/// The transition table for external events.
pub fn next_state(state: ClaimState, event: EventKind) -> Option<ClaimState> {
    use ClaimState::*;
    use EventKind::*;
    match (state, event) {
        (Submitted, VerifyOk) => Some(Verified),
        (Submitted, VerifyFail) => Some(IdRejected),
        (UnderScrutiny, ScrutinyApprove) => Some(ScrutinyApproved),
        (UnderScrutiny, ScrutinyDeny) => Some(ScrutinyDenied),
        (ScrutinyApproved, Authorize) => Some(CashAuthorized),
        (CashAuthorized, PaymentDone) => Some(Paid),
        (Paid, Settle) => Some(Settled),
        _ => None,
    }
}

/// The internal step the orchestrator takes on entering `state`, if any.
pub fn internal_step(state: ClaimState) -> Option<(InternalCommand, ClaimState)> {
    match state {
        ClaimState::Verified => Some((InternalCommand::EnqueueForScrutiny, ClaimState::UnderScrutiny)),
        _ => None,
    }
}

pub fn allowed_events(state: ClaimState) -> BTreeSet<EventKind> {
    EventKind::ALL
        .iter()
        .copied()
        .filter(|e| next_state(state, *e).is_some())
        .collect()
}

/// Applies `event` to `claim`, then any internal steps it triggers.
///
/// Returns the successor claim and the internal commands that were applied.
/// The input claim is left untouched.
pub fn advance(
    claim: &Claim,
    event: ClaimEvent,
    at: DateTime<Utc>,
    actor: &str,
) -> Result<(Claim, Vec<InternalCommand>), IllegalTransition> {
    let kind = event.kind();
    let to = next_state(claim.state, kind).ok_or(IllegalTransition {
        state: claim.state,
        event: kind,
    })?;
    let mut next = claim.clone();
    match event {
        ClaimEvent::Submit | ClaimEvent::VerifyFail => {}
        ClaimEvent::VerifyOk(policy) => next.policy = Some(policy),
        ClaimEvent::ScrutinyApprove(record) | ClaimEvent::ScrutinyDeny(record) => {
            next.scrutiny = Some(record)
        }
        ClaimEvent::Authorize(auth) => next.authorization = Some(auth),
        ClaimEvent::PaymentDone(payment) => next.payment = Some(payment),
        ClaimEvent::Settle(settlement) => next.settlement = Some(settlement),
    }
    next.history.push(HistoryEntry {
        from: claim.state,
        event: Trigger::Event(kind),
        to,
        at,
        actor: actor.to_string(),
    });
    next.state = to;

    let mut emitted = Vec::new();
    while let Some((command, to)) = internal_step(next.state) {
        next.history.push(HistoryEntry {
            from: next.state,
            event: Trigger::Internal(command),
            to,
            at,
            actor: "orchestrator".into(),
        });
        next.state = to;
        emitted.push(command);
    }
    Ok((next, emitted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CertifyingDoctor, Decision, Money, PolicyStatus, PreAuthRequest};
    use uuid::Uuid;

    fn at(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + secs, 0).unwrap()
    }

    fn claim() -> Claim {
        Claim::new(
            Uuid::nil(),
            PreAuthRequest {
                uid: "INS-ACME-0001".into(),
                hospital_id: "HOSP-001".into(),
                illness_details: "appendicitis".into(),
                proposed_treatment: "appendectomy".into(),
                estimated_expense: Money::inr(50_000),
                certifying_doctor: CertifyingDoctor {
                    name: "Dr. Rao".into(),
                    registration_number: "MCI-1".into(),
                },
                submitted_at: at(0),
            },
        )
    }

    fn policy() -> PolicyRecord {
        PolicyRecord {
            uid: "INS-ACME-0001".into(),
            company_id: "ACME".into(),
            policy_type: "hospitalization".into(),
            eligible_amount: Money::inr(100_000),
            status: PolicyStatus::Active,
        }
    }

    #[test]
    fn verify_fail_rejects_identity() {
        let (next, cmds) = advance(&claim(), ClaimEvent::VerifyFail, at(1), "svc").unwrap();
        assert_eq!(next.state, ClaimState::IdRejected);
        assert!(cmds.is_empty());
        assert_eq!(next.history.len(), 1);
        assert_eq!(next.history[0].from, ClaimState::Submitted);
        assert_eq!(next.history[0].to, ClaimState::IdRejected);
    }

    #[test]
    fn verify_ok_enqueues_for_scrutiny() {
        let (next, cmds) = advance(&claim(), ClaimEvent::VerifyOk(policy()), at(1), "svc").unwrap();
        assert_eq!(next.state, ClaimState::UnderScrutiny);
        assert_eq!(cmds, vec![InternalCommand::EnqueueForScrutiny]);
        assert_eq!(next.history.len(), 2);
        assert_eq!(next.history[1].event, Trigger::Internal(InternalCommand::EnqueueForScrutiny));
        assert_eq!(next.policy, Some(policy()));
    }

    #[test]
    fn terminal_states_accept_nothing() {
        for state in ClaimState::ALL {
            if state.is_terminal() {
                assert!(allowed_events(*state).is_empty(), "{state}");
            }
        }
        let mut settled = claim();
        settled.state = ClaimState::Settled;
        let err = advance(&settled, ClaimEvent::VerifyFail, at(1), "x").unwrap_err();
        assert_eq!(err, IllegalTransition { state: ClaimState::Settled, event: EventKind::VerifyFail });
    }

    #[test]
    fn under_scrutiny_offers_approve_and_deny() {
        let got: Vec<_> = allowed_events(ClaimState::UnderScrutiny).into_iter().collect();
        assert_eq!(got, vec![EventKind::ScrutinyApprove, EventKind::ScrutinyDeny]);
        assert!(allowed_events(ClaimState::IdRejected).is_empty());
    }

    #[test]
    fn illegal_transition_leaves_claim_unchanged() {
        let c = claim();
        let record = ScrutinyRecord {
            decision: Decision::Approve,
            adjuster_id: "adj".into(),
            notes: String::new(),
            decided_at: at(1),
        };
        assert!(advance(&c, ClaimEvent::ScrutinyApprove(record), at(1), "x").is_err());
        assert_eq!(c, claim());
    }

    #[test]
    fn trigger_names_roundtrip() {
        for t in [
            Trigger::Event(EventKind::PaymentDone),
            Trigger::Internal(InternalCommand::EnqueueForScrutiny),
        ] {
            assert_eq!(t.to_string().parse::<Trigger>().unwrap(), t);
        }
    }
}
