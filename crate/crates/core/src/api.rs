//! JSON bodies of the HTTP API, shared by the server and its clients.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::domain::{Authorization, CertifyingDoctor, Claim, Decision, Money, PaymentRecord, Role, Settlement};
use crate::envelope::{Fault, ScrutinyFacts};
use crate::orchestrator::{allowed_events, ClaimState, EventKind};
use crate::registry::BindState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub subject_id: String,
    pub role: Role,
    pub display_name: String,
    pub affiliation: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

/// The pre-authorization form as a client fills it in; the server stamps
/// the submission time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreAuthForm {
    pub uid: String,
    pub hospital_id: String,
    pub illness_details: String,
    pub proposed_treatment: String,
    pub estimated_expense: Money,
    pub certifying_doctor: CertifyingDoctor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitReply {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// A stored claim with the events its state accepts next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimView {
    #[serde(flatten)]
    pub claim: Claim,
    pub allowed_events: Vec<EventKind>,
    /// Rule-assist facts, shown to adjusters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facts: Option<ScrutinyFacts>,
}

impl ClaimView {
    pub fn new(claim: Claim, facts: Option<ScrutinyFacts>) -> Self {
        let allowed_events = allowed_events(claim.state).into_iter().collect();
        ClaimView { claim, allowed_events, facts }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<ClaimState>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tpa: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrutinyForm {
    pub decision: Decision,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentForm {
    pub actual_expense: Money,
}

/// The result of a workflow action on one claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionReply {
    pub claim_id: Uuid,
    pub state: ClaimState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facts: Option<ScrutinyFacts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authorization: Option<Authorization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payment: Option<PaymentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement: Option<Settlement>,
}

impl ActionReply {
    pub fn new(claim_id: Uuid, state: ClaimState) -> Self {
        ActionReply { claim_id, state, facts: None, authorization: None, payment: None, settlement: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub state: BindState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureUpload {
    pub fixtures: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl From<Fault> for ErrorBody {
    fn from(f: Fault) -> Self {
        ErrorBody { code: f.code.to_string(), message: f.message, detail: f.detail }
    }
}
