//! Operation payloads carried in the envelope body.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::schema::{
    canonical_timestamp, canonical_uuid, money_element, Ctx, FieldSpec, Fields, Occurs, Rule,
};
use crate::domain::{
    wire_enum, Authorization, CertifyingDoctor, Decision, Money, PaymentRecord, PolicyRecord,
    PreAuthRequest, Role, Settlement,
};
use crate::orchestrator::ClaimState;
use crate::xml::Element;

use Occurs::{One, Optional};

wire_enum!(
    /// The closed fault vocabulary shared by every service.
    FaultCode {
        InvalidRequest => "invalid-request",
        UnknownHospital => "unknown-hospital",
        UnknownClaim => "unknown-claim",
        WrongState => "wrong-state",
        Forbidden => "forbidden",
        ServiceUnavailable => "service-unavailable",
        Conflict => "conflict",
        SchemaViolation => "schema-violation",
        UnknownOperation => "unknown-operation",
        Internal => "internal",
    }
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub code: FaultCode,
    pub message: String,
    pub detail: Option<String>,
}

impl Fault {
    pub fn new(code: FaultCode, message: impl Into<String>) -> Self {
        Fault { code, message: message.into(), detail: None }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

/// The principal on whose behalf a request is made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub subject_id: String,
    pub role: Role,
    /// The uid, hospital id or TPA id the principal is bound to; empty for admins.
    pub affiliation: String,
}

impl Actor {
    pub fn new(subject_id: impl Into<String>, role: Role, affiliation: impl Into<String>) -> Self {
        Actor { subject_id: subject_id.into(), role, affiliation: affiliation.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreAuthSubmitRequest {
    pub actor: Actor,
    pub preauth: PreAuthRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreAuthSubmitResponse {
    pub claim_id: Uuid,
    pub state: ClaimState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyRequest {
    pub uid: String,
    /// When present, the outcome is recorded on this claim.
    pub claim_id: Option<Uuid>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyResponse {
    pub valid: bool,
    pub policy: Option<PolicyRecord>,
    pub message: Option<String>,
    pub detail: Option<String>,
    pub claim_id: Option<Uuid>,
    pub state: Option<ClaimState>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrutinyRequest {
    pub claim_id: Uuid,
    pub actor: Actor,
    pub decision: Decision,
    pub notes: String,
}

/// Machine-computed facts shown to the adjuster alongside a decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrutinyFacts {
    pub hospital_in_network: bool,
    pub estimated_expense: Money,
    pub eligible_amount: Money,
    pub estimate_within_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrutinyResponse {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub facts: ScrutinyFacts,
}

/// Authorize and settle requests: a claim and who is acting on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimAction {
    pub claim_id: Uuid,
    pub actor: Actor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizeResponse {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub authorization: Authorization,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentRequest {
    pub claim_id: Uuid,
    pub actor: Actor,
    pub actual_expense: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentResponse {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub payment: PaymentRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettleResponse {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub settlement: Settlement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    PreAuthSubmit(PreAuthSubmitRequest),
    Verify(VerifyRequest),
    Scrutiny(ScrutinyRequest),
    Authorize(ClaimAction),
    Payment(PaymentRequest),
    Settle(ClaimAction),
    Ping,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    PreAuthSubmit(PreAuthSubmitResponse),
    Verify(VerifyResponse),
    Scrutiny(ScrutinyResponse),
    Authorize(AuthorizeResponse),
    Payment(PaymentResponse),
    Settle(SettleResponse),
    Pong,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Request(Request),
    Response(Response),
    Fault(Fault),
}

/// Every element name allowed as the single child of `<Body>`.
pub const BODY_ELEMENTS: &[&str] = &[
    "PreAuthSubmitRequest",
    "PreAuthSubmitResponse",
    "VerifyRequest",
    "VerifyResponse",
    "ScrutinyRequest",
    "ScrutinyResponse",
    "AuthorizeRequest",
    "AuthorizeResponse",
    "PaymentRequest",
    "PaymentResponse",
    "SettleRequest",
    "SettleResponse",
    "Ping",
    "Pong",
    "Fault",
];

impl Body {
    pub fn element_name(&self) -> &'static str {
        match self {
            Body::Request(r) => match r {
                Request::PreAuthSubmit(_) => "PreAuthSubmitRequest",
                Request::Verify(_) => "VerifyRequest",
                Request::Scrutiny(_) => "ScrutinyRequest",
                Request::Authorize(_) => "AuthorizeRequest",
                Request::Payment(_) => "PaymentRequest",
                Request::Settle(_) => "SettleRequest",
                Request::Ping => "Ping",
            },
            Body::Response(r) => match r {
                Response::PreAuthSubmit(_) => "PreAuthSubmitResponse",
                Response::Verify(_) => "VerifyResponse",
                Response::Scrutiny(_) => "ScrutinyResponse",
                Response::Authorize(_) => "AuthorizeResponse",
                Response::Payment(_) => "PaymentResponse",
                Response::Settle(_) => "SettleResponse",
                Response::Pong => "Pong",
            },
            Body::Fault(_) => "Fault",
        }
    }

    pub(crate) fn to_element(&self) -> Element {
        let name = self.element_name();
        let children = match self {
            Body::Request(r) => match r {
                Request::PreAuthSubmit(r) => {
                    let mut kids = vec![actor_element(&r.actor)];
                    kids.extend(preauth_fields(&r.preauth));
                    kids
                }
                Request::Verify(r) => {
                    let mut kids = vec![Element::leaf("Uid", &r.uid)];
                    if let Some(id) = &r.claim_id {
                        kids.push(uuid_leaf("ClaimId", id));
                    }
                    kids
                }
                Request::Scrutiny(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    actor_element(&r.actor),
                    Element::leaf("Decision", r.decision.as_str()),
                    Element::leaf("Notes", &r.notes),
                ],
                Request::Authorize(a) | Request::Settle(a) => {
                    vec![uuid_leaf("ClaimId", &a.claim_id), actor_element(&a.actor)]
                }
                Request::Payment(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    actor_element(&r.actor),
                    money_element("ActualExpense", &r.actual_expense),
                ],
                Request::Ping => vec![],
            },
            Body::Response(r) => match r {
                Response::PreAuthSubmit(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    Element::leaf("State", r.state.as_str()),
                ],
                Response::Verify(r) => {
                    let mut kids = vec![Element::leaf("Valid", bool_text(r.valid))];
                    if let Some(p) = &r.policy {
                        kids.push(policy_element("Policy", p));
                    }
                    if let Some(m) = &r.message {
                        kids.push(Element::leaf("Message", m));
                    }
                    if let Some(d) = &r.detail {
                        kids.push(Element::leaf("Detail", d));
                    }
                    if let Some(id) = &r.claim_id {
                        kids.push(uuid_leaf("ClaimId", id));
                    }
                    if let Some(s) = r.state {
                        kids.push(Element::leaf("State", s.as_str()));
                    }
                    kids
                }
                Response::Scrutiny(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    Element::leaf("State", r.state.as_str()),
                    Element::node(
                        "Facts",
                        vec![
                            Element::leaf("HospitalInNetwork", bool_text(r.facts.hospital_in_network)),
                            money_element("EstimatedExpense", &r.facts.estimated_expense),
                            money_element("EligibleAmount", &r.facts.eligible_amount),
                            Element::leaf(
                                "EstimateWithinEligible",
                                bool_text(r.facts.estimate_within_eligible),
                            ),
                        ],
                    ),
                ],
                Response::Authorize(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    Element::leaf("State", r.state.as_str()),
                    money_element("AuthorizedAmount", &r.authorization.authorized_amount),
                    Element::leaf("AuthorizedAt", canonical_timestamp(&r.authorization.authorized_at)),
                ],
                Response::Payment(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    Element::leaf("State", r.state.as_str()),
                    money_element("PaidAmount", &r.payment.paid_amount),
                    money_element("ActualExpense", &r.payment.actual_expense),
                    Element::leaf("PayeeHospitalId", &r.payment.payee_hospital_id),
                    Element::leaf("PaidAt", canonical_timestamp(&r.payment.paid_at)),
                ],
                Response::Settle(r) => vec![
                    uuid_leaf("ClaimId", &r.claim_id),
                    Element::leaf("State", r.state.as_str()),
                    money_element("RefundAmount", &r.settlement.refund_amount),
                    Element::leaf("SettledAt", canonical_timestamp(&r.settlement.settled_at)),
                ],
                Response::Pong => vec![],
            },
            Body::Fault(f) => {
                let mut kids = vec![
                    Element::leaf("Code", f.code.as_str()),
                    Element::leaf("Message", &f.message),
                ];
                if let Some(d) = &f.detail {
                    kids.push(Element::leaf("Detail", d));
                }
                kids
            }
        };
        Element::node(name, children)
    }

    /// Reads a payload element. The caller has checked `el.name` is in
    /// [`BODY_ELEMENTS`].
    pub(crate) fn read(el: &Element, path: &str, cx: &mut Ctx) -> Option<Body> {
        let body = match el.name.as_str() {
            "PreAuthSubmitRequest" => {
                let mut spec: Vec<FieldSpec> = vec![("Actor", One)];
                spec.extend_from_slice(PREAUTH_FIELDS);
                let f = Fields::read(el, path, &spec, cx);
                let actor = read_actor(&f, cx);
                let preauth = read_preauth(&f, cx);
                Body::Request(Request::PreAuthSubmit(PreAuthSubmitRequest { actor: actor?, preauth: preauth? }))
            }
            "PreAuthSubmitResponse" => {
                let f = Fields::read(el, path, &[("ClaimId", One), ("State", One)], cx);
                let claim_id = f.uuid("ClaimId", cx);
                let state = f.parsed("State", Rule::InvalidValue, cx);
                Body::Response(Response::PreAuthSubmit(PreAuthSubmitResponse { claim_id: claim_id?, state: state? }))
            }
            "VerifyRequest" => {
                let f = Fields::read(el, path, &[("Uid", One), ("ClaimId", Optional)], cx);
                let uid = f.text("Uid", cx);
                let claim_id = f.opt_uuid("ClaimId", cx);
                Body::Request(Request::Verify(VerifyRequest { uid: uid?, claim_id: claim_id? }))
            }
            "VerifyResponse" => {
                let f = Fields::read(
                    el,
                    path,
                    &[
                        ("Valid", One),
                        ("Policy", Optional),
                        ("Message", Optional),
                        ("Detail", Optional),
                        ("ClaimId", Optional),
                        ("State", Optional),
                    ],
                    cx,
                );
                let valid = f.boolean("Valid", cx);
                let policy = match f.element("Policy") {
                    None => Some(None),
                    Some((p, pp)) => read_policy(p, &pp, cx).map(Some),
                };
                let message = f.opt_text("Message", cx);
                let detail = f.opt_text("Detail", cx);
                let claim_id = f.opt_uuid("ClaimId", cx);
                let state = f.opt_parsed("State", Rule::InvalidValue, cx);
                Body::Response(Response::Verify(VerifyResponse {
                    valid: valid?,
                    policy: policy?,
                    message: message?,
                    detail: detail?,
                    claim_id: claim_id?,
                    state: state?,
                }))
            }
            "ScrutinyRequest" => {
                let f = Fields::read(
                    el,
                    path,
                    &[("ClaimId", One), ("Actor", One), ("Decision", One), ("Notes", One)],
                    cx,
                );
                let claim_id = f.uuid("ClaimId", cx);
                let actor = read_actor(&f, cx);
                let decision = f.parsed("Decision", Rule::InvalidValue, cx);
                let notes = f.text("Notes", cx);
                Body::Request(Request::Scrutiny(ScrutinyRequest {
                    claim_id: claim_id?,
                    actor: actor?,
                    decision: decision?,
                    notes: notes?,
                }))
            }
            "ScrutinyResponse" => {
                let f = Fields::read(el, path, &[("ClaimId", One), ("State", One), ("Facts", One)], cx);
                let claim_id = f.uuid("ClaimId", cx);
                let state = f.parsed("State", Rule::InvalidValue, cx);
                let facts = f.element("Facts").and_then(|(fe, fp)| {
                    let ff = Fields::read(
                        fe,
                        &fp,
                        &[
                            ("HospitalInNetwork", One),
                            ("EstimatedExpense", One),
                            ("EligibleAmount", One),
                            ("EstimateWithinEligible", One),
                        ],
                        cx,
                    );
                    let in_network = ff.boolean("HospitalInNetwork", cx);
                    let estimated = ff.money("EstimatedExpense", cx);
                    let eligible = ff.money("EligibleAmount", cx);
                    let within = ff.boolean("EstimateWithinEligible", cx);
                    Some(ScrutinyFacts {
                        hospital_in_network: in_network?,
                        estimated_expense: estimated?,
                        eligible_amount: eligible?,
                        estimate_within_eligible: within?,
                    })
                });
                Body::Response(Response::Scrutiny(ScrutinyResponse { claim_id: claim_id?, state: state?, facts: facts? }))
            }
            "AuthorizeRequest" | "SettleRequest" => {
                let f = Fields::read(el, path, &[("ClaimId", One), ("Actor", One)], cx);
                let claim_id = f.uuid("ClaimId", cx);
                let actor = read_actor(&f, cx);
                let action = ClaimAction { claim_id: claim_id?, actor: actor? };
                if el.name == "AuthorizeRequest" {
                    Body::Request(Request::Authorize(action))
                } else {
                    Body::Request(Request::Settle(action))
                }
            }
            "AuthorizeResponse" => {
                let f = Fields::read(
                    el,
                    path,
                    &[("ClaimId", One), ("State", One), ("AuthorizedAmount", One), ("AuthorizedAt", One)],
                    cx,
                );
                let claim_id = f.uuid("ClaimId", cx);
                let state = f.parsed("State", Rule::InvalidValue, cx);
                let amount = f.money("AuthorizedAmount", cx);
                let at = f.timestamp("AuthorizedAt", cx);
                Body::Response(Response::Authorize(AuthorizeResponse {
                    claim_id: claim_id?,
                    state: state?,
                    authorization: Authorization { authorized_amount: amount?, authorized_at: at? },
                }))
            }
            "PaymentRequest" => {
                let f = Fields::read(el, path, &[("ClaimId", One), ("Actor", One), ("ActualExpense", One)], cx);
                let claim_id = f.uuid("ClaimId", cx);
                let actor = read_actor(&f, cx);
                let actual = f.money("ActualExpense", cx);
                Body::Request(Request::Payment(PaymentRequest {
                    claim_id: claim_id?,
                    actor: actor?,
                    actual_expense: actual?,
                }))
            }
            "PaymentResponse" => {
                let f = Fields::read(
                    el,
                    path,
                    &[
                        ("ClaimId", One),
                        ("State", One),
                        ("PaidAmount", One),
                        ("ActualExpense", One),
                        ("PayeeHospitalId", One),
                        ("PaidAt", One),
                    ],
                    cx,
                );
                let claim_id = f.uuid("ClaimId", cx);
                let state = f.parsed("State", Rule::InvalidValue, cx);
                let payment = read_payment_fields(&f, cx);
                Body::Response(Response::Payment(PaymentResponse { claim_id: claim_id?, state: state?, payment: payment? }))
            }
            "SettleResponse" => {
                let f = Fields::read(
                    el,
                    path,
                    &[("ClaimId", One), ("State", One), ("RefundAmount", One), ("SettledAt", One)],
                    cx,
                );
                let claim_id = f.uuid("ClaimId", cx);
                let state = f.parsed("State", Rule::InvalidValue, cx);
                let settlement = read_settlement_fields(&f, cx);
                Body::Response(Response::Settle(SettleResponse {
                    claim_id: claim_id?,
                    state: state?,
                    settlement: settlement?,
                }))
            }
            "Ping" | "Pong" => {
                Fields::read(el, path, &[], cx);
                if el.name == "Ping" {
                    Body::Request(Request::Ping)
                } else {
                    Body::Response(Response::Pong)
                }
            }
            "Fault" => {
                let f = Fields::read(el, path, &[("Code", One), ("Message", One), ("Detail", Optional)], cx);
                let code = f.parsed("Code", Rule::InvalidValue, cx);
                let message = f.text("Message", cx);
                let detail = f.opt_text("Detail", cx);
                Body::Fault(Fault { code: code?, message: message?, detail: detail? })
            }
            _ => return None,
        };
        Some(body)
    }
}

fn bool_text(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn uuid_leaf(name: &str, id: &Uuid) -> Element {
    Element::leaf(name, canonical_uuid(id))
}

fn actor_element(actor: &Actor) -> Element {
    Element::node(
        "Actor",
        vec![
            Element::leaf("SubjectId", &actor.subject_id),
            Element::leaf("Role", actor.role.as_str()),
            Element::leaf("Affiliation", &actor.affiliation),
        ],
    )
}

fn read_actor(f: &Fields<'_>, cx: &mut Ctx) -> Option<Actor> {
    let (el, path) = f.element("Actor")?;
    let af = Fields::read(el, &path, &[("SubjectId", One), ("Role", One), ("Affiliation", One)], cx);
    let subject_id = af.text("SubjectId", cx);
    let role = af.parsed("Role", Rule::InvalidValue, cx);
    let affiliation = af.text("Affiliation", cx);
    Some(Actor { subject_id: subject_id?, role: role?, affiliation: affiliation? })
}

pub(crate) const PREAUTH_FIELDS: &[FieldSpec] = &[
    ("Uid", One),
    ("HospitalId", One),
    ("IllnessDetails", One),
    ("ProposedTreatment", One),
    ("EstimatedExpense", One),
    ("CertifyingDoctor", One),
    ("SubmittedAt", One),
];

pub(crate) fn preauth_fields(p: &PreAuthRequest) -> Vec<Element> {
    vec![
        Element::leaf("Uid", &p.uid),
        Element::leaf("HospitalId", &p.hospital_id),
        Element::leaf("IllnessDetails", &p.illness_details),
        Element::leaf("ProposedTreatment", &p.proposed_treatment),
        money_element("EstimatedExpense", &p.estimated_expense),
        Element::node(
            "CertifyingDoctor",
            vec![
                Element::leaf("Name", &p.certifying_doctor.name),
                Element::leaf("RegistrationNumber", &p.certifying_doctor.registration_number),
            ],
        ),
        Element::leaf("SubmittedAt", canonical_timestamp(&p.submitted_at)),
    ]
}

pub(crate) fn read_preauth(f: &Fields<'_>, cx: &mut Ctx) -> Option<PreAuthRequest> {
    let uid = f.text("Uid", cx);
    let hospital_id = f.text("HospitalId", cx);
    let illness = f.text("IllnessDetails", cx);
    let treatment = f.text("ProposedTreatment", cx);
    let estimated = f.money("EstimatedExpense", cx);
    let doctor = f.element("CertifyingDoctor").and_then(|(el, path)| {
        let df = Fields::read(el, &path, &[("Name", One), ("RegistrationNumber", One)], cx);
        let name = df.text("Name", cx);
        let reg = df.text("RegistrationNumber", cx);
        Some(CertifyingDoctor { name: name?, registration_number: reg? })
    });
    let submitted_at = f.timestamp("SubmittedAt", cx);
    Some(PreAuthRequest {
        uid: uid?,
        hospital_id: hospital_id?,
        illness_details: illness?,
        proposed_treatment: treatment?,
        estimated_expense: estimated?,
        certifying_doctor: doctor?,
        submitted_at: submitted_at?,
    })
}

pub(crate) fn policy_element(name: &str, p: &PolicyRecord) -> Element {
    Element::node(
        name,
        vec![
            Element::leaf("Uid", &p.uid),
            Element::leaf("CompanyId", &p.company_id),
            Element::leaf("PolicyType", &p.policy_type),
            money_element("EligibleAmount", &p.eligible_amount),
            Element::leaf("Status", p.status.as_str()),
        ],
    )
}

pub(crate) fn read_policy(el: &Element, path: &str, cx: &mut Ctx) -> Option<PolicyRecord> {
    let f = Fields::read(
        el,
        path,
        &[
            ("Uid", One),
            ("CompanyId", One),
            ("PolicyType", One),
            ("EligibleAmount", One),
            ("Status", One),
        ],
        cx,
    );
    let uid = f.text("Uid", cx);
    let company = f.text("CompanyId", cx);
    let policy_type = f.text("PolicyType", cx);
    let eligible = f.money("EligibleAmount", cx);
    let status = f.parsed("Status", Rule::InvalidValue, cx);
    Some(PolicyRecord {
        uid: uid?,
        company_id: company?,
        policy_type: policy_type?,
        eligible_amount: eligible?,
        status: status?,
    })
}

pub(crate) fn payment_fields(p: &PaymentRecord) -> Vec<Element> {
    vec![
        money_element("PaidAmount", &p.paid_amount),
        money_element("ActualExpense", &p.actual_expense),
        Element::leaf("PayeeHospitalId", &p.payee_hospital_id),
        Element::leaf("PaidAt", canonical_timestamp(&p.paid_at)),
    ]
}

pub(crate) fn read_payment_fields(f: &Fields<'_>, cx: &mut Ctx) -> Option<PaymentRecord> {
    let paid = f.money("PaidAmount", cx);
    let actual = f.money("ActualExpense", cx);
    let payee = f.text("PayeeHospitalId", cx);
    let at = f.timestamp("PaidAt", cx);
    Some(PaymentRecord { paid_amount: paid?, actual_expense: actual?, payee_hospital_id: payee?, paid_at: at? })
}

pub(crate) fn read_settlement_fields(f: &Fields<'_>, cx: &mut Ctx) -> Option<Settlement> {
    let refund = f.money("RefundAmount", cx);
    let at = f.timestamp("SettledAt", cx);
    Some(Settlement { refund_amount: refund?, settled_at: at? })
}
