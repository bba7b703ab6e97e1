//! The business services: pre-auth intake, identity verification, TPA
//! scrutiny, cash authorization, hospital payment and settlement.
//!
//! [`ClaimServices`] holds the operations; [`ServiceEndpoint`] exposes one
//! service of it as an envelope handler that parses and validates its own
//! requests before acting.

use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use uuid::Uuid;

use crate::domain::{
    compute_authorized_amount, compute_hospital_payment, compute_refund, Authorization, Claim,
    Currency, Decision, MoneyError, PaymentRecord, Role, ScrutinyRecord, Settlement,
};
use crate::envelope::{
    self, Actor, AuthorizeResponse, Body, ClaimAction, Envelope, EnvelopeError, Fault, FaultCode,
    PaymentRequest, PaymentResponse, PreAuthSubmitRequest, PreAuthSubmitResponse, Request,
    Response, ScrutinyFacts, ScrutinyRequest, ScrutinyResponse, ServiceName, SettleResponse,
    VerifyRequest, VerifyResponse,
};
use crate::monitor::SecurityLog;
use crate::orchestrator::{advance, ClaimEvent, ClaimState};
use crate::store::{ClaimRepository, IdentityMatch, PolicyDirectory, StoreError};
use crate::transport::{EnvelopeHandler, MessageStamper, SystemStamper};
use crate::xml;

/// The exact text returned when an identification number matches no
/// single active policy.
pub const INVALID_ID_MESSAGE: &str = "identification number is invalid";

const CLAIM_NAMESPACE: Uuid = Uuid::from_u128(0x6d65_6463_6c61_696d_0000_0000_0000_0001);
const REPLY_NAMESPACE: Uuid = Uuid::from_u128(0x6d65_6463_6c61_696d_0000_0000_0000_0002);

/// Claim ids derive from the submitting message id, so resending the same
/// request can never create a second claim.
pub fn claim_id_for(message_id: &str) -> Uuid {
    Uuid::new_v5(&CLAIM_NAMESPACE, message_id.as_bytes())
}

pub type SharedDirectory = Arc<RwLock<PolicyDirectory>>;

/// Context every operation receives from its request envelope.
#[derive(Debug, Clone)]
pub struct RequestContext {
    pub message_id: String,
    pub at: DateTime<Utc>,
}

pub struct ClaimServices {
    directory: SharedDirectory,
    store: Arc<dyn ClaimRepository>,
    security: Arc<SecurityLog>,
    clock: Arc<dyn MessageStamper>,
    currency: Currency,
}

impl std::fmt::Debug for ClaimServices {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClaimServices").field("currency", &self.currency).finish_non_exhaustive()
    }
}

fn fault(code: FaultCode, message: impl Into<String>) -> Fault {
    Fault::new(code, message)
}

fn store_fault(e: StoreError) -> Fault {
    match e {
        StoreError::ClaimNotFound(id) => fault(FaultCode::UnknownClaim, format!("claim {id} does not exist")),
        StoreError::VersionConflict { .. } => {
            fault(FaultCode::Conflict, "the claim was changed concurrently; retry").with_detail(e.to_string())
        }
        StoreError::InvalidClaim(d) => fault(FaultCode::InvalidRequest, "the resulting claim is invalid").with_detail(d),
        other => fault(FaultCode::Internal, "claim storage failed").with_detail(other.to_string()),
    }
}

fn money_fault(e: MoneyError) -> Fault {
    fault(FaultCode::InvalidRequest, e.to_string())
}

fn wrong_state(claim: &Claim, wanted: ClaimState) -> Fault {
    fault(
        FaultCode::WrongState,
        format!("claim {} is {}, not {}", claim.claim_id, claim.state, wanted),
    )
}

fn require_role(actor: &Actor, allowed: &[Role], what: &str) -> Result<(), Fault> {
    if allowed.contains(&actor.role) {
        Ok(())
    } else {
        Err(fault(FaultCode::Forbidden, format!("role {} may not {what}", actor.role)))
    }
}

impl ClaimServices {
    pub fn new(directory: SharedDirectory, store: Arc<dyn ClaimRepository>, security: Arc<SecurityLog>) -> Self {
        ClaimServices { directory, store, security, clock: Arc::new(SystemStamper), currency: Currency::inr() }
    }

    pub fn with_clock(mut self, clock: Arc<dyn MessageStamper>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_currency(mut self, currency: Currency) -> Self {
        self.currency = currency;
        self
    }

    pub fn directory(&self) -> &SharedDirectory {
        &self.directory
    }

    pub fn store(&self) -> &Arc<dyn ClaimRepository> {
        &self.store
    }

    pub fn security(&self) -> &Arc<SecurityLog> {
        &self.security
    }

    fn load_in(&self, claim_id: Uuid, wanted: ClaimState) -> Result<Claim, Fault> {
        let claim = self.store.load(claim_id).map_err(store_fault)?;
        if claim.state != wanted {
            return Err(wrong_state(&claim, wanted));
        }
        Ok(claim)
    }

    fn apply(&self, claim: &Claim, event: ClaimEvent, ctx: &RequestContext, actor: &str) -> Result<Claim, Fault> {
        let (next, _) = advance(claim, event, ctx.at, actor)
            .map_err(|e| fault(FaultCode::WrongState, e.to_string()))?;
        self.store.save(&next).map_err(store_fault)?;
        Ok(next)
    }

    pub fn preauth_submit(&self, req: &PreAuthSubmitRequest, ctx: &RequestContext) -> Result<PreAuthSubmitResponse, Fault> {
        let actor = &req.actor;
        require_role(actor, &[Role::Policyholder, Role::Hospital], "submit pre-authorization requests")?;
        let p = &req.preauth;
        match actor.role {
            Role::Policyholder if actor.affiliation != p.uid => {
                return Err(fault(FaultCode::Forbidden, "policyholders may only submit for their own uid"))
            }
            Role::Hospital if actor.affiliation != p.hospital_id => {
                return Err(fault(FaultCode::Forbidden, "hospitals may only submit for themselves"))
            }
            _ => {}
        }
        let mut problems = p.problems();
        if p.estimated_expense.currency != self.currency {
            problems.push(format!(
                "estimated_expense currency {} is not the deployment currency {}",
                p.estimated_expense.currency, self.currency
            ));
        }
        if !problems.is_empty() {
            return Err(fault(FaultCode::InvalidRequest, "the pre-authorization form is invalid")
                .with_detail(problems.join("; ")));
        }
        if self.directory.read().hospital(&p.hospital_id).is_none() {
            return Err(fault(FaultCode::UnknownHospital, format!("hospital {} is not known", p.hospital_id)));
        }
        let claim_id = claim_id_for(&ctx.message_id);
        if self.store.load(claim_id).is_ok() {
            return Err(fault(FaultCode::Conflict, format!("message {} was already submitted", ctx.message_id)));
        }
        let claim = Claim::new(claim_id, p.clone());
        self.store.save(&claim).map_err(store_fault)?;
        tracing::info!(%claim_id, uid = %p.uid, hospital = %p.hospital_id, "claim submitted");
        Ok(PreAuthSubmitResponse { claim_id, state: claim.state })
    }

    pub fn verify(&self, req: &VerifyRequest, ctx: &RequestContext) -> Result<VerifyResponse, Fault> {
        if req.uid.trim().is_empty() {
            return Err(fault(FaultCode::InvalidRequest, "uid must not be empty"));
        }
        let outcome = self.directory.read().lookup_identity(&req.uid);
        let (policy, detail) = match outcome {
            IdentityMatch::Matched(record) => (Some(record), None),
            IdentityMatch::NotFound { lapsed: true } => (None, Some("the only policies for this uid have lapsed".to_string())),
            IdentityMatch::NotFound { lapsed: false } => (None, Some("no policy database holds this uid".to_string())),
            IdentityMatch::Ambiguous(companies) => (
                None,
                Some(format!("uid is active at more than one insurer: {}", companies.join(", "))),
            ),
        };
        let mut resp = VerifyResponse {
            valid: policy.is_some(),
            policy: policy.clone(),
            message: policy.is_none().then(|| INVALID_ID_MESSAGE.to_string()),
            detail,
            claim_id: None,
            state: None,
        };
        if let Some(claim_id) = req.claim_id {
            let claim = self.load_in(claim_id, ClaimState::Submitted)?;
            if claim.preauth.uid != req.uid {
                return Err(fault(FaultCode::InvalidRequest, format!("claim {claim_id} was not filed for uid {}", req.uid)));
            }
            let event = match policy {
                Some(record) => ClaimEvent::VerifyOk(record),
                None => ClaimEvent::VerifyFail,
            };
            let next = self.apply(&claim, event, ctx, ServiceName::Verification.as_str())?;
            resp.claim_id = Some(claim_id);
            resp.state = Some(next.state);
        }
        Ok(resp)
    }

    pub fn scrutinize(&self, req: &ScrutinyRequest, ctx: &RequestContext) -> Result<ScrutinyResponse, Fault> {
        require_role(&req.actor, &[Role::Tpa], "scrutinize claims")?;
        if req.decision == Decision::Deny && req.notes.trim().is_empty() {
            return Err(fault(FaultCode::InvalidRequest, "a denial must carry notes"));
        }
        if !crate::domain::is_single_line(&req.notes) {
            return Err(fault(FaultCode::InvalidRequest, "notes must not contain control characters"));
        }
        let claim = self.load_in(req.claim_id, ClaimState::UnderScrutiny)?;
        let facts = self.facts(&claim, &req.actor.affiliation)?;
        let record = ScrutinyRecord {
            decision: req.decision,
            adjuster_id: req.actor.subject_id.clone(),
            notes: req.notes.clone(),
            decided_at: ctx.at,
        };
        let event = match req.decision {
            Decision::Approve => ClaimEvent::ScrutinyApprove(record),
            Decision::Deny => ClaimEvent::ScrutinyDeny(record),
        };
        let next = self.apply(&claim, event, ctx, &req.actor.subject_id)?;
        Ok(ScrutinyResponse { claim_id: next.claim_id, state: next.state, facts })
    }

    /// Rule-assist facts for an adjuster working for `tpa_id`.
    pub fn facts(&self, claim: &Claim, tpa_id: &str) -> Result<ScrutinyFacts, Fault> {
        let policy = claim
            .policy
            .as_ref()
            .ok_or_else(|| fault(FaultCode::Internal, "verified claim carries no policy"))?;
        let in_network = self
            .directory
            .read()
            .hospital(&claim.preauth.hospital_id)
            .is_some_and(|h| h.in_network(tpa_id));
        let estimated = claim.preauth.estimated_expense.clone();
        Ok(ScrutinyFacts {
            hospital_in_network: in_network,
            estimate_within_eligible: estimated.amount_minor <= policy.eligible_amount.amount_minor,
            estimated_expense: estimated,
            eligible_amount: policy.eligible_amount.clone(),
        })
    }

    pub fn authorize(&self, req: &ClaimAction, ctx: &RequestContext) -> Result<AuthorizeResponse, Fault> {
        require_role(&req.actor, &[Role::Tpa], "authorize cash")?;
        let claim = self.load_in(req.claim_id, ClaimState::ScrutinyApproved)?;
        let policy = claim.policy.as_ref().ok_or_else(|| fault(FaultCode::Internal, "claim carries no policy"))?;
        let amount =
            compute_authorized_amount(&claim.preauth.estimated_expense, &policy.eligible_amount).map_err(money_fault)?;
        let authorization = Authorization { authorized_amount: amount, authorized_at: ctx.at };
        let next = self.apply(&claim, ClaimEvent::Authorize(authorization.clone()), ctx, &req.actor.subject_id)?;
        Ok(AuthorizeResponse { claim_id: next.claim_id, state: next.state, authorization })
    }

    pub fn pay(&self, req: &PaymentRequest, ctx: &RequestContext) -> Result<PaymentResponse, Fault> {
        require_role(&req.actor, &[Role::Hospital, Role::Tpa], "report payments")?;
        if req.actual_expense.amount_minor == 0 {
            return Err(fault(FaultCode::InvalidRequest, "actual_expense must be positive"));
        }
        let claim = self.store.load(req.claim_id).map_err(store_fault)?;
        if req.actor.role == Role::Hospital && req.actor.affiliation != claim.preauth.hospital_id {
            return Err(fault(FaultCode::Forbidden, "hospitals may only report payments for their own claims"));
        }
        if claim.state != ClaimState::CashAuthorized {
            return Err(wrong_state(&claim, ClaimState::CashAuthorized));
        }
        let authorized = &claim.authorization.as_ref().ok_or_else(|| fault(FaultCode::Internal, "claim carries no authorization"))?.authorized_amount;
        let paid = compute_hospital_payment(&req.actual_expense, authorized).map_err(money_fault)?;
        let payment = PaymentRecord {
            paid_amount: paid,
            actual_expense: req.actual_expense.clone(),
            payee_hospital_id: claim.preauth.hospital_id.clone(),
            paid_at: ctx.at,
        };
        let next = self.apply(&claim, ClaimEvent::PaymentDone(payment.clone()), ctx, &req.actor.subject_id)?;
        Ok(PaymentResponse { claim_id: next.claim_id, state: next.state, payment })
    }

    pub fn settle(&self, req: &ClaimAction, ctx: &RequestContext) -> Result<SettleResponse, Fault> {
        require_role(&req.actor, &[Role::Tpa], "settle claims")?;
        let claim = self.load_in(req.claim_id, ClaimState::Paid)?;
        let (Some(payment), Some(policy)) = (&claim.payment, &claim.policy) else {
            return Err(fault(FaultCode::Internal, "paid claim is missing its payment or policy"));
        };
        let refund = compute_refund(&payment.actual_expense, &policy.eligible_amount).map_err(money_fault)?;
        let settlement = Settlement { refund_amount: refund, settled_at: ctx.at };
        let next = self.apply(&claim, ClaimEvent::Settle(settlement.clone()), ctx, &req.actor.subject_id)?;
        Ok(SettleResponse { claim_id: next.claim_id, state: next.state, settlement })
    }

    /// Runs the operation a request names.
    pub fn dispatch(&self, request: &Request, ctx: &RequestContext) -> Result<Response, Fault> {
        Ok(match request {
            Request::PreAuthSubmit(r) => Response::PreAuthSubmit(self.preauth_submit(r, ctx)?),
            Request::Verify(r) => Response::Verify(self.verify(r, ctx)?),
            Request::Scrutiny(r) => Response::Scrutiny(self.scrutinize(r, ctx)?),
            Request::Authorize(r) => Response::Authorize(self.authorize(r, ctx)?),
            Request::Payment(r) => Response::Payment(self.pay(r, ctx)?),
            Request::Settle(r) => Response::Settle(self.settle(r, ctx)?),
            Request::Ping => Response::Pong,
        })
    }

    fn reply(&self, service: ServiceName, request_message_id: &str, correlation_id: &str, op: envelope::Operation, body: Body) -> Vec<u8> {
        let message_id = Uuid::new_v5(&REPLY_NAMESPACE, request_message_id.as_bytes());
        let correlation_id = Uuid::try_parse(correlation_id).unwrap_or(Uuid::nil());
        let env = Envelope::new(message_id, correlation_id, self.clock.now(), service, op, body);
        envelope::serialize(&env).unwrap_or_else(|e| {
            let fallback = Fault::new(FaultCode::Internal, "reply could not be serialized").with_detail(e.to_string());
            let env = Envelope::new(message_id, correlation_id, self.clock.now(), service, op, Body::Fault(fallback));
            envelope::serialize(&env).expect("a fault reply always serializes")
        })
    }

    /// Handles raw request bytes on behalf of `service`.
    pub fn handle_bytes(&self, service: ServiceName, bytes: &[u8]) -> Vec<u8> {
        let env = match envelope::parse(bytes) {
            Ok(env) => env,
            Err(e) => {
                self.security.record(service, &e);
                let (message_id, correlation_id) = salvage_ids(bytes);
                let code = match e {
                    EnvelopeError::UnknownOperation(_) => FaultCode::UnknownOperation,
                    _ => FaultCode::SchemaViolation,
                };
                let f = Fault::new(code, "request envelope rejected").with_detail(describe(&e));
                return self.reply(service, &message_id, &correlation_id, service.operation(), Body::Fault(f));
            }
        };
        let op = env.operation;
        if env.service != service {
            let f = Fault::new(FaultCode::InvalidRequest, format!("envelope addressed to {}, delivered to {service}", env.service));
            return self.reply(service, &env.message_id, &env.correlation_id, service.operation(), Body::Fault(f));
        }
        let body = match &env.body {
            Body::Request(r) => {
                let ctx = RequestContext { message_id: env.message_id.clone(), at: env.timestamp };
                match self.dispatch(r, &ctx) {
                    Ok(resp) => Body::Response(resp),
                    Err(f) => Body::Fault(f),
                }
            }
            _ => Body::Fault(Fault::new(FaultCode::InvalidRequest, "services accept requests only")),
        };
        self.reply(service, &env.message_id, &env.correlation_id, op, body)
    }
}

/// Best-effort header ids from a rejected document so the fault can still
/// be correlated.
fn salvage_ids(bytes: &[u8]) -> (String, String) {
    let Ok(doc) = xml::parse(bytes) else {
        return (String::new(), Uuid::nil().to_string());
    };
    let header = doc.root.child_elements().find(|e| e.name == "Header");
    let field = |name: &str| header.and_then(|h| h.child_elements().find(|e| e.name == name)).map(|e| e.text());
    let message_id = field("MessageId").unwrap_or_default();
    let correlation_id = field("CorrelationId")
        .filter(|c| Uuid::try_parse(c).is_ok_and(|u| u.hyphenated().to_string() == *c))
        .unwrap_or_else(|| Uuid::nil().to_string());
    (message_id, correlation_id)
}

fn describe(e: &EnvelopeError) -> String {
    match e {
        EnvelopeError::SchemaViolation(report) => report
            .violations
            .iter()
            .map(|v| format!("{} {} {}", v.path, v.rule, v.detail))
            .collect::<Vec<_>>()
            .join("; "),
        other => other.to_string(),
    }
}

/// One service of [`ClaimServices`], reachable as an envelope handler.
#[derive(Debug, Clone)]
pub struct ServiceEndpoint {
    name: ServiceName,
    services: Arc<ClaimServices>,
}

impl ServiceEndpoint {
    pub fn new(name: ServiceName, services: Arc<ClaimServices>) -> Self {
        ServiceEndpoint { name, services }
    }

    pub fn name(&self) -> ServiceName {
        self.name
    }
}

#[async_trait]
impl EnvelopeHandler for ServiceEndpoint {
    async fn handle(&self, request: Vec<u8>) -> Vec<u8> {
        self.services.handle_bytes(self.name, &request)
    }
}
