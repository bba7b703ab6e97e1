//! Drives claims through the services over the envelope bus.
//!
//! Every call resolves its target through the registry and travels as a
//! serialized envelope; the workflow never touches a service directly.

use std::sync::Arc;

use uuid::Uuid;

use crate::domain::{Decision, Money, PreAuthRequest};
use crate::envelope::{
    Actor, AuthorizeResponse, Body, ClaimAction, Fault, FaultCode, PaymentRequest, PaymentResponse,
    PreAuthSubmitRequest, Request, Response, ScrutinyRequest, ScrutinyResponse, ServiceName,
    SettleResponse, VerifyRequest, VerifyResponse,
};
use crate::orchestrator::ClaimState;
use crate::registry::RegistryError;
use crate::transport::{CallError, MessageStamper, ServiceBus};

/// What a pre-authorization submission ended in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub verification: VerifyResponse,
}

pub fn call_fault(e: CallError) -> Fault {
    match e {
        CallError::Unresolved(RegistryError::Unresolved(name)) => {
            Fault::new(FaultCode::ServiceUnavailable, format!("no bound {name} service"))
        }
        CallError::Unresolved(other) => Fault::new(FaultCode::ServiceUnavailable, other.to_string()),
        CallError::Transport(t) => Fault::new(FaultCode::ServiceUnavailable, t.to_string()),
        CallError::BadRequest(e) => Fault::new(FaultCode::InvalidRequest, e.to_string()),
        other => Fault::new(FaultCode::Internal, other.to_string()),
    }
}

#[derive(Clone)]
pub struct ClaimWorkflow {
    bus: ServiceBus,
    stamper: Arc<dyn MessageStamper>,
}

impl std::fmt::Debug for ClaimWorkflow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClaimWorkflow").field("bus", &self.bus).finish_non_exhaustive()
    }
}

impl ClaimWorkflow {
    pub fn new(bus: ServiceBus, stamper: Arc<dyn MessageStamper>) -> Self {
        ClaimWorkflow { bus, stamper }
    }

    pub fn bus(&self) -> &ServiceBus {
        &self.bus
    }

    /// A fresh correlation id for one external request.
    pub fn correlation_id(&self) -> Uuid {
        self.stamper.message_id()
    }

    async fn call(&self, service: ServiceName, request: Request, correlation_id: Uuid) -> Result<Response, Fault> {
        let reply = self
            .bus
            .request(service, request, correlation_id, self.stamper.as_ref())
            .await
            .map_err(call_fault)?;
        match reply.body {
            Body::Response(r) => Ok(r),
            Body::Fault(f) => Err(f),
            Body::Request(_) => Err(Fault::new(FaultCode::Internal, format!("{service} answered with a request"))),
        }
    }

    fn unexpected(service: ServiceName) -> Fault {
        Fault::new(FaultCode::Internal, format!("{service} answered with the wrong payload"))
    }

    /// Submits the form, then has the claim verified. Both services must be
    /// bound before anything is written.
    pub async fn submit(&self, actor: Actor, preauth: PreAuthRequest, correlation_id: Uuid) -> Result<SubmitOutcome, Fault> {
        for name in [ServiceName::PreAuth, ServiceName::Verification] {
            if !self.bus.registry().is_resolvable(name) {
                return Err(Fault::new(FaultCode::ServiceUnavailable, format!("no bound {name} service")));
            }
        }
        let uid = preauth.uid.clone();
        let submitted = match self
            .call(ServiceName::PreAuth, Request::PreAuthSubmit(PreAuthSubmitRequest { actor, preauth }), correlation_id)
            .await?
        {
            Response::PreAuthSubmit(r) => r,
            _ => return Err(Self::unexpected(ServiceName::PreAuth)),
        };
        let verification = self.verify(&uid, Some(submitted.claim_id), correlation_id).await?;
        let state = verification.state.unwrap_or(submitted.state);
        Ok(SubmitOutcome { claim_id: submitted.claim_id, state, verification })
    }

    pub async fn verify(&self, uid: &str, claim_id: Option<Uuid>, correlation_id: Uuid) -> Result<VerifyResponse, Fault> {
        let req = VerifyRequest { uid: uid.to_string(), claim_id };
        match self.call(ServiceName::Verification, Request::Verify(req), correlation_id).await? {
            Response::Verify(r) => Ok(r),
            _ => Err(Self::unexpected(ServiceName::Verification)),
        }
    }

    pub async fn scrutinize(
        &self,
        actor: Actor,
        claim_id: Uuid,
        decision: Decision,
        notes: String,
        correlation_id: Uuid,
    ) -> Result<ScrutinyResponse, Fault> {
        let req = ScrutinyRequest { claim_id, actor, decision, notes };
        match self.call(ServiceName::Scrutiny, Request::Scrutiny(req), correlation_id).await? {
            Response::Scrutiny(r) => Ok(r),
            _ => Err(Self::unexpected(ServiceName::Scrutiny)),
        }
    }

    pub async fn authorize(&self, actor: Actor, claim_id: Uuid, correlation_id: Uuid) -> Result<AuthorizeResponse, Fault> {
        let req = ClaimAction { claim_id, actor };
        match self.call(ServiceName::CashAuth, Request::Authorize(req), correlation_id).await? {
            Response::Authorize(r) => Ok(r),
            _ => Err(Self::unexpected(ServiceName::CashAuth)),
        }
    }

    pub async fn pay(&self, actor: Actor, claim_id: Uuid, actual_expense: Money, correlation_id: Uuid) -> Result<PaymentResponse, Fault> {
        let req = PaymentRequest { claim_id, actor, actual_expense };
        match self.call(ServiceName::Payment, Request::Payment(req), correlation_id).await? {
            Response::Payment(r) => Ok(r),
            _ => Err(Self::unexpected(ServiceName::Payment)),
        }
    }

    pub async fn settle(&self, actor: Actor, claim_id: Uuid, correlation_id: Uuid) -> Result<SettleResponse, Fault> {
        let req = ClaimAction { claim_id, actor };
        match self.call(ServiceName::Settlement, Request::Settle(req), correlation_id).await? {
            Response::Settle(r) => Ok(r),
            _ => Err(Self::unexpected(ServiceName::Settlement)),
        }
    }
}
