//! Random envelopes spanning every payload type, for roundtrip and
//! mutation tests.

#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use medclaim_core::domain::{
    Authorization, CertifyingDoctor, Currency, Decision, Money, PaymentRecord, PolicyRecord,
    PolicyStatus, PreAuthRequest, Role, Settlement,
};
use medclaim_core::envelope::{
    Actor, AuthorizeResponse, Body, ClaimAction, Envelope, Fault, FaultCode, PaymentRequest,
    PaymentResponse, PreAuthSubmitRequest, PreAuthSubmitResponse, Request, Response, ScrutinyFacts,
    ScrutinyRequest, ScrutinyResponse, ServiceName, SettleResponse, VerifyRequest, VerifyResponse,
};
use medclaim_core::orchestrator::ClaimState;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;
use uuid::Uuid;

const ALPHABET: &[&str] = &[
    "a", "Z", "0", "9", " ", "-", "_", ".", "&", "<", ">", "\"", "'", "é", "₹", "漢", "😀", "\t", "\n", "]]>",
];

pub fn text(rng: &mut StdRng, max: usize) -> String {
    let len = rng.random_range(0..=max);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn token(rng: &mut StdRng) -> String {
    let len = rng.random_range(1..12);
    (0..len)
        .map(|_| *b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-".choose(rng).unwrap() as char)
        .collect()
}

pub fn uuid(rng: &mut StdRng) -> Uuid {
    Uuid::from_u128(rng.random())
}

pub fn instant(rng: &mut StdRng) -> DateTime<Utc> {
    let secs = rng.random_range(0..4_102_444_800i64);
    let nanos = match rng.random_range(0..4) {
        0 => 0,
        1 => rng.random_range(0..1000) * 1_000_000,
        2 => rng.random_range(0..1_000_000) * 1000,
        _ => rng.random_range(0..1_000_000_000),
    };
    Utc.timestamp_opt(secs, nanos).unwrap()
}

pub fn money(rng: &mut StdRng) -> Money {
    let code: String = (0..3).map(|_| rng.random_range(b'A'..=b'Z') as char).collect();
    let amount = match rng.random_range(0..3) {
        0 => 0,
        1 => rng.random_range(1..1_000_000),
        _ => rng.random(),
    };
    Money::new(amount, Currency::new(&code).unwrap())
}

fn pick<T: Copy>(rng: &mut StdRng, all: &[T]) -> T {
    *all.choose(rng).unwrap()
}

fn actor(rng: &mut StdRng) -> Actor {
    Actor::new(text(rng, 8), pick(rng, Role::ALL), text(rng, 8))
}

fn opt<T>(rng: &mut StdRng, f: impl FnOnce(&mut StdRng) -> T) -> Option<T> {
    rng.random_bool(0.5).then(|| f(rng))
}

fn policy(rng: &mut StdRng) -> PolicyRecord {
    PolicyRecord {
        uid: text(rng, 10),
        company_id: token(rng),
        policy_type: text(rng, 10),
        eligible_amount: money(rng),
        status: pick(rng, PolicyStatus::ALL),
    }
}

fn preauth(rng: &mut StdRng) -> PreAuthRequest {
    PreAuthRequest {
        uid: text(rng, 10),
        hospital_id: text(rng, 10),
        illness_details: text(rng, 30),
        proposed_treatment: text(rng, 30),
        estimated_expense: money(rng),
        certifying_doctor: CertifyingDoctor { name: text(rng, 10), registration_number: text(rng, 10) },
        submitted_at: instant(rng),
    }
}

/// A random request/response/fault together with its service.
pub fn body(rng: &mut StdRng) -> (ServiceName, Body) {
    let service = pick(rng, ServiceName::ALL);
    let state = pick(rng, ClaimState::ALL);
    let kind = rng.random_range(0..5);
    if kind == 0 {
        let mut f = Fault::new(pick(rng, FaultCode::ALL), text(rng, 20));
        f.detail = opt(rng, |r| text(r, 20));
        return (service, Body::Fault(f));
    }
    if kind == 1 {
        let b = if rng.random_bool(0.5) { Body::Request(Request::Ping) } else { Body::Response(Response::Pong) };
        return (service, b);
    }
    let as_request = kind == 2 || (kind == 3 && rng.random_bool(0.5));
    let body = match (service, as_request) {
        (ServiceName::PreAuth, true) => {
            Body::Request(Request::PreAuthSubmit(PreAuthSubmitRequest { actor: actor(rng), preauth: preauth(rng) }))
        }
        (ServiceName::PreAuth, false) => {
            Body::Response(Response::PreAuthSubmit(PreAuthSubmitResponse { claim_id: uuid(rng), state }))
        }
        (ServiceName::Verification, true) => {
            Body::Request(Request::Verify(VerifyRequest { uid: text(rng, 12), claim_id: opt(rng, uuid) }))
        }
        (ServiceName::Verification, false) => Body::Response(Response::Verify(VerifyResponse {
            valid: rng.random(),
            policy: opt(rng, policy),
            message: opt(rng, |r| text(r, 20)),
            detail: opt(rng, |r| text(r, 20)),
            claim_id: opt(rng, uuid),
            state: opt(rng, |r| pick(r, ClaimState::ALL)),
        })),
        (ServiceName::Scrutiny, true) => Body::Request(Request::Scrutiny(ScrutinyRequest {
            claim_id: uuid(rng),
            actor: actor(rng),
            decision: pick(rng, Decision::ALL),
            notes: text(rng, 20),
        })),
        (ServiceName::Scrutiny, false) => Body::Response(Response::Scrutiny(ScrutinyResponse {
            claim_id: uuid(rng),
            state,
            facts: ScrutinyFacts {
                hospital_in_network: rng.random(),
                estimated_expense: money(rng),
                eligible_amount: money(rng),
                estimate_within_eligible: rng.random(),
            },
        })),
        (ServiceName::CashAuth, true) => {
            Body::Request(Request::Authorize(ClaimAction { claim_id: uuid(rng), actor: actor(rng) }))
        }
        (ServiceName::CashAuth, false) => Body::Response(Response::Authorize(AuthorizeResponse {
            claim_id: uuid(rng),
            state,
            authorization: Authorization { authorized_amount: money(rng), authorized_at: instant(rng) },
        })),
        (ServiceName::Payment, true) => Body::Request(Request::Payment(PaymentRequest {
            claim_id: uuid(rng),
            actor: actor(rng),
            actual_expense: money(rng),
        })),
        (ServiceName::Payment, false) => Body::Response(Response::Payment(PaymentResponse {
            claim_id: uuid(rng),
            state,
            payment: PaymentRecord {
                paid_amount: money(rng),
                actual_expense: money(rng),
                payee_hospital_id: text(rng, 10),
                paid_at: instant(rng),
            },
        })),
        (ServiceName::Settlement, true) => {
            Body::Request(Request::Settle(ClaimAction { claim_id: uuid(rng), actor: actor(rng) }))
        }
        (ServiceName::Settlement, false) => Body::Response(Response::Settle(SettleResponse {
            claim_id: uuid(rng),
            state,
            settlement: Settlement { refund_amount: money(rng), settled_at: instant(rng) },
        })),
    };
    (service, body)
}

pub fn envelope(rng: &mut StdRng) -> Envelope {
    let (service, body) = body(rng);
    let operation = match &body {
        Body::Request(r) => r.operation(),
        Body::Response(r) => r.operation(),
        Body::Fault(_) => {
            if rng.random_bool(0.3) {
                medclaim_core::envelope::Operation::Ping
            } else {
                service.operation()
            }
        }
    };
    Envelope::new(uuid(rng), uuid(rng), instant(rng), service, operation, body)
}

/// The payload element names a generated body may use, for coverage checks.
pub fn element_name(env: &Envelope) -> &'static str {
    env.body.element_name()
}
