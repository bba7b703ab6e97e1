//! The strict XML envelope every service speaks.
//!
//! Only the canonical form is accepted: fixed element order, two-space
//! indentation, a newline after every line, UTF-8, and no attributes other
//! than the root namespace and the `currency` of money amounts. A document
//! is valid exactly when re-serializing its parse reproduces it byte for
//! byte.

mod payload;
pub(crate) mod schema;

use chrono::{DateTime, Utc};
use thiserror::Error;
use uuid::Uuid;

use crate::domain::wire_enum;
use crate::xml::{self, Element, XmlErrorKind, DECLARATION};

pub use payload::{
    Actor, AuthorizeResponse, Body, ClaimAction, Fault, FaultCode, PaymentRequest,
    PaymentResponse, PreAuthSubmitRequest, PreAuthSubmitResponse, Request, Response,
    ScrutinyFacts, ScrutinyRequest, ScrutinyResponse, SettleResponse, VerifyRequest,
    VerifyResponse, BODY_ELEMENTS,
};
pub(crate) use payload::{payment_fields, policy_element, preauth_fields, read_payment_fields, read_policy, read_preauth, read_settlement_fields, PREAUTH_FIELDS};
pub use schema::{Rule, ValidationReport, Violation};

use schema::{canonical_timestamp, canonical_uuid, check_timestamp, check_uuid, Ctx, Fields, Occurs};

pub const NAMESPACE: &str = "urn:medclaim:envelope:1.0";

wire_enum!(
    /// The service vocabulary.
    ServiceName {
        PreAuth => "PreAuth",
        Verification => "Verification",
        Scrutiny => "Scrutiny",
        CashAuth => "CashAuth",
        Payment => "Payment",
        Settlement => "Settlement",
    }
);

wire_enum!(Operation {
    Submit => "submit",
    Verify => "verify",
    Scrutinize => "scrutinize",
    Authorize => "authorize",
    Pay => "pay",
    Settle => "settle",
    Ping => "ping",
});

impl ServiceName {
    /// The business operation this service owns (every service also answers `ping`).
    pub fn operation(self) -> Operation {
        match self {
            ServiceName::PreAuth => Operation::Submit,
            ServiceName::Verification => Operation::Verify,
            ServiceName::Scrutiny => Operation::Scrutinize,
            ServiceName::CashAuth => Operation::Authorize,
            ServiceName::Payment => Operation::Pay,
            ServiceName::Settlement => Operation::Settle,
        }
    }

    pub fn accepts(self, op: Operation) -> bool {
        op == Operation::Ping || op == self.operation()
    }
}

impl Request {
    pub fn operation(&self) -> Operation {
        match self {
            Request::PreAuthSubmit(_) => Operation::Submit,
            Request::Verify(_) => Operation::Verify,
            Request::Scrutiny(_) => Operation::Scrutinize,
            Request::Authorize(_) => Operation::Authorize,
            Request::Payment(_) => Operation::Pay,
            Request::Settle(_) => Operation::Settle,
            Request::Ping => Operation::Ping,
        }
    }
}

impl Response {
    pub fn operation(&self) -> Operation {
        match self {
            Response::PreAuthSubmit(_) => Operation::Submit,
            Response::Verify(_) => Operation::Verify,
            Response::Scrutiny(_) => Operation::Scrutinize,
            Response::Authorize(_) => Operation::Authorize,
            Response::Payment(_) => Operation::Pay,
            Response::Settle(_) => Operation::Settle,
            Response::Pong => Operation::Ping,
        }
    }
}

impl Body {
    /// Whether this payload may travel under `op`. Faults go with anything.
    pub fn fits(&self, op: Operation) -> bool {
        match self {
            Body::Request(r) => r.operation() == op,
            Body::Response(r) => r.operation() == op,
            Body::Fault(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub message_id: String,
    pub correlation_id: String,
    pub timestamp: DateTime<Utc>,
    pub service: ServiceName,
    pub operation: Operation,
    pub body: Body,
}

impl Envelope {
    pub fn new(
        message_id: Uuid,
        correlation_id: Uuid,
        timestamp: DateTime<Utc>,
        service: ServiceName,
        operation: Operation,
        body: Body,
    ) -> Self {
        Envelope {
            message_id: canonical_uuid(&message_id),
            correlation_id: canonical_uuid(&correlation_id),
            timestamp,
            service,
            operation,
            body,
        }
    }

    pub fn correlation_uuid(&self) -> Option<Uuid> {
        Uuid::try_parse(&self.correlation_id).ok()
    }

    pub fn message_uuid(&self) -> Option<Uuid> {
        Uuid::try_parse(&self.message_id).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("invalid envelope: {field}: {detail}")]
    InvalidEnvelope { field: String, detail: String },
    #[error("malformed XML at byte {offset}: {detail}")]
    MalformedXml { offset: usize, detail: String },
    #[error("schema violation ({} problems)", .0.violations.len())]
    SchemaViolation(ValidationReport),
    #[error("unknown operation: {0}")]
    UnknownOperation(String),
}

fn invalid(field: &str, detail: impl Into<String>) -> EnvelopeError {
    EnvelopeError::InvalidEnvelope { field: field.into(), detail: detail.into() }
}

/// Renders `env` in canonical form.
pub fn serialize(env: &Envelope) -> Result<Vec<u8>, EnvelopeError> {
    let mut cx = Ctx::default();
    if env.message_id.is_empty() {
        return Err(invalid("message_id", "must not be empty"));
    }
    if check_uuid(&env.message_id, "", &mut cx).is_none() {
        return Err(invalid("message_id", "must be a lower-case hyphenated UUID"));
    }
    if env.correlation_id.is_empty() {
        return Err(invalid("correlation_id", "must not be empty"));
    }
    if check_uuid(&env.correlation_id, "", &mut cx).is_none() {
        return Err(invalid("correlation_id", "must be a lower-case hyphenated UUID"));
    }
    if !env.service.accepts(env.operation) {
        return Err(invalid(
            "operation",
            format!("service {} does not offer '{}'", env.service, env.operation),
        ));
    }
    if !env.body.fits(env.operation) {
        return Err(invalid(
            "body",
            format!("{} does not belong to operation '{}'", env.body.element_name(), env.operation),
        ));
    }
    let body = env.body.to_element();
    check_text(&body, "/Envelope/Body")?;
    let tree = envelope_element(env, body);
    let mut out = String::with_capacity(1024);
    out.push_str(DECLARATION);
    out.push('\n');
    tree.write_pretty(&mut out, 0);
    Ok(out.into_bytes())
}

fn check_text(el: &Element, prefix: &str) -> Result<(), EnvelopeError> {
    let path = format!("{prefix}/{}", el.name);
    for node in &el.children {
        match node {
            xml::Node::Text(t) => {
                if let Some(c) = t.chars().find(|c| !xml::is_xml_char(*c)) {
                    return Err(invalid(&path, format!("character U+{:04X} cannot be encoded", c as u32)));
                }
            }
            xml::Node::Element(child) => check_text(child, &path)?,
        }
    }
    Ok(())
}

fn envelope_element(env: &Envelope, body: Element) -> Element {
    Element::node(
        "Envelope",
        vec![
            Element::node(
                "Header",
                vec![
                    Element::leaf("MessageId", &env.message_id),
                    Element::leaf("CorrelationId", &env.correlation_id),
                    Element::leaf("Timestamp", canonical_timestamp(&env.timestamp)),
                    Element::leaf("Service", env.service.as_str()),
                    Element::leaf("Operation", env.operation.as_str()),
                ],
            ),
            Element::node("Body", vec![body]),
        ],
    )
    .with_attribute("xmlns", NAMESPACE)
}

enum Failure {
    Malformed(xml::XmlError),
    Invalid(Vec<Violation>),
}

fn check(doc: &[u8]) -> Result<Envelope, Failure> {
    let tree = match xml::parse(doc) {
        Ok(t) => t,
        Err(e) if e.kind == XmlErrorKind::Unsupported => {
            let path = if e.path.is_empty() { "/".to_string() } else { e.path.clone() };
            return Err(Failure::Invalid(vec![Violation {
                path,
                rule: Rule::UnsupportedConstruct,
                detail: e.message,
            }]));
        }
        Err(e) => return Err(Failure::Malformed(e)),
    };
    let mut cx = Ctx::default();
    let env = read_envelope(&tree.root, &mut cx);
    if !cx.violations.is_empty() {
        return Err(Failure::Invalid(cx.violations));
    }
    let env = env.ok_or_else(|| Failure::Invalid(vec![]))?;
    let canonical = serialize(&env).map_err(|e| {
        Failure::Invalid(vec![Violation { path: "/Envelope".into(), rule: Rule::InvalidValue, detail: e.to_string() }])
    })?;
    if canonical != doc {
        let offset = canonical
            .iter()
            .zip(doc)
            .position(|(a, b)| a != b)
            .unwrap_or(canonical.len().min(doc.len()));
        let path = tree.root.path_at(offset, "").unwrap_or_else(|| "/".into());
        return Err(Failure::Invalid(vec![Violation {
            path,
            rule: Rule::NonCanonicalForm,
            detail: format!("document departs from canonical form at byte {offset}"),
        }]));
    }
    Ok(env)
}

fn read_envelope(root: &Element, cx: &mut Ctx) -> Option<Envelope> {
    if root.name != "Envelope" {
        cx.push(format!("/{}", root.name), Rule::UnexpectedRoot, "root element must be 'Envelope'");
        return None;
    }
    let mut ns_ok = false;
    for attr in &root.attributes {
        if attr.name == "xmlns" {
            ns_ok = attr.value == NAMESPACE;
        } else {
            cx.push(format!("/Envelope/@{}", attr.name), Rule::UnknownAttribute, format!("attribute '{}' is not allowed", attr.name));
        }
    }
    if !ns_ok {
        cx.push("/Envelope", Rule::NamespaceMismatch, format!("xmlns must be '{NAMESPACE}'"));
    }
    let mut bare = root.clone();
    bare.attributes.clear();
    let f = Fields::read(&bare, "/Envelope", &[("Header", Occurs::One), ("Body", Occurs::One)], cx);

    let header = f.element("Header").and_then(|(el, path)| {
        let h = Fields::read(
            el,
            &path,
            &[
                ("MessageId", Occurs::One),
                ("CorrelationId", Occurs::One),
                ("Timestamp", Occurs::One),
                ("Service", Occurs::One),
                ("Operation", Occurs::One),
            ],
            cx,
        );
        let message_id = h.text("MessageId", cx).and_then(|t| check_uuid(&t, &h.child_path("MessageId"), cx).map(|_| t));
        let correlation_id =
            h.text("CorrelationId", cx).and_then(|t| check_uuid(&t, &h.child_path("CorrelationId"), cx).map(|_| t));
        let timestamp = h.text("Timestamp", cx).and_then(|t| check_timestamp(&t, &h.child_path("Timestamp"), cx));
        let service = h.parsed::<ServiceName>("Service", Rule::UnknownService, cx);
        let operation = h.parsed::<Operation>("Operation", Rule::UnknownOperation, cx);
        if let (Some(s), Some(o)) = (service, operation) {
            if !s.accepts(o) {
                cx.push(h.child_path("Operation"), Rule::OperationMismatch, format!("service {s} does not offer '{o}'"));
            }
        }
        Some((message_id?, correlation_id?, timestamp?, service?, operation?))
    });

    let body = f.element("Body").and_then(|(el, path)| {
        let before = cx.violations.len();
        cx.no_attributes(el, &path);
        if el.children.iter().any(|n| matches!(n, xml::Node::Text(t) if !t.trim_matches([' ', '\t', '\n', '\r']).is_empty())) {
            cx.push(&path, Rule::UnexpectedText, "character data is not allowed here");
        }
        let payloads: Vec<&Element> = el.child_elements().collect();
        if payloads.len() != 1 {
            cx.push(&path, Rule::BodyCardinality, format!("Body must contain exactly one element, found {}", payloads.len()));
            return None;
        }
        if cx.violations.len() != before {
            return None;
        }
        let payload = payloads[0];
        let ppath = format!("{path}/{}", payload.name);
        if !BODY_ELEMENTS.contains(&payload.name.as_str()) {
            cx.push(ppath, Rule::UnknownOperation, format!("'{}' is not in the operation vocabulary", payload.name));
            return None;
        }
        Body::read(payload, &ppath, cx).map(|b| (b, ppath))
    });

    let (message_id, correlation_id, timestamp, service, operation) = header?;
    let (body, body_path) = body?;
    if service.accepts(operation) && !body.fits(operation) {
        cx.push(body_path, Rule::OperationMismatch, format!("{} does not belong to operation '{operation}'", body.element_name()));
        return None;
    }
    Some(Envelope { message_id, correlation_id, timestamp, service, operation, body })
}

/// Parses a canonical envelope document.
pub fn parse(doc: &[u8]) -> Result<Envelope, EnvelopeError> {
    match check(doc) {
        Ok(env) => Ok(env),
        Err(Failure::Malformed(e)) => Err(EnvelopeError::MalformedXml { offset: e.offset, detail: e.message }),
        Err(Failure::Invalid(violations)) => {
            if let Some(v) = violations.iter().find(|v| v.rule == Rule::UnknownOperation) {
                return Err(EnvelopeError::UnknownOperation(v.detail.clone()));
            }
            Err(EnvelopeError::SchemaViolation(ValidationReport::from_violations(violations)))
        }
    }
}

/// Checks a document against the envelope schema; never fails.
pub fn validate(doc: &[u8]) -> ValidationReport {
    match check(doc) {
        Ok(_) => ValidationReport::from_violations(Vec::new()),
        Err(Failure::Malformed(e)) => ValidationReport::from_violations(vec![Violation {
            path: if e.path.is_empty() { "/".into() } else { e.path },
            rule: Rule::MalformedXml,
            detail: format!("{} at byte {}", e.message, e.offset),
        }]),
        Err(Failure::Invalid(violations)) => ValidationReport::from_violations(violations),
    }
}
