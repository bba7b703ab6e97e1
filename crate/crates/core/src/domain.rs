//! Business entities and the money rules behind authorization, payment and
//! refund.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::orchestrator::{ClaimState, Trigger};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("currency mismatch: {0} vs {1}")]
    CurrencyMismatch(Currency, Currency),
    #[error("amount must be positive")]
    NonPositiveAmount,
}

/// ISO-4217 style three-letter code, upper case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Currency(String);

impl Currency {
    pub fn new(code: &str) -> Result<Self, String> {
        if code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase()) {
            Ok(Currency(code.to_string()))
        } else {
            Err(format!("invalid currency code '{code}'"))
        }
    }

    pub fn inr() -> Self {
        Currency("INR".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Currency {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        Currency::new(&s)
    }
}

impl From<Currency> for String {
    fn from(c: Currency) -> String {
        c.0
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An amount in minor currency units (paise, cents).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Money {
    pub amount_minor: u64,
    pub currency: Currency,
}

impl Money {
    pub fn new(amount_minor: u64, currency: Currency) -> Self {
        Money { amount_minor, currency }
    }

    pub fn inr(amount_minor: u64) -> Self {
        Money::new(amount_minor, Currency::inr())
    }

    pub fn zero(currency: Currency) -> Self {
        Money::new(0, currency)
    }

    fn same_currency(&self, other: &Money) -> Result<(), MoneyError> {
        if self.currency == other.currency {
            Ok(())
        } else {
            Err(MoneyError::CurrencyMismatch(self.currency.clone(), other.currency.clone()))
        }
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount_minor, self.currency)
    }
}

/// Cash authorized for a claim: the estimate, capped by the policy provision.
pub fn compute_authorized_amount(estimated: &Money, eligible: &Money) -> Result<Money, MoneyError> {
    estimated.same_currency(eligible)?;
    if estimated.amount_minor == 0 || eligible.amount_minor == 0 {
        return Err(MoneyError::NonPositiveAmount);
    }
    Ok(Money::new(
        estimated.amount_minor.min(eligible.amount_minor),
        estimated.currency.clone(),
    ))
}

/// What the TPA pays the hospital: the actual bill, capped by the authorization.
pub fn compute_hospital_payment(actual: &Money, authorized: &Money) -> Result<Money, MoneyError> {
    actual.same_currency(authorized)?;
    if actual.amount_minor == 0 {
        return Err(MoneyError::NonPositiveAmount);
    }
    Ok(Money::new(
        actual.amount_minor.min(authorized.amount_minor),
        actual.currency.clone(),
    ))
}

/// The difference returned to the insured when the actual expense is
/// strictly below the eligible amount; zero otherwise.
pub fn compute_refund(actual: &Money, eligible: &Money) -> Result<Money, MoneyError> {
    actual.same_currency(eligible)?;
    if actual.amount_minor == 0 || eligible.amount_minor == 0 {
        return Err(MoneyError::NonPositiveAmount);
    }
    let refund = if actual.amount_minor < eligible.amount_minor {
        eligible.amount_minor - actual.amount_minor
    } else {
        0
    };
    Ok(Money::new(refund, actual.currency.clone()))
}

macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ::serde::Serialize, ::serde::Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} '{}'", stringify!($name), s)),
                }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}
pub(crate) use wire_enum;

wire_enum!(
    /// Who is acting on the platform.
    Role {
        Policyholder => "policyholder",
        Hospital => "hospital",
        Tpa => "tpa",
        Admin => "admin",
    }
);

wire_enum!(PolicyStatus { Active => "active", Lapsed => "lapsed" });

wire_enum!(Decision { Approve => "approve", Deny => "deny" });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub uid: String,
    pub company_id: String,
    pub policy_type: String,
    pub eligible_amount: Money,
    pub status: PolicyStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tpa {
    pub tpa_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hospital {
    pub hospital_id: String,
    pub name: String,
    pub tpa_networks: std::collections::BTreeSet<String>,
}

impl Hospital {
    pub fn in_network(&self, tpa_id: &str) -> bool {
        self.tpa_networks.contains(tpa_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertifyingDoctor {
    pub name: String,
    pub registration_number: String,
}

/// The pre-authorization form filed before a planned hospitalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreAuthRequest {
    pub uid: String,
    pub hospital_id: String,
    pub illness_details: String,
    pub proposed_treatment: String,
    pub estimated_expense: Money,
    pub certifying_doctor: CertifyingDoctor,
    pub submitted_at: DateTime<Utc>,
}

impl PreAuthRequest {
    /// Field-level problems, empty when the form is acceptable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let texts = [
            ("uid", &self.uid),
            ("hospital_id", &self.hospital_id),
            ("illness_details", &self.illness_details),
            ("proposed_treatment", &self.proposed_treatment),
            ("certifying_doctor.name", &self.certifying_doctor.name),
            ("certifying_doctor.registration_number", &self.certifying_doctor.registration_number),
        ];
        for (field, value) in texts {
            if value.trim().is_empty() {
                out.push(format!("{field} must not be empty"));
            } else if !is_single_line(value) {
                out.push(format!("{field} must not contain control characters"));
            }
        }
        if self.estimated_expense.amount_minor == 0 {
            out.push("estimated_expense must be positive".into());
        }
        out
    }
}

/// Free text stored in records must fit on one journal line.
pub fn is_single_line(s: &str) -> bool {
    !s.chars().any(char::is_control)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrutinyRecord {
    pub decision: Decision,
    pub adjuster_id: String,
    pub notes: String,
    pub decided_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Authorization {
    pub authorized_amount: Money,
    pub authorized_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRecord {
    pub paid_amount: Money,
    pub actual_expense: Money,
    pub payee_hospital_id: String,
    pub paid_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub refund_amount: Money,
    pub settled_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub from: ClaimState,
    pub event: Trigger,
    pub to: ClaimState,
    pub at: DateTime<Utc>,
    pub actor: String,
}

/// The claim workflow aggregate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: Uuid,
    pub state: ClaimState,
    pub preauth: PreAuthRequest,
    pub policy: Option<PolicyRecord>,
    pub scrutiny: Option<ScrutinyRecord>,
    pub authorization: Option<Authorization>,
    pub payment: Option<PaymentRecord>,
    pub settlement: Option<Settlement>,
    pub history: Vec<HistoryEntry>,
}

impl Claim {
    pub fn new(claim_id: Uuid, preauth: PreAuthRequest) -> Self {
        Claim {
            claim_id,
            state: ClaimState::Submitted,
            preauth,
            policy: None,
            scrutiny: None,
            authorization: None,
            payment: None,
            settlement: None,
            history: Vec::new(),
        }
    }

    /// Optimistic-concurrency version: the number of recorded transitions.
    pub fn version(&self) -> usize {
        self.history.len()
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = self.preauth.problems();
        if self.history.windows(2).any(|w| w[0].at > w[1].at) {
            out.push("history is not chronologically ordered".into());
        }
        if self.history.windows(2).any(|w| w[0].to != w[1].from) {
            out.push("history entries do not chain".into());
        }
        let last = self.history.last().map(|h| h.to).unwrap_or(ClaimState::Submitted);
        if last != self.state {
            out.push("state does not match history".into());
        }
        if self.authorization.is_some()
            && self.scrutiny.as_ref().map(|s| s.decision) != Some(Decision::Approve)
        {
            out.push("authorization without approved scrutiny".into());
        }
        if self.payment.is_some() && self.authorization.is_none() {
            out.push("payment without authorization".into());
        }
        if self.settlement.is_some() && self.payment.is_none() {
            out.push("settlement without payment".into());
        }
        if let (Some(auth), Some(policy)) = (&self.authorization, &self.policy) {
            if auth.authorized_amount.amount_minor > policy.eligible_amount.amount_minor {
                out.push("authorized amount exceeds eligible amount".into());
            }
        }
        if let (Some(pay), Some(auth)) = (&self.payment, &self.authorization) {
            if pay.paid_amount.amount_minor > auth.authorized_amount.amount_minor {
                out.push("paid amount exceeds authorized amount".into());
            }
        }
        out
    }
}
