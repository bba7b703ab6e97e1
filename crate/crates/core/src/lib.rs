//! Core of the medclaim platform: the XML envelope contract, claim domain
//! rules, the claim workflow, policy and claim storage, the service
//! registry, the claim services and the availability monitor.

pub mod api;
pub mod domain;
pub mod envelope;
pub mod monitor;
pub mod orchestrator;
pub mod platform;
pub mod registry;
pub mod services;
pub mod store;
pub mod transport;
pub mod xml;

pub use domain::{Claim, Money};
pub use envelope::{Envelope, EnvelopeError};
pub use orchestrator::{ClaimState, EventKind};
