//! Runtime service registry: services register, get bound or unbound, and
//! callers resolve only bound instances.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;
use uuid::Uuid;

use crate::domain::wire_enum;
use crate::envelope::ServiceName;

wire_enum!(BindState {
    Bound => "bound",
    Unbound => "unbound",
});

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub consecutive_failures: u32,
    pub consecutive_successes: u32,
    pub last_probe_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_id: Uuid,
    pub name: ServiceName,
    pub version: String,
    pub endpoint: Url,
    pub state: BindState,
    pub health: Health,
}

/// What a service supplies when registering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub name: ServiceName,
    pub version: String,
    pub endpoint: String,
}

impl Registration {
    pub fn new(name: ServiceName, version: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Registration { name, version: version.into(), endpoint: endpoint.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{name} is already registered at {endpoint}")]
    DuplicateRegistration { name: ServiceName, endpoint: String },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("no bound instance of {0}")]
    Unresolved(ServiceName),
    #[error("unknown service {0}")]
    UnknownService(Uuid),
}

#[derive(Debug, Default)]
struct Inner {
    /// Registration order.
    services: Vec<ServiceDescriptor>,
    /// Per name, the registration index last handed out by `resolve`.
    cursors: HashMap<ServiceName, usize>,
}

#[derive(Debug, Default)]
pub struct ServiceRegistry {
    inner: Mutex<Inner>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a bound service with zeroed health counters.
    pub fn register(&self, reg: Registration) -> Result<Uuid, RegistryError> {
        semver::Version::parse(&reg.version)
            .map_err(|e| RegistryError::InvalidDescriptor(format!("version '{}': {e}", reg.version)))?;
        let endpoint = Url::parse(&reg.endpoint)
            .map_err(|e| RegistryError::InvalidDescriptor(format!("endpoint '{}': {e}", reg.endpoint)))?;
        let mut inner = self.inner.lock();
        if inner.services.iter().any(|s| s.name == reg.name && s.endpoint == endpoint) {
            return Err(RegistryError::DuplicateRegistration { name: reg.name, endpoint: endpoint.into() });
        }
        let service_id = Uuid::new_v4();
        inner.services.push(ServiceDescriptor {
            service_id,
            name: reg.name,
            version: reg.version,
            endpoint,
            state: BindState::Bound,
            health: Health::default(),
        });
        Ok(service_id)
    }

    /// Next bound instance of `name`, rotating in registration order.
    pub fn resolve(&self, name: ServiceName) -> Result<Url, RegistryError> {
        let mut inner = self.inner.lock();
        let Inner { services, cursors } = &mut *inner;
        let n = services.len();
        let start = cursors.get(&name).map_or(0, |c| c + 1);
        let pick = (0..n)
            .map(|k| (start + k) % n)
            .find(|&i| services[i].name == name && services[i].state == BindState::Bound)
            .ok_or(RegistryError::Unresolved(name))?;
        cursors.insert(name, pick);
        Ok(services[pick].endpoint.clone())
    }

    /// Whether `name` has a bound instance, without advancing the rotation.
    pub fn is_resolvable(&self, name: ServiceName) -> bool {
        self.inner.lock().services.iter().any(|s| s.name == name && s.state == BindState::Bound)
    }

    pub fn set_state(&self, service_id: Uuid, state: BindState) -> Result<(), RegistryError> {
        let mut inner = self.inner.lock();
        let svc = inner
            .services
            .iter_mut()
            .find(|s| s.service_id == service_id)
            .ok_or(RegistryError::UnknownService(service_id))?;
        svc.state = state;
        Ok(())
    }

    /// Folds one probe outcome into the service's health counters and
    /// returns the updated descriptor.
    pub fn record_probe(
        &self,
        service_id: Uuid,
        ok: bool,
        at: DateTime<Utc>,
    ) -> Result<ServiceDescriptor, RegistryError> {
        let mut inner = self.inner.lock();
        let svc = inner
            .services
            .iter_mut()
            .find(|s| s.service_id == service_id)
            .ok_or(RegistryError::UnknownService(service_id))?;
        let h = &mut svc.health;
        if ok {
            h.consecutive_successes = h.consecutive_successes.saturating_add(1);
            h.consecutive_failures = 0;
        } else {
            h.consecutive_failures = h.consecutive_failures.saturating_add(1);
            h.consecutive_successes = 0;
        }
        h.last_probe_at = Some(at);
        Ok(svc.clone())
    }

    pub fn get(&self, service_id: Uuid) -> Option<ServiceDescriptor> {
        self.inner.lock().services.iter().find(|s| s.service_id == service_id).cloned()
    }

    /// Snapshot sorted by name, then registration order.
    pub fn list(&self) -> Vec<ServiceDescriptor> {
        let mut all = self.inner.lock().services.clone();
        all.sort_by(|a, b| a.name.as_str().cmp(b.name.as_str()));
        all
    }

    /// Every instance registered under `name`, in registration order.
    pub fn instances(&self, name: ServiceName) -> Vec<ServiceDescriptor> {
        self.inner.lock().services.iter().filter(|s| s.name == name).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn reg(name: ServiceName, endpoint: &str) -> Registration {
        Registration::new(name, "1.0.0", endpoint)
    }

    #[test]
    fn register_and_duplicates() {
        let r = ServiceRegistry::new();
        let id = r.register(reg(ServiceName::Verification, "local://verify-a")).unwrap();
        assert_eq!(r.get(id).unwrap().state, BindState::Bound);
        assert_eq!(r.get(id).unwrap().health, Health::default());
        assert!(matches!(
            r.register(reg(ServiceName::Verification, "local://verify-a")),
            Err(RegistryError::DuplicateRegistration { .. })
        ));
        r.register(reg(ServiceName::Verification, "local://verify-b")).unwrap();
        r.register(reg(ServiceName::Payment, "local://verify-a")).unwrap();
        assert_eq!(r.instances(ServiceName::Verification).len(), 2);
    }

    #[test]
    fn invalid_descriptors() {
        let r = ServiceRegistry::new();
        let bad_version = Registration::new(ServiceName::PreAuth, "one", "local://x");
        assert!(matches!(r.register(bad_version), Err(RegistryError::InvalidDescriptor(_))));
        assert!(matches!(r.register(reg(ServiceName::PreAuth, "not a url")), Err(RegistryError::InvalidDescriptor(_))));
    }

    #[test]
    fn round_robin_skips_unbound() {
        let r = ServiceRegistry::new();
        let a = r.register(reg(ServiceName::Scrutiny, "local://a")).unwrap();
        r.register(reg(ServiceName::Settlement, "local://s")).unwrap();
        let b = r.register(reg(ServiceName::Scrutiny, "local://b")).unwrap();
        let hosts: Vec<String> = (0..4).map(|_| r.resolve(ServiceName::Scrutiny).unwrap().to_string()).collect();
        assert_eq!(hosts, ["local://a", "local://b", "local://a", "local://b"]);

        r.set_state(a, BindState::Unbound).unwrap();
        assert_eq!(r.resolve(ServiceName::Scrutiny).unwrap().as_str(), "local://b");
        assert_eq!(r.resolve(ServiceName::Scrutiny).unwrap().as_str(), "local://b");
        r.set_state(b, BindState::Unbound).unwrap();
        assert_eq!(r.resolve(ServiceName::Scrutiny), Err(RegistryError::Unresolved(ServiceName::Scrutiny)));
        r.set_state(a, BindState::Bound).unwrap();
        assert_eq!(r.resolve(ServiceName::Scrutiny).unwrap().as_str(), "local://a");
        assert_eq!(r.resolve(ServiceName::PreAuth), Err(RegistryError::Unresolved(ServiceName::PreAuth)));
        assert_eq!(r.set_state(Uuid::nil(), BindState::Bound), Err(RegistryError::UnknownService(Uuid::nil())));
    }

    #[test]
    fn list_is_sorted_by_name_then_registration() {
        let r = ServiceRegistry::new();
        r.register(reg(ServiceName::Verification, "local://v1")).unwrap();
        r.register(reg(ServiceName::CashAuth, "local://c1")).unwrap();
        r.register(reg(ServiceName::Verification, "local://v0")).unwrap();
        let order: Vec<String> = r.list().iter().map(|s| s.endpoint.to_string()).collect();
        assert_eq!(order, ["local://c1", "local://v1", "local://v0"]);
    }

    #[test]
    fn counters_reset_on_opposite_outcome() {
        let r = ServiceRegistry::new();
        let id = r.register(reg(ServiceName::Payment, "local://p")).unwrap();
        let now = Utc::now();
        r.record_probe(id, false, now).unwrap();
        let h = r.record_probe(id, false, now).unwrap().health;
        assert_eq!((h.consecutive_failures, h.consecutive_successes), (2, 0));
        let h = r.record_probe(id, true, now).unwrap().health;
        assert_eq!((h.consecutive_failures, h.consecutive_successes), (0, 1));
        assert_eq!(h.last_probe_at, Some(now));
    }

    #[test]
    fn concurrent_toggling_never_resolves_unbound() {
        let r = Arc::new(ServiceRegistry::new());
        let flaky = r.register(reg(ServiceName::Verification, "local://flaky")).unwrap();
        r.register(reg(ServiceName::Verification, "local://steady")).unwrap();
        // Writers hold `gate` exclusively while flipping state, so a reader
        // holding it shared sees the state resolve acted on.
        let gate = Arc::new(parking_lot::RwLock::new(()));
        let toggler = {
            let (r, gate) = (Arc::clone(&r), Arc::clone(&gate));
            std::thread::spawn(move || {
                for i in 0..5_000 {
                    let state = if i % 2 == 0 { BindState::Unbound } else { BindState::Bound };
                    let _w = gate.write();
                    r.set_state(flaky, state).unwrap();
                }
            })
        };
        let readers: Vec<_> = (0..3)
            .map(|_| {
                let (r, gate) = (Arc::clone(&r), Arc::clone(&gate));
                std::thread::spawn(move || {
                    for _ in 0..5_000 {
                        let _g = gate.read();
                        let url = r.resolve(ServiceName::Verification).unwrap();
                        if url.as_str() == "local://flaky" {
                            assert_eq!(r.get(flaky).unwrap().state, BindState::Bound);
                        }
                    }
                })
            })
            .collect();
        toggler.join().unwrap();
        for t in readers {
            t.join().unwrap();
        }
        r.set_state(flaky, BindState::Unbound).unwrap();
        for _ in 0..4 {
            assert_eq!(r.resolve(ServiceName::Verification).unwrap().as_str(), "local://steady");
        }
    }

    #[test]
    fn round_robin_is_even() {
        let r = ServiceRegistry::new();
        let k = 3;
        for i in 0..k {
            r.register(reg(ServiceName::Payment, &format!("local://p{i}"))).unwrap();
        }
        let mut hits = HashMap::new();
        for _ in 0..(7 * k) {
            *hits.entry(r.resolve(ServiceName::Payment).unwrap().to_string()).or_insert(0) += 1;
        }
        assert!(hits.values().all(|&n| n == 7), "{hits:?}");
    }
}
