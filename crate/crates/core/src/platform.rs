//! Wires the whole system together in one process: policy directory, claim
//! store, registry, in-process transport, the six services, the monitor and
//! a workflow driver.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;
use url::Url;
use uuid::Uuid;

use crate::envelope::ServiceName;
use crate::monitor::{Monitor, MonitorConfig, SecurityLog};
use crate::orchestrator::ClaimWorkflow;
use crate::registry::{Registration, RegistryError, ServiceRegistry};
use crate::services::{ClaimServices, ServiceEndpoint, SharedDirectory};
use crate::store::{JournaledClaimStore, PolicyDirectory};
use crate::transport::{EnvelopeHandler, LocalTransport, MessageStamper, ServiceBus, TraceRecorder};

pub const SERVICE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The default endpoint of replica `index` of `name`.
pub fn local_endpoint(name: ServiceName, index: usize) -> Url {
    Url::parse(&format!("local://{}/{index}", name.as_str().to_ascii_lowercase())).expect("static endpoint URL")
}

#[derive(Debug)]
pub struct PlatformBuilder {
    directory: PolicyDirectory,
    store: Option<Arc<JournaledClaimStore>>,
    replicas: BTreeMap<ServiceName, usize>,
    monitor: MonitorConfig,
    record: bool,
}

impl PlatformBuilder {
    pub fn store(mut self, store: Arc<JournaledClaimStore>) -> Self {
        self.store = Some(store);
        self
    }

    /// How many instances of `name` to register; zero leaves it out.
    pub fn replicas(mut self, name: ServiceName, count: usize) -> Self {
        self.replicas.insert(name, count);
        self
    }

    pub fn monitor(mut self, config: MonitorConfig) -> Self {
        self.monitor = config;
        self
    }

    /// Keep every request envelope the bus sends.
    pub fn record_requests(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn build(self) -> Platform {
        let directory: SharedDirectory = Arc::new(RwLock::new(self.directory));
        let store = self.store.unwrap_or_else(|| Arc::new(JournaledClaimStore::in_memory()));
        let security = Arc::new(SecurityLog::default());
        let services = Arc::new(ClaimServices::new(Arc::clone(&directory), store.clone(), Arc::clone(&security)));
        let registry = Arc::new(ServiceRegistry::new());
        let transport = Arc::new(LocalTransport::new());
        let recorder = self.record.then(|| Arc::new(TraceRecorder::default()));
        let mut bus = ServiceBus::new(Arc::clone(&registry), transport.clone());
        if let Some(rec) = &recorder {
            bus = bus.with_recorder(Arc::clone(rec));
        }
        let monitor =
            Arc::new(Monitor::new(Arc::clone(&registry), transport.clone(), Arc::clone(&security), self.monitor));
        let platform = Platform { directory, store, security, services, registry, transport, bus, monitor, recorder };
        for name in ServiceName::ALL.iter().copied() {
            for i in 0..self.replicas.get(&name).copied().unwrap_or(1) {
                platform
                    .add_instance(name, local_endpoint(name, i), Arc::new(platform.endpoint(name)))
                    .expect("default endpoints are distinct");
            }
        }
        platform
    }
}

#[derive(Debug, Clone)]
pub struct Platform {
    pub directory: SharedDirectory,
    pub store: Arc<JournaledClaimStore>,
    pub security: Arc<SecurityLog>,
    pub services: Arc<ClaimServices>,
    pub registry: Arc<ServiceRegistry>,
    pub transport: Arc<LocalTransport>,
    pub bus: ServiceBus,
    pub monitor: Arc<Monitor>,
    pub recorder: Option<Arc<TraceRecorder>>,
}

impl Platform {
    pub fn builder(directory: PolicyDirectory) -> PlatformBuilder {
        PlatformBuilder {
            directory,
            store: None,
            replicas: BTreeMap::new(),
            monitor: MonitorConfig::default(),
            record: false,
        }
    }

    /// A handler serving `name` from this platform's services.
    pub fn endpoint(&self, name: ServiceName) -> ServiceEndpoint {
        ServiceEndpoint::new(name, Arc::clone(&self.services))
    }

    /// Registers an instance of `name` at `url` and mounts `handler` there.
    pub fn add_instance(
        &self,
        name: ServiceName,
        url: Url,
        handler: Arc<dyn EnvelopeHandler>,
    ) -> Result<Uuid, RegistryError> {
        let id = self.registry.register(Registration::new(name, SERVICE_VERSION, url.as_str()))?;
        self.transport.mount(&url, handler);
        Ok(id)
    }

    pub fn workflow(&self, stamper: Arc<dyn MessageStamper>) -> ClaimWorkflow {
        ClaimWorkflow::new(self.bus.clone(), stamper)
    }

    /// Request envelopes sent so far, if recording was enabled.
    pub fn recorded_requests(&self) -> Vec<Vec<u8>> {
        self.recorder.as_ref().map(|r| r.requests()).unwrap_or_default()
    }
}
