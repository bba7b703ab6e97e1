//! Moving envelopes between services.
//!
//! A [`Transport`] delivers serialized envelopes to an endpoint URL and
//! returns the reply bytes. [`ServiceBus`] adds registry resolution, the
//! envelope codec and correlation checking on top.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Duration, Utc};
use parking_lot::{Mutex, RwLock};
use thiserror::Error;
use url::Url;
use uuid::Uuid;

use crate::envelope::{self, Body, Envelope, EnvelopeError, Request, ServiceName};
use crate::registry::{RegistryError, ServiceRegistry};

/// Something that answers envelopes: takes request bytes, returns reply bytes.
#[async_trait]
pub trait EnvelopeHandler: Send + Sync {
    async fn handle(&self, request: Vec<u8>) -> Vec<u8>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("nothing is listening at {0}")]
    Unreachable(String),
    #[error("transport failure: {0}")]
    Failed(String),
}

#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, endpoint: &Url, request: Vec<u8>) -> Result<Vec<u8>, TransportError>;
}

/// In-process transport: endpoints are URLs mapped to mounted handlers.
#[derive(Default)]
pub struct LocalTransport {
    handlers: RwLock<HashMap<String, Arc<dyn EnvelopeHandler>>>,
}

impl std::fmt::Debug for LocalTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut keys: Vec<String> = self.handlers.read().keys().cloned().collect();
        keys.sort();
        f.debug_struct("LocalTransport").field("endpoints", &keys).finish()
    }
}

impl LocalTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mount(&self, endpoint: &Url, handler: Arc<dyn EnvelopeHandler>) {
        self.handlers.write().insert(endpoint.to_string(), handler);
    }

    pub fn unmount(&self, endpoint: &Url) -> Option<Arc<dyn EnvelopeHandler>> {
        self.handlers.write().remove(endpoint.as_str())
    }

    pub fn handler(&self, endpoint: &Url) -> Option<Arc<dyn EnvelopeHandler>> {
        self.handlers.read().get(endpoint.as_str()).cloned()
    }
}

#[async_trait]
impl Transport for LocalTransport {
    async fn send(&self, endpoint: &Url, request: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let handler = self.handler(endpoint).ok_or_else(|| TransportError::Unreachable(endpoint.to_string()))?;
        Ok(handler.handle(request).await)
    }
}

/// Source of message ids and timestamps for outgoing envelopes.
pub trait MessageStamper: Send + Sync {
    fn message_id(&self) -> Uuid;
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemStamper;

impl MessageStamper for SystemStamper {
    fn message_id(&self) -> Uuid {
        Uuid::new_v4()
    }

    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic stamps: ids derived from a namespace and a counter, and a
/// clock that advances one second per reading.
#[derive(Debug)]
pub struct SequenceStamper {
    namespace: Uuid,
    start: DateTime<Utc>,
    ids: AtomicU64,
    ticks: AtomicU64,
}

impl SequenceStamper {
    pub fn new(namespace: Uuid, start: DateTime<Utc>) -> Self {
        SequenceStamper { namespace, start, ids: AtomicU64::new(0), ticks: AtomicU64::new(0) }
    }
}

impl MessageStamper for SequenceStamper {
    fn message_id(&self) -> Uuid {
        let n = self.ids.fetch_add(1, Ordering::Relaxed);
        Uuid::new_v5(&self.namespace, &n.to_be_bytes())
    }

    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::Relaxed);
        self.start + Duration::seconds(n as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error(transparent)]
    Unresolved(RegistryError),
    #[error(transparent)]
    Transport(TransportError),
    #[error("request could not be serialized: {0}")]
    BadRequest(EnvelopeError),
    #[error("reply from {endpoint} is not a valid envelope: {error}")]
    BadReply { endpoint: String, error: EnvelopeError },
    #[error("reply from {endpoint} carries correlation id {got}, expected {expected}")]
    CorrelationMismatch { endpoint: String, expected: String, got: String },
}

/// Records every request envelope the bus sends, in order.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    requests: Mutex<Vec<Vec<u8>>>,
}

impl TraceRecorder {
    pub fn requests(&self) -> Vec<Vec<u8>> {
        self.requests.lock().clone()
    }
}

#[derive(Clone)]
pub struct ServiceBus {
    registry: Arc<ServiceRegistry>,
    transport: Arc<dyn Transport>,
    recorder: Option<Arc<TraceRecorder>>,
}

impl std::fmt::Debug for ServiceBus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceBus").field("recording", &self.recorder.is_some()).finish()
    }
}

impl ServiceBus {
    pub fn new(registry: Arc<ServiceRegistry>, transport: Arc<dyn Transport>) -> Self {
        ServiceBus { registry, transport, recorder: None }
    }

    pub fn with_recorder(mut self, recorder: Arc<TraceRecorder>) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn registry(&self) -> &Arc<ServiceRegistry> {
        &self.registry
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    /// Builds a request envelope for `service` and sends it.
    pub async fn request(
        &self,
        service: ServiceName,
        request: Request,
        correlation_id: Uuid,
        stamper: &dyn MessageStamper,
    ) -> Result<Envelope, CallError> {
        let env = Envelope::new(
            stamper.message_id(),
            correlation_id,
            stamper.now(),
            service,
            request.operation(),
            Body::Request(request),
        );
        self.call(&env).await
    }

    /// Resolves the envelope's service, sends it and returns the parsed,
    /// correlation-checked reply. A Fault reply is still `Ok`.
    pub async fn call(&self, env: &Envelope) -> Result<Envelope, CallError> {
        let bytes = envelope::serialize(env).map_err(CallError::BadRequest)?;
        self.send_bytes(env.service, &env.correlation_id, bytes).await
    }

    /// Sends already-serialized request bytes; used to replay a recorded trace.
    pub async fn replay(&self, request: &[u8]) -> Result<Envelope, CallError> {
        let env = envelope::parse(request).map_err(CallError::BadRequest)?;
        self.send_bytes(env.service, &env.correlation_id, request.to_vec()).await
    }

    async fn send_bytes(
        &self,
        service: ServiceName,
        correlation_id: &str,
        bytes: Vec<u8>,
    ) -> Result<Envelope, CallError> {
        let endpoint = self.registry.resolve(service).map_err(CallError::Unresolved)?;
        if let Some(rec) = &self.recorder {
            rec.requests.lock().push(bytes.clone());
        }
        tracing::debug!(%service, %endpoint, correlation_id, "sending envelope");
        let reply = self.transport.send(&endpoint, bytes).await.map_err(CallError::Transport)?;
        let reply = envelope::parse(&reply)
            .map_err(|error| CallError::BadReply { endpoint: endpoint.to_string(), error })?;
        if reply.correlation_id != correlation_id {
            return Err(CallError::CorrelationMismatch {
                endpoint: endpoint.to_string(),
                expected: correlation_id.to_string(),
                got: reply.correlation_id,
            });
        }
        Ok(reply)
    }
}
