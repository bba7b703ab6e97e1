//! Availability monitoring: probes every registered service with a Ping,
//! keeps a bounded probe log, and binds or unbinds services through the
//! registry when they cross the configured thresholds.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::domain::wire_enum;
use crate::envelope::{self, Body, EnvelopeError, Request, Response, ServiceName};
use crate::registry::{BindState, ServiceDescriptor, ServiceRegistry};
use crate::transport::{MessageStamper, SystemStamper, Transport, TransportError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub interval_ms: u64,
    pub timeout_ms: u64,
    pub unbind_after: u32,
    pub rebind_after: u32,
    pub window_ms: u64,
    pub log_capacity: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            interval_ms: 5_000,
            timeout_ms: 1_000,
            unbind_after: 3,
            rebind_after: 2,
            window_ms: 300_000,
            log_capacity: 10_000,
        }
    }
}

wire_enum!(FailureReason {
    Timeout => "timeout",
    Unreachable => "unreachable",
    SchemaViolation => "schema-violation",
    CorrelationMismatch => "correlation-mismatch",
    UnexpectedBody => "unexpected-body",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProbeOutcome {
    Ok { latency_us: u64 },
    Fail { reason: FailureReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub service_id: Uuid,
    pub at: DateTime<Utc>,
    pub outcome: ProbeOutcome,
}

impl ProbeResult {
    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, ProbeOutcome::Ok { .. })
    }
}

wire_enum!(ActionKind {
    Bind => "bind",
    Unbind => "unbind",
});

/// A registry change the monitor made, with the streak that caused it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorAction {
    pub service_id: Uuid,
    pub name: ServiceName,
    pub action: ActionKind,
    pub streak: u32,
    pub at: DateTime<Utc>,
}

/// Counts envelopes rejected by a service's schema check.
#[derive(Debug, Default)]
pub struct SecurityLog {
    total: AtomicU64,
    by_service: Mutex<BTreeMap<ServiceName, u64>>,
}

impl SecurityLog {
    pub fn record(&self, service: ServiceName, error: &EnvelopeError) {
        self.total.fetch_add(1, Ordering::Relaxed);
        *self.by_service.lock().entry(service).or_default() += 1;
        tracing::warn!(%service, %error, "rejected request envelope");
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    pub fn by_service(&self) -> BTreeMap<ServiceName, u64> {
        self.by_service.lock().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceMetrics {
    pub service_id: Uuid,
    pub name: ServiceName,
    pub endpoint: String,
    pub state: BindState,
    pub availability_ratio: f64,
    pub p50_latency_ms: Option<f64>,
    pub p95_latency_ms: Option<f64>,
    pub probes_total: u64,
    pub failures_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub window_ms: u64,
    pub services: Vec<ServiceMetrics>,
    pub security_events: u64,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

impl MetricsSnapshot {
    /// Computes metrics for `services` from the probes inside the window
    /// ending at `now`. A service with no probes reports availability 1.0.
    pub fn from_probes(
        services: &[ServiceDescriptor],
        probes: &[ProbeResult],
        window: Duration,
        now: DateTime<Utc>,
        security_events: u64,
    ) -> Self {
        let since = now - chrono::Duration::from_std(window).unwrap_or(chrono::Duration::MAX);
        let services = services
            .iter()
            .map(|svc| {
                let mine: Vec<&ProbeResult> =
                    probes.iter().filter(|p| p.service_id == svc.service_id && p.at >= since && p.at <= now).collect();
                let total = mine.len() as u64;
                let failures = mine.iter().filter(|p| !p.is_ok()).count() as u64;
                let mut latencies: Vec<u64> = mine
                    .iter()
                    .filter_map(|p| match p.outcome {
                        ProbeOutcome::Ok { latency_us } => Some(latency_us),
                        ProbeOutcome::Fail { .. } => None,
                    })
                    .collect();
                latencies.sort_unstable();
                let ms = |us: u64| us as f64 / 1000.0;
                ServiceMetrics {
                    service_id: svc.service_id,
                    name: svc.name,
                    endpoint: svc.endpoint.to_string(),
                    state: svc.state,
                    availability_ratio: if total == 0 { 1.0 } else { (total - failures) as f64 / total as f64 },
                    p50_latency_ms: nearest_rank(&latencies, 50.0).map(ms),
                    p95_latency_ms: nearest_rank(&latencies, 95.0).map(ms),
                    probes_total: total,
                    failures_total: failures,
                }
            })
            .collect();
        MetricsSnapshot { window_ms: window.as_millis() as u64, services, security_events }
    }
}

pub struct Monitor {
    registry: Arc<ServiceRegistry>,
    transport: Arc<dyn Transport>,
    security: Arc<SecurityLog>,
    stamper: Arc<dyn MessageStamper>,
    config: MonitorConfig,
    probes: Mutex<VecDeque<ProbeResult>>,
    actions: Mutex<Vec<MonitorAction>>,
}

impl std::fmt::Debug for Monitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Monitor {
    pub fn new(
        registry: Arc<ServiceRegistry>,
        transport: Arc<dyn Transport>,
        security: Arc<SecurityLog>,
        config: MonitorConfig,
    ) -> Self {
        Monitor {
            registry,
            transport,
            security,
            stamper: Arc::new(SystemStamper),
            config,
            probes: Mutex::new(VecDeque::new()),
            actions: Mutex::new(Vec::new()),
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Pings one service instance directly (bypassing resolution, so
    /// unbound instances are probed too).
    pub async fn probe(&self, service: &ServiceDescriptor) -> ProbeResult {
        let correlation = self.stamper.message_id();
        let ping = envelope::Envelope::new(
            self.stamper.message_id(),
            correlation,
            self.stamper.now(),
            service.name,
            envelope::Operation::Ping,
            Body::Request(Request::Ping),
        );
        let bytes = envelope::serialize(&ping).expect("ping envelopes always serialize");
        let started = Instant::now();
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let sent = tokio::time::timeout(timeout, self.transport.send(&service.endpoint, bytes)).await;
        let latency = started.elapsed();
        let outcome = match sent {
            Err(_) => ProbeOutcome::Fail { reason: FailureReason::Timeout },
            Ok(Err(TransportError::Unreachable(_) | TransportError::Failed(_))) => {
                ProbeOutcome::Fail { reason: FailureReason::Unreachable }
            }
            Ok(Ok(reply)) => match envelope::parse(&reply) {
                Err(_) => ProbeOutcome::Fail { reason: FailureReason::SchemaViolation },
                Ok(env) if env.correlation_uuid() != Some(correlation) => {
                    ProbeOutcome::Fail { reason: FailureReason::CorrelationMismatch }
                }
                Ok(env) if env.body == Body::Response(Response::Pong) => {
                    ProbeOutcome::Ok { latency_us: latency.as_micros() as u64 }
                }
                Ok(_) => ProbeOutcome::Fail { reason: FailureReason::UnexpectedBody },
            },
        };
        ProbeResult { service_id: service.service_id, at: Utc::now(), outcome }
    }

    /// Probes every registered service once and applies the bind/unbind
    /// rules. Returns the actions taken.
    pub async fn tick(&self) -> Vec<MonitorAction> {
        let services = self.registry.list();
        let results = futures::future::join_all(services.iter().map(|s| self.probe(s))).await;
        let mut taken = Vec::new();
        for result in results {
            self.log(result.clone());
            let Ok(svc) = self.registry.record_probe(result.service_id, result.is_ok(), result.at) else {
                continue;
            };
            let h = &svc.health;
            let action = match svc.state {
                BindState::Bound if h.consecutive_failures >= self.config.unbind_after => {
                    Some((ActionKind::Unbind, BindState::Unbound, h.consecutive_failures))
                }
                BindState::Unbound if h.consecutive_successes >= self.config.rebind_after => {
                    Some((ActionKind::Bind, BindState::Bound, h.consecutive_successes))
                }
                _ => None,
            };
            if let Some((kind, state, streak)) = action {
                if self.registry.set_state(svc.service_id, state).is_ok() {
                    tracing::info!(service = %svc.name, endpoint = %svc.endpoint, action = %kind, streak, "monitor changed binding");
                    taken.push(MonitorAction { service_id: svc.service_id, name: svc.name, action: kind, streak, at: result.at });
                }
            }
        }
        self.actions.lock().extend(taken.iter().cloned());
        taken
    }

    fn log(&self, result: ProbeResult) {
        let mut log = self.probes.lock();
        if log.len() >= self.config.log_capacity.max(1) {
            log.pop_front();
        }
        log.push_back(result);
    }

    pub fn probes(&self) -> Vec<ProbeResult> {
        self.probes.lock().iter().cloned().collect()
    }

    /// Every action taken so far, oldest first.
    pub fn actions(&self) -> Vec<MonitorAction> {
        self.actions.lock().clone()
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        let probes = self.probes();
        MetricsSnapshot::from_probes(
            &self.registry.list(),
            &probes,
            Duration::from_millis(self.config.window_ms),
            Utc::now(),
            self.security.total(),
        )
    }

    /// Ticks every `interval_ms` until `shutdown` flips to true.
    pub async fn run(self: Arc<Self>, mut shutdown: tokio::sync::watch::Receiver<bool>) {
        let mut interval = tokio::time::interval(Duration::from_millis(self.config.interval_ms.max(1)));
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = interval.tick() => {
                    self.tick().await;
                }
                changed = shutdown.changed() => {
                    if changed.is_err() || *shutdown.borrow() {
                        break;
                    }
                }
            }
        }
    }
}
