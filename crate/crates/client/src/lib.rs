//! Typed client for the medclaim gateway's JSON API.

use medclaim_core::api::{
    ActionReply, ClaimQuery, ClaimView, ErrorBody, FixtureUpload, HospitalQuery, LoginRequest, LoginResponse,
    PaymentForm, PreAuthForm, ScrutinyForm, StateChange, SubmitReply,
};
use medclaim_core::domain::{Decision, Hospital, Money};
use medclaim_core::envelope::ServiceName;
use medclaim_core::monitor::MetricsSnapshot;
use medclaim_core::orchestrator::ClaimState;
use medclaim_core::registry::{BindState, ServiceDescriptor};
use medclaim_core::store::SeedSummary;
use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use url::Url;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid server URL: {0}")]
    Url(#[from] url::ParseError),
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status}: {} ({})", .body.message, .body.code)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("not logged in")]
    NoSession,
}

impl ClientError {
    /// The HTTP status of an API error.
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
    token: Option<String>,
}

impl Client {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let mut base = Url::parse(base)?;
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        Ok(Client { base, http: reqwest::Client::new(), token: None })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    fn request(&self, method: Method, path: &str) -> Result<RequestBuilder, ClientError> {
        let url = self.base.join(path.trim_start_matches('/'))?;
        let mut req = self.http.request(method, url);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        Ok(req)
    }

    async fn send<T: DeserializeOwned>(req: RequestBuilder) -> Result<T, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let body = serde_json::from_str(&text).unwrap_or_else(|_| ErrorBody {
            code: "http".into(),
            message: if text.is_empty() { status.to_string() } else { text },
            detail: None,
        });
        Err(ClientError::Api { status, body })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::send(self.request(Method::GET, path)?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::send(self.request(Method::POST, path)?.json(body)).await
    }

    /// Logs in and keeps the session token for later calls.
    pub async fn login(&mut self, username: &str, secret: &str) -> Result<LoginResponse, ClientError> {
        let req = LoginRequest { username: username.into(), secret: secret.into() };
        let resp: LoginResponse = self.post("login", &req).await?;
        self.token = Some(resp.token.clone());
        Ok(resp)
    }

    pub async fn submit_preauth(&self, form: &PreAuthForm) -> Result<SubmitReply, ClientError> {
        self.post("preauth", form).await
    }

    pub async fn claims(&self, state: Option<ClaimState>) -> Result<Vec<ClaimView>, ClientError> {
        Self::send(self.request(Method::GET, "claims")?.query(&ClaimQuery { state })).await
    }

    pub async fn claim(&self, id: Uuid) -> Result<ClaimView, ClientError> {
        self.get(&format!("claims/{id}")).await
    }

    pub async fn scrutinize(&self, id: Uuid, decision: Decision, notes: &str) -> Result<ActionReply, ClientError> {
        self.post(&format!("claims/{id}/scrutiny"), &ScrutinyForm { decision, notes: notes.into() }).await
    }

    pub async fn authorize(&self, id: Uuid) -> Result<ActionReply, ClientError> {
        self.post(&format!("claims/{id}/authorize"), &serde_json::json!({})).await
    }

    pub async fn report_payment(&self, id: Uuid, actual_expense: Money) -> Result<ActionReply, ClientError> {
        self.post(&format!("claims/{id}/payment"), &PaymentForm { actual_expense }).await
    }

    pub async fn settle(&self, id: Uuid) -> Result<ActionReply, ClientError> {
        self.post(&format!("claims/{id}/settle"), &serde_json::json!({})).await
    }

    pub async fn hospitals(&self, tpa: Option<&str>) -> Result<Vec<Hospital>, ClientError> {
        let q = HospitalQuery { tpa: tpa.map(str::to_string) };
        Self::send(self.request(Method::GET, "hospitals")?.query(&q)).await
    }

    pub async fn services(&self) -> Result<Vec<ServiceDescriptor>, ClientError> {
        self.get("registry/services").await
    }

    pub async fn set_service_state(&self, id: Uuid, state: BindState) -> Result<ServiceDescriptor, ClientError> {
        self.post(&format!("registry/services/{id}/state"), &StateChange { state }).await
    }

    pub async fn metrics(&self) -> Result<MetricsSnapshot, ClientError> {
        self.get("monitor/metrics").await
    }

    pub async fn seed_fixtures(&self, fixtures: &str) -> Result<SeedSummary, ClientError> {
        self.post("admin/fixtures", &FixtureUpload { fixtures: fixtures.into() }).await
    }

    /// Sends a raw request envelope to a service and returns the reply bytes.
    pub async fn send_envelope(&self, service: ServiceName, envelope: Vec<u8>) -> Result<Vec<u8>, ClientError> {
        let req = self
            .request(Method::POST, &format!("services/{service}"))?
            .header(reqwest::header::CONTENT_TYPE, "application/xml")
            .body(envelope);
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.bytes().await?.to_vec());
        }
        let text = resp.text().await.unwrap_or_default();
        let body = serde_json::from_str(&text)
            .unwrap_or(ErrorBody { code: "http".into(), message: status.to_string(), detail: None });
        Err(ClientError::Api { status, body })
    }
}
