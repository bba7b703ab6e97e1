//! Routes, extractors and the mapping from faults to HTTP statuses.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use medclaim_core::api::{
    ActionReply, ClaimQuery, ClaimView, ErrorBody, FixtureUpload, HospitalQuery, LoginRequest, LoginResponse,
    PaymentForm, PreAuthForm, ScrutinyForm, StateChange, SubmitReply,
};
use medclaim_core::domain::{Claim, Hospital, PreAuthRequest, Role};
use medclaim_core::envelope::{Fault, FaultCode, ServiceName};
use medclaim_core::monitor::MetricsSnapshot;
use medclaim_core::orchestrator::ClaimWorkflow;
use medclaim_core::platform::Platform;
use medclaim_core::registry::{RegistryError, ServiceDescriptor};
use medclaim_core::store::{ClaimFilter, ClaimRepository, SeedSummary};
use medclaim_core::transport::{SystemStamper, Transport};
use serde::de::DeserializeOwned;
use uuid::Uuid;

use crate::access::{allows, Route};
use crate::sessions::SessionStore;
use crate::users::{Principal, UserDirectory};

#[derive(Debug)]
pub struct Gateway {
    pub platform: Platform,
    pub workflow: ClaimWorkflow,
    pub sessions: SessionStore,
    pub users: UserDirectory,
}

#[derive(Debug, Clone)]
pub struct AppState(Arc<Gateway>);

impl AppState {
    pub fn new(platform: Platform, users: UserDirectory, sessions: SessionStore) -> Self {
        let workflow = platform.workflow(Arc::new(SystemStamper));
        AppState(Arc::new(Gateway { platform, workflow, sessions, users }))
    }
}

impl std::ops::Deref for AppState {
    type Target = Gateway;
    fn deref(&self) -> &Gateway {
        &self.0
    }
}

pub fn fault_status(code: FaultCode) -> StatusCode {
    match code {
        FaultCode::InvalidRequest | FaultCode::SchemaViolation | FaultCode::UnknownOperation => StatusCode::BAD_REQUEST,
        FaultCode::Forbidden => StatusCode::FORBIDDEN,
        FaultCode::UnknownClaim | FaultCode::UnknownHospital => StatusCode::NOT_FOUND,
        FaultCode::WrongState | FaultCode::Conflict => StatusCode::CONFLICT,
        FaultCode::ServiceUnavailable => StatusCode::SERVICE_UNAVAILABLE,
        FaultCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), detail: None } }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.body.detail = Some(detail.into());
        self
    }

    fn unauthorized(message: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::from(Fault::new(FaultCode::Forbidden, message))
    }

    fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }
}

impl From<Fault> for ApiError {
    fn from(f: Fault) -> Self {
        ApiError { status: fault_status(f.code), body: f.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A JSON body; anything unreadable is a 400.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, "malformed-json", "request body is not valid JSON for this route")
                .with_detail(e.body_text())),
        }
    }
}

/// Query parameters; anything unreadable is a 400.
pub struct QueryParams<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryParams<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        match Query::<T>::from_request_parts(parts, state).await {
            Ok(Query(v)) => Ok(QueryParams(v)),
            Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid-request", "bad query string").with_detail(e.body_text())),
        }
    }
}

/// The caller behind a live bearer token.
pub struct Auth(pub Principal);

impl FromRequestParts<AppState> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let header = parts
            .headers
            .get(AUTHORIZATION)
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        let token = header
            .to_str()
            .ok()
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(|| ApiError::unauthorized("malformed authorization header"))?;
        state
            .sessions
            .principal(token)
            .map(Auth)
            .ok_or_else(|| ApiError::unauthorized("session is unknown or expired"))
    }
}

impl Auth {
    fn gate(&self, route: Route) -> ApiResult<()> {
        if allows(self.0.role, route) {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("role {} may not call {route}", self.0.role)))
        }
    }
}

fn claim_uuid(raw: &str) -> ApiResult<Uuid> {
    Uuid::try_parse(raw).map_err(|_| ApiError::from(Fault::new(FaultCode::UnknownClaim, format!("no claim {raw}"))))
}

fn can_view(p: &Principal, claim: &Claim) -> bool {
    match p.role {
        Role::Policyholder => claim.preauth.uid == p.affiliation,
        Role::Hospital => claim.preauth.hospital_id == p.affiliation,
        Role::Tpa => true,
        Role::Admin => false,
    }
}

fn view(state: &AppState, p: &Principal, claim: Claim) -> ClaimView {
    let facts = (p.role == Role::Tpa && claim.policy.is_some())
        .then(|| state.platform.services.facts(&claim, &p.affiliation).ok())
        .flatten();
    ClaimView::new(claim, facts)
}

async fn login(State(state): State<AppState>, JsonBody(req): JsonBody<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let Some(principal) = state.users.authenticate(&req.username, &req.secret) else {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "auth-failed", "unknown user or wrong secret"));
    };
    let s = state.sessions.issue(principal);
    tracing::info!(user = %s.principal.subject_id, role = %s.principal.role, "session opened");
    Ok(Json(LoginResponse {
        token: s.token,
        subject_id: s.principal.subject_id,
        role: s.principal.role,
        display_name: s.principal.display_name,
        affiliation: s.principal.affiliation,
        issued_at: s.issued_at,
        expires_at: s.expires_at,
    }))
}

async fn submit_preauth(
    State(state): State<AppState>,
    auth: Auth,
    JsonBody(form): JsonBody<PreAuthForm>,
) -> ApiResult<(StatusCode, Json<SubmitReply>)> {
    auth.gate(Route::SubmitPreAuth)?;
    let corr = state.workflow.correlation_id();
    let preauth = PreAuthRequest {
        uid: form.uid,
        hospital_id: form.hospital_id,
        illness_details: form.illness_details,
        proposed_treatment: form.proposed_treatment,
        estimated_expense: form.estimated_expense,
        certifying_doctor: form.certifying_doctor,
        submitted_at: Utc::now(),
    };
    tracing::info!(correlation_id = %corr, user = %auth.0.subject_id, "pre-authorization submitted");
    let out = state.workflow.submit(auth.0.actor(), preauth, corr).await?;
    let v = out.verification;
    Ok((
        StatusCode::CREATED,
        Json(SubmitReply { claim_id: out.claim_id, state: out.state, valid: v.valid, message: v.message, detail: v.detail }),
    ))
}

async fn list_claims(
    State(state): State<AppState>,
    auth: Auth,
    QueryParams(q): QueryParams<ClaimQuery>,
) -> ApiResult<Json<Vec<ClaimView>>> {
    auth.gate(Route::ListClaims)?;
    let p = &auth.0;
    let mut filter = ClaimFilter { state: q.state, ..Default::default() };
    match p.role {
        Role::Policyholder => filter.uid = Some(p.affiliation.clone()),
        Role::Hospital => filter.hospital_id = Some(p.affiliation.clone()),
        _ => {}
    }
    let claims = state.platform.store.list(&filter);
    Ok(Json(claims.into_iter().map(|c| view(&state, p, c)).collect()))
}

async fn get_claim(State(state): State<AppState>, auth: Auth, Path(id): Path<String>) -> ApiResult<Json<ClaimView>> {
    auth.gate(Route::GetClaim)?;
    let id = claim_uuid(&id)?;
    let claim = state
        .platform
        .store
        .load(id)
        .map_err(|_| ApiError::from(Fault::new(FaultCode::UnknownClaim, format!("no claim {id}"))))?;
    if !can_view(&auth.0, &claim) {
        return Err(ApiError::forbidden(format!("claim {id} belongs to someone else")));
    }
    Ok(Json(view(&state, &auth.0, claim)))
}

async fn scrutinize(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    JsonBody(form): JsonBody<ScrutinyForm>,
) -> ApiResult<Json<ActionReply>> {
    auth.gate(Route::Scrutinize)?;
    let id = claim_uuid(&id)?;
    let corr = state.workflow.correlation_id();
    let r = state.workflow.scrutinize(auth.0.actor(), id, form.decision, form.notes, corr).await?;
    Ok(Json(ActionReply { facts: Some(r.facts), ..ActionReply::new(r.claim_id, r.state) }))
}

async fn authorize(State(state): State<AppState>, auth: Auth, Path(id): Path<String>) -> ApiResult<Json<ActionReply>> {
    auth.gate(Route::Authorize)?;
    let id = claim_uuid(&id)?;
    let corr = state.workflow.correlation_id();
    let r = state.workflow.authorize(auth.0.actor(), id, corr).await?;
    Ok(Json(ActionReply { authorization: Some(r.authorization), ..ActionReply::new(r.claim_id, r.state) }))
}

async fn report_payment(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    JsonBody(form): JsonBody<PaymentForm>,
) -> ApiResult<Json<ActionReply>> {
    auth.gate(Route::ReportPayment)?;
    let id = claim_uuid(&id)?;
    let corr = state.workflow.correlation_id();
    let r = state.workflow.pay(auth.0.actor(), id, form.actual_expense, corr).await?;
    Ok(Json(ActionReply { payment: Some(r.payment), ..ActionReply::new(r.claim_id, r.state) }))
}

async fn settle(State(state): State<AppState>, auth: Auth, Path(id): Path<String>) -> ApiResult<Json<ActionReply>> {
    auth.gate(Route::Settle)?;
    let id = claim_uuid(&id)?;
    let corr = state.workflow.correlation_id();
    let r = state.workflow.settle(auth.0.actor(), id, corr).await?;
    Ok(Json(ActionReply { settlement: Some(r.settlement), ..ActionReply::new(r.claim_id, r.state) }))
}

async fn hospitals(
    State(state): State<AppState>,
    auth: Auth,
    QueryParams(q): QueryParams<HospitalQuery>,
) -> ApiResult<Json<Vec<Hospital>>> {
    auth.gate(Route::Hospitals)?;
    let dir = state.platform.directory.read();
    match q.tpa {
        Some(tpa) => {
            if !dir.tpas().any(|t| t.tpa_id == tpa) {
                return Err(ApiError::not_found("unknown-tpa", format!("TPA {tpa} is not known")));
            }
            Ok(Json(dir.network_hospitals(&tpa)))
        }
        None => Ok(Json(dir.hospitals().cloned().collect())),
    }
}

async fn list_services(State(state): State<AppState>, auth: Auth) -> ApiResult<Json<Vec<ServiceDescriptor>>> {
    auth.gate(Route::ListServices)?;
    Ok(Json(state.platform.registry.list()))
}

async fn set_service_state(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    JsonBody(change): JsonBody<StateChange>,
) -> ApiResult<Json<ServiceDescriptor>> {
    auth.gate(Route::SetServiceState)?;
    let missing = || ApiError::not_found("unknown-service", format!("no service instance {id}"));
    let uuid = Uuid::try_parse(&id).map_err(|_| missing())?;
    match state.platform.registry.set_state(uuid, change.state) {
        Ok(()) => {}
        Err(RegistryError::UnknownService(_)) => return Err(missing()),
        Err(e) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid-request", e.to_string())),
    }
    tracing::info!(service_id = %uuid, state = %change.state, admin = %auth.0.subject_id, "binding changed by hand");
    state.platform.registry.get(uuid).map(Json).ok_or_else(missing)
}

async fn metrics(State(state): State<AppState>, auth: Auth) -> ApiResult<Json<MetricsSnapshot>> {
    auth.gate(Route::Metrics)?;
    Ok(Json(state.platform.monitor.metrics()))
}

async fn seed_fixtures(
    State(state): State<AppState>,
    auth: Auth,
    JsonBody(upload): JsonBody<FixtureUpload>,
) -> ApiResult<Json<SeedSummary>> {
    auth.gate(Route::SeedFixtures)?;
    let summary = state
        .platform
        .directory
        .write()
        .seed(&upload.fixtures)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-request", "fixtures rejected").with_detail(e.to_string()))?;
    tracing::info!(?summary, "fixtures seeded");
    Ok(Json(summary))
}

/// Forwards a raw request envelope to a bound instance of the named service
/// and returns its reply unchanged.
async fn service_envelope(
    State(state): State<AppState>,
    auth: Auth,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    auth.gate(Route::ServiceEnvelope)?;
    let service: ServiceName =
        name.parse().map_err(|_| ApiError::not_found("unknown-service", format!("no service named {name}")))?;
    let unavailable = |detail: String| ApiError::from(Fault::new(FaultCode::ServiceUnavailable, detail));
    let url = state.platform.registry.resolve(service).map_err(|e| unavailable(e.to_string()))?;
    let reply = state.platform.transport.send(&url, body.to_vec()).await.map_err(|e| unavailable(e.to_string()))?;
    Ok(([(CONTENT_TYPE, "application/xml; charset=utf-8")], reply).into_response())
}

pub fn build_router(state: AppState) -> Router {
    Router::new()
        .route("/login", post(login))
        .route("/preauth", post(submit_preauth))
        .route("/claims", get(list_claims))
        .route("/claims/{id}", get(get_claim))
        .route("/claims/{id}/scrutiny", post(scrutinize))
        .route("/claims/{id}/authorize", post(authorize))
        .route("/claims/{id}/payment", post(report_payment))
        .route("/claims/{id}/settle", post(settle))
        .route("/hospitals", get(hospitals))
        .route("/registry/services", get(list_services))
        .route("/registry/services/{id}/state", post(set_service_state))
        .route("/monitor/metrics", get(metrics))
        .route("/admin/fixtures", post(seed_fixtures))
        .route("/services/{name}", post(service_envelope))
        .with_state(state)
}
