use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{Duration, Utc};
use http_body_util::BodyExt;
use medclaim_core::platform::Platform;
use medclaim_core::store::PolicyDirectory;
use medclaim_server::{build_router, AppState, SessionStore, UserDirectory};
use serde_json::{json, Value};
use tower::ServiceExt;

const DEMO: &str = include_str!("../../../fixtures/demo.txt");
const USERS: &str = include_str!("../../../fixtures/users.txt");

struct Harness {
    app: Router,
    platform: Platform,
    clock_offset: Arc<AtomicI64>,
}

fn harness() -> Harness {
    let platform = Platform::builder(PolicyDirectory::from_fixtures(DEMO).unwrap()).build();
    let offset = Arc::new(AtomicI64::new(0));
    let o = Arc::clone(&offset);
    let sessions = SessionStore::with_clock(
        Duration::minutes(30),
        Arc::new(move || Utc::now() + Duration::seconds(o.load(Ordering::SeqCst))),
    );
    let state = AppState::new(platform.clone(), UserDirectory::parse(USERS).unwrap(), sessions);
    Harness { app: build_router(state), platform, clock_offset: offset }
}

impl Harness {
    async fn raw(&self, method: &str, uri: &str, token: Option<&str>, body: Option<String>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, value)
    }

    async fn call(&self, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        self.raw(method, uri, token, body.map(|b| b.to_string())).await
    }

    async fn login(&self, user: &str, secret: &str) -> String {
        let (status, body) = self.call("POST", "/login", None, Some(json!({"username": user, "secret": secret}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["token"].as_str().unwrap().to_string()
    }
}

fn form(uid: &str, hospital: &str, estimate: u64) -> Value {
    json!({
        "uid": uid,
        "hospital_id": hospital,
        "illness_details": "acute appendicitis",
        "proposed_treatment": "laparoscopic appendectomy",
        "estimated_expense": {"amount_minor": estimate, "currency": "INR"},
        "certifying_doctor": {"name": "Dr. Rao", "registration_number": "KMC-2211"}
    })
}

#[tokio::test]
async fn login_issues_role_sessions_and_rejects_bad_credentials() {
    let h = harness();
    let (status, body) =
        h.call("POST", "/login", None, Some(json!({"username": "medi-adjuster", "secret": "medi-pass"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["role"], "tpa");
    assert_eq!(body["token"].as_str().unwrap().len(), 64);
    let wrong = h.call("POST", "/login", None, Some(json!({"username": "medi-adjuster", "secret": "nope"}))).await;
    let unknown = h.call("POST", "/login", None, Some(json!({"username": "ghost", "secret": "medi-pass"}))).await;
    assert_eq!(wrong.0, StatusCode::UNAUTHORIZED);
    assert_eq!(wrong, unknown);
    assert_eq!(h.raw("POST", "/login", None, Some("{not json".into())).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn missing_and_expired_sessions_are_refused() {
    let h = harness();
    assert_eq!(h.call("GET", "/claims", None, None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(h.call("GET", "/claims", Some("forged"), None).await.0, StatusCode::UNAUTHORIZED);
    let token = h.login("asha", "asha-pass").await;
    assert_eq!(h.call("GET", "/claims", Some(&token), None).await.0, StatusCode::OK);
    h.clock_offset.store(31 * 60, Ordering::SeqCst);
    for (method, uri) in [("GET", "/claims"), ("GET", "/hospitals"), ("POST", "/preauth"), ("GET", "/monitor/metrics")] {
        assert_eq!(h.call(method, uri, Some(&token), Some(json!({}))).await.0, StatusCode::UNAUTHORIZED, "{uri}");
    }
}

#[tokio::test]
async fn a_claim_runs_from_submission_to_settlement() {
    let h = harness();
    let desk = h.login("citycare", "citycare-pass").await;
    let tpa = h.login("medi-adjuster", "medi-pass").await;

    let (status, body) = h.call("POST", "/preauth", Some(&desk), Some(form("INS-ACME-0001", "HOSP-001", 90_000))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["state"], "UNDER_SCRUTINY");
    let id = body["claim_id"].as_str().unwrap().to_string();

    let (_, queue) = h.call("GET", "/claims?state=UNDER_SCRUTINY", Some(&tpa), None).await;
    assert_eq!(queue.as_array().unwrap().len(), 1);
    assert_eq!(queue[0]["facts"]["hospital_in_network"], true);
    assert_eq!(queue[0]["allowed_events"], json!(["ScrutinyApprove", "ScrutinyDeny"]));

    let (status, body) =
        h.call("POST", &format!("/claims/{id}/scrutiny"), Some(&tpa), Some(json!({"decision": "approve", "notes": "ok"}))).await;
    assert_eq!((status, body["state"].as_str()), (StatusCode::OK, Some("SCRUTINY_APPROVED")));
    let (status, body) = h.call("POST", &format!("/claims/{id}/authorize"), Some(&tpa), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["authorization"]["authorized_amount"]["amount_minor"], 90_000);
    let pay = json!({"actual_expense": {"amount_minor": 80_000, "currency": "INR"}});
    let (status, body) = h.call("POST", &format!("/claims/{id}/payment"), Some(&desk), Some(pay)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["payment"]["paid_amount"]["amount_minor"], 80_000);
    let (status, body) = h.call("POST", &format!("/claims/{id}/settle"), Some(&tpa), None).await;
    assert_eq!((status, body["state"].as_str()), (StatusCode::OK, Some("SETTLED")));
    assert_eq!(body["settlement"]["refund_amount"]["amount_minor"], 20_000);

    // Acting on a settled claim is a state conflict.
    let (status, body) =
        h.call("POST", &format!("/claims/{id}/scrutiny"), Some(&tpa), Some(json!({"decision": "deny", "notes": "late"}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("wrong-state")));

    let (_, claim) = h.call("GET", &format!("/claims/{id}"), Some(&desk), None).await;
    let timeline: Vec<&str> = claim["history"].as_array().unwrap().iter().map(|e| e["to"].as_str().unwrap()).collect();
    assert_eq!(timeline, ["VERIFIED", "UNDER_SCRUTINY", "SCRUTINY_APPROVED", "CASH_AUTHORIZED", "PAID", "SETTLED"]);
}

#[tokio::test]
async fn unknown_identities_get_the_invalid_id_message() {
    let h = harness();
    let asha = h.login("asha", "asha-pass").await;
    let desk = h.login("lakeview", "lakeview-pass").await;
    let (status, body) = h.call("POST", "/preauth", Some(&desk), Some(form("INS-ZZZ-9999", "HOSP-002", 1000))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["state"], "ID_REJECTED");
    assert_eq!(body["valid"], false);
    assert_eq!(body["message"], "identification number is invalid");
    // A policyholder may only file for their own uid.
    let (status, body) = h.call("POST", "/preauth", Some(&asha), Some(form("INS-BH-0001", "HOSP-002", 1000))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::FORBIDDEN, Some("forbidden")));
}

#[tokio::test]
async fn roles_and_ownership_are_enforced() {
    let h = harness();
    let asha = h.login("asha", "asha-pass").await;
    let vikram = h.login("vikram", "vikram-pass").await;
    let admin = h.login("admin", "admin-pass").await;
    let (_, body) = h.call("POST", "/preauth", Some(&asha), Some(form("INS-ACME-0001", "HOSP-001", 5000))).await;
    let id = body["claim_id"].as_str().unwrap().to_string();

    let (status, _) = h.call("POST", &format!("/claims/{id}/scrutiny"), Some(&asha), Some(json!({"decision": "approve"}))).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(h.call("GET", &format!("/claims/{id}"), Some(&vikram), None).await.0, StatusCode::FORBIDDEN);
    assert_eq!(h.call("GET", &format!("/claims/{id}"), Some(&asha), None).await.0, StatusCode::OK);
    assert_eq!(h.call("GET", "/claims", Some(&vikram), None).await.1, json!([]));
    assert_eq!(h.call("GET", "/claims", Some(&admin), None).await.0, StatusCode::FORBIDDEN);
    assert_eq!(h.call("GET", "/registry/services", Some(&asha), None).await.0, StatusCode::FORBIDDEN);
    assert_eq!(h.call("GET", "/claims/not-a-uuid", Some(&asha), None).await.0, StatusCode::NOT_FOUND);
    let absent = uuid::Uuid::nil();
    assert_eq!(h.call("GET", &format!("/claims/{absent}"), Some(&asha), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.call("GET", "/claims?state=NOPE", Some(&asha), None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn hospitals_are_listed_by_network() {
    let h = harness();
    let asha = h.login("asha", "asha-pass").await;
    let (status, body) = h.call("GET", "/hospitals?tpa=TPA-MEDI", Some(&asha), None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = body.as_array().unwrap().iter().map(|h| h["hospital_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["HOSP-001", "HOSP-002", "HOSP-003"]);
    assert_eq!(h.call("GET", "/hospitals", Some(&asha), None).await.1.as_array().unwrap().len(), 5);
    assert_eq!(h.call("GET", "/hospitals?tpa=TPA-NONE", Some(&asha), None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unbinding_verification_makes_submission_unavailable() {
    let h = harness();
    let admin = h.login("admin", "admin-pass").await;
    let desk = h.login("citycare", "citycare-pass").await;
    let (_, services) = h.call("GET", "/registry/services", Some(&admin), None).await;
    assert_eq!(services.as_array().unwrap().len(), 6);
    let verification = services.as_array().unwrap().iter().find(|s| s["name"] == "Verification").unwrap();
    let sid = verification["service_id"].as_str().unwrap();

    let (status, body) =
        h.call("POST", &format!("/registry/services/{sid}/state"), Some(&admin), Some(json!({"state": "unbound"}))).await;
    assert_eq!((status, body["state"].as_str()), (StatusCode::OK, Some("unbound")));
    let (status, body) = h.call("POST", "/preauth", Some(&desk), Some(form("INS-ACME-0001", "HOSP-001", 5000))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::SERVICE_UNAVAILABLE, Some("service-unavailable")));
    assert!(h.platform.store.is_empty());

    h.call("POST", &format!("/registry/services/{sid}/state"), Some(&admin), Some(json!({"state": "bound"}))).await;
    assert_eq!(h.call("POST", "/preauth", Some(&desk), Some(form("INS-ACME-0001", "HOSP-001", 5000))).await.0, StatusCode::CREATED);

    let bad = h.call("POST", &format!("/registry/services/{}/state", uuid::Uuid::nil()), Some(&admin), Some(json!({"state": "bound"}))).await;
    assert_eq!(bad.0, StatusCode::NOT_FOUND);
    let bad = h.call("POST", &format!("/registry/services/{sid}/state"), Some(&admin), Some(json!({"state": "asleep"}))).await;
    assert_eq!(bad.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn admin_routes_seed_fixtures_and_report_metrics() {
    let h = harness();
    let admin = h.login("admin", "admin-pass").await;
    let extra = "company|ZEN\npolicy|ZEN|INS-ZEN-0001|hospitalization|50000|INR|active\n";
    let (status, body) = h.call("POST", "/admin/fixtures", Some(&admin), Some(json!({"fixtures": extra}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"companies": 1, "policies": 1, "hospitals": 0, "tpas": 0}));
    let (status, _) = h.call("POST", "/admin/fixtures", Some(&admin), Some(json!({"fixtures": "policy|NOPE"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    h.platform.monitor.tick().await;
    let (status, metrics) = h.call("GET", "/monitor/metrics", Some(&admin), None).await;
    assert_eq!(status, StatusCode::OK);
    let services = metrics["services"].as_array().unwrap();
    assert_eq!(services.len(), 6);
    assert!(services.iter().all(|s| s["availability_ratio"] == 1.0 && s["probes_total"] == 1));
}

#[tokio::test]
async fn raw_envelopes_reach_services_through_the_registry() {
    let h = harness();
    let admin = h.login("admin", "admin-pass").await;
    let req = Request::builder()
        .method("POST")
        .uri("/services/Verification")
        .header("authorization", format!("Bearer {admin}"))
        .body(Body::from("<Envelope>broken"))
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let reply = resp.into_body().collect().await.unwrap().to_bytes();
    let env = medclaim_core::envelope::parse(&reply).unwrap();
    match env.body {
        medclaim_core::envelope::Body::Fault(f) => assert_eq!(f.code.as_str(), "schema-violation"),
        other => panic!("{other:?}"),
    }
    assert_eq!(h.platform.security.total(), 1);
    let (status, metrics) = h.call("GET", "/monitor/metrics", Some(&admin), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(metrics["security_events"], 1);
    assert_eq!(h.call("POST", "/services/Nope", Some(&admin), None).await.0, StatusCode::NOT_FOUND);
}
