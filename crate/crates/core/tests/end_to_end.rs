use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use medclaim_core::domain::{CertifyingDoctor, Money, PreAuthRequest, Role};
use medclaim_core::envelope::{Actor, FaultCode, ServiceName};
use medclaim_core::orchestrator::{parse_scenario, run_scenario, scenario_stamper, ClaimState, StepOutcome};
use medclaim_core::platform::Platform;
use medclaim_core::store::{ClaimRepository, PolicyDirectory};

const DEMO: &str = include_str!("../../../fixtures/demo.txt");
const SCENARIO: &str = include_str!("../../../fixtures/demo-scenario.txt");

fn platform() -> Platform {
    Platform::builder(PolicyDirectory::from_fixtures(DEMO).unwrap()).record_requests().build()
}

#[tokio::test]
async fn demo_scenario_ends_in_the_expected_states() {
    let p = platform();
    let report = run_scenario(&parse_scenario(SCENARIO).unwrap(), &p, Arc::new(scenario_stamper())).await;
    let finals: BTreeMap<&str, ClaimState> = report.final_states.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    use ClaimState::*;
    assert_eq!(
        finals,
        BTreeMap::from([("A", Settled), ("B", Settled), ("C", Settled), ("D", IdRejected), ("E", ScrutinyDenied), ("F", ScrutinyDenied)])
    );
    assert_eq!(report.state_counts, BTreeMap::from([(Settled, 3), (IdRejected, 1), (ScrutinyDenied, 2)]));

    let faults: Vec<(&str, &str, FaultCode)> = report
        .trace
        .iter()
        .filter_map(|t| match &t.outcome {
            StepOutcome::Fault { fault } => Some((t.claim_ref.as_str(), t.step.as_str(), fault.code)),
            _ => None,
        })
        .collect();
    assert_eq!(faults, [("B", "Settle", FaultCode::WrongState)]);

    let money = |r: &str| {
        let c = p.store.load(report.claims[r]).unwrap();
        (
            c.authorization.unwrap().authorized_amount.amount_minor,
            c.payment.unwrap().paid_amount.amount_minor,
            c.settlement.unwrap().refund_amount.amount_minor,
        )
    };
    assert_eq!(money("A"), (90_000, 80_000, 20_000));
    assert_eq!(money("B"), (250_000, 250_000, 0));
    assert_eq!(money("C"), (120_000, 120_000, 30_000));
}

#[tokio::test]
async fn replaying_recorded_requests_rebuilds_an_identical_store() {
    let first = platform();
    run_scenario(&parse_scenario(SCENARIO).unwrap(), &first, Arc::new(scenario_stamper())).await;
    let requests = first.recorded_requests();
    assert!(requests.len() > 20);

    let second = platform();
    for r in &requests {
        second.bus.replay(r).await.unwrap();
    }
    assert_eq!(second.store.journal_bytes(), first.store.journal_bytes());
    assert_eq!(second.store.snapshot(), first.store.snapshot());
    assert_eq!(second.recorded_requests(), requests);
}

#[tokio::test]
async fn scenario_runs_are_deterministic() {
    let run = || async {
        let p = platform();
        run_scenario(&parse_scenario(SCENARIO).unwrap(), &p, Arc::new(scenario_stamper())).await;
        (p.store.journal_bytes(), p.recorded_requests())
    };
    assert_eq!(run().await, run().await);
}

fn form(uid: &str) -> PreAuthRequest {
    PreAuthRequest {
        uid: uid.into(),
        hospital_id: "HOSP-001".into(),
        illness_details: "fracture".into(),
        proposed_treatment: "fixation".into(),
        estimated_expense: Money::inr(50_000),
        certifying_doctor: CertifyingDoctor { name: "Dr. Menon".into(), registration_number: "TN-44".into() },
        submitted_at: Utc.with_ymd_and_hms(2024, 5, 1, 9, 0, 0).unwrap(),
    }
}

#[tokio::test]
async fn invalid_identities_are_rejected_with_the_standard_message() {
    let p = platform();
    let wf = p.workflow(Arc::new(scenario_stamper()));
    let desk = Actor::new("desk", Role::Hospital, "HOSP-001");
    for (uid, detail) in [
        ("INS-ZZZ-9999", "no policy database"),
        ("INS-ACME-0003", "lapsed"),
        ("INS-DUP-0001", "BHARAT, CARELINE"),
    ] {
        let out = wf.submit(desk.clone(), form(uid), wf.correlation_id()).await.unwrap();
        assert_eq!(out.state, ClaimState::IdRejected, "{uid}");
        assert!(!out.verification.valid);
        assert_eq!(out.verification.message.as_deref(), Some("identification number is invalid"));
        assert!(out.verification.detail.as_deref().unwrap().contains(detail), "{uid}");
        let stored = p.store.load(out.claim_id).unwrap();
        assert_eq!(stored.state, ClaimState::IdRejected);
        assert!(stored.policy.is_none());
    }
    let ok = wf.submit(desk, form("INS-ACME-0001"), wf.correlation_id()).await.unwrap();
    assert_eq!(ok.state, ClaimState::UnderScrutiny);
    assert_eq!(ok.verification.policy.unwrap().eligible_amount, Money::inr(100_000));
}

#[tokio::test]
async fn submission_needs_both_services_bound() {
    let p = Platform::builder(PolicyDirectory::from_fixtures(DEMO).unwrap())
        .replicas(ServiceName::Verification, 0)
        .build();
    let wf = p.workflow(Arc::new(scenario_stamper()));
    let err = wf
        .submit(Actor::new("desk", Role::Hospital, "HOSP-001"), form("INS-ACME-0001"), wf.correlation_id())
        .await
        .unwrap_err();
    assert_eq!(err.code, FaultCode::ServiceUnavailable);
    assert!(p.store.list(&Default::default()).is_empty());
}
