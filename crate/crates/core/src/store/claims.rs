//! Claim persistence: an in-memory map in front of an append-only journal.
//!
//! Each save appends one line holding the claim's full record as compact
//! XML, tagged with the history length it was saved at. Replaying the lines
//! in order rebuilds the map exactly.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::domain::{Authorization, Claim, HistoryEntry, ScrutinyRecord};
use crate::envelope::{
    payment_fields, policy_element, preauth_fields, read_payment_fields, read_policy, read_preauth,
    read_settlement_fields, PREAUTH_FIELDS,
};
use crate::envelope::schema::{
    canonical_timestamp, canonical_uuid, money_element, Ctx, Fields, Occurs, Rule,
};
use crate::orchestrator::ClaimState;
use crate::xml::{self, Element};

use Occurs::{Many, One, Optional};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("claim {0} not found")]
    ClaimNotFound(Uuid),
    #[error("claim {claim_id} was saved at version {stored}; offered version {offered} does not extend it")]
    VersionConflict { claim_id: Uuid, stored: usize, offered: usize },
    #[error("claim is invalid: {0}")]
    InvalidClaim(String),
    #[error("journal line {line} is corrupt: {detail}")]
    CorruptJournal { line: usize, detail: String },
    #[error("journal i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Every provided field must match.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimFilter {
    pub state: Option<ClaimState>,
    pub uid: Option<String>,
    pub hospital_id: Option<String>,
}

impl ClaimFilter {
    pub fn matches(&self, claim: &Claim) -> bool {
        self.state.is_none_or(|s| s == claim.state)
            && self.uid.as_ref().is_none_or(|u| *u == claim.preauth.uid)
            && self.hospital_id.as_ref().is_none_or(|h| *h == claim.preauth.hospital_id)
    }
}

pub trait ClaimRepository: Send + Sync {
    /// Inserts a new claim or replaces a stored one whose history the
    /// incoming claim extends.
    fn save(&self, claim: &Claim) -> Result<(), StoreError>;
    fn load(&self, claim_id: Uuid) -> Result<Claim, StoreError>;
    /// Matching claims sorted by submission time, then claim id.
    fn list(&self, filter: &ClaimFilter) -> Vec<Claim>;
}

struct Inner {
    claims: BTreeMap<Uuid, Claim>,
    journal: Vec<String>,
    file: Option<File>,
}

pub struct JournaledClaimStore {
    inner: RwLock<Inner>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for JournaledClaimStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JournaledClaimStore")
            .field("path", &self.path)
            .field("claims", &self.inner.read().claims.len())
            .finish()
    }
}

impl JournaledClaimStore {
    pub fn in_memory() -> Self {
        JournaledClaimStore {
            inner: RwLock::new(Inner { claims: BTreeMap::new(), journal: Vec::new(), file: None }),
            path: None,
        }
    }

    /// Opens (creating if needed) a journal file and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut lines = Vec::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                lines.push(line?);
            }
        }
        let store = Self::replay(lines.iter().map(String::as_str))?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut inner = store.inner.into_inner();
        inner.file = Some(file);
        Ok(JournaledClaimStore { inner: RwLock::new(inner), path: Some(path) })
    }

    /// Rebuilds an in-memory store from journal lines.
    pub fn replay<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<Self, StoreError> {
        let store = Self::in_memory();
        for (idx, line) in lines.into_iter().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let (version, claim) = decode_record(line)
                .map_err(|detail| StoreError::CorruptJournal { line: line_no, detail })?;
            if version != claim.version() {
                return Err(StoreError::CorruptJournal {
                    line: line_no,
                    detail: format!("version {version} disagrees with history length {}", claim.version()),
                });
            }
            store.save(&claim).map_err(|e| StoreError::CorruptJournal { line: line_no, detail: e.to_string() })?;
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// The journal lines written so far (including replayed ones).
    pub fn journal(&self) -> Vec<String> {
        self.inner.read().journal.clone()
    }

    /// The journal as file bytes: one record per line.
    pub fn journal_bytes(&self) -> Vec<u8> {
        let inner = self.inner.read();
        let mut out = Vec::new();
        for line in &inner.journal {
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        out
    }

    /// Current records, one per line in claim id order.
    pub fn snapshot(&self) -> String {
        let inner = self.inner.read();
        let mut out = String::new();
        for claim in inner.claims.values() {
            out.push_str(&encode_record(claim));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.inner.read().claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ClaimRepository for JournaledClaimStore {
    fn save(&self, claim: &Claim) -> Result<(), StoreError> {
        let problems = claim.invariant_violations();
        if !problems.is_empty() {
            return Err(StoreError::InvalidClaim(problems.join("; ")));
        }
        let mut inner = self.inner.write();
        if let Some(stored) = inner.claims.get(&claim.claim_id) {
            let extends = claim.history.len() > stored.history.len()
                && claim.history[..stored.history.len()] == stored.history[..];
            if !extends {
                return Err(StoreError::VersionConflict {
                    claim_id: claim.claim_id,
                    stored: stored.version(),
                    offered: claim.version(),
                });
            }
        }
        let line = encode_record(claim);
        if let Some(file) = inner.file.as_mut() {
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        inner.journal.push(line);
        inner.claims.insert(claim.claim_id, claim.clone());
        Ok(())
    }

    fn load(&self, claim_id: Uuid) -> Result<Claim, StoreError> {
        self.inner.read().claims.get(&claim_id).cloned().ok_or(StoreError::ClaimNotFound(claim_id))
    }

    fn list(&self, filter: &ClaimFilter) -> Vec<Claim> {
        let mut out: Vec<Claim> =
            self.inner.read().claims.values().filter(|c| filter.matches(c)).cloned().collect();
        out.sort_by(|a, b| {
            (a.preauth.submitted_at, a.claim_id).cmp(&(b.preauth.submitted_at, b.claim_id))
        });
        out
    }
}

/// One journal line. Line breaks inside text become character references so
/// that every record stays on a single line.
pub fn encode_record(claim: &Claim) -> String {
    let record = Element::node(
        "Transition",
        vec![Element::leaf("Version", claim.version().to_string()), claim_element(claim)],
    );
    record.to_compact_string().replace('\r', "&#13;").replace('\n', "&#10;")
}

/// Parses a journal line back into its version and claim. The line must be
/// exactly what [`encode_record`] would produce for the decoded claim.
pub fn decode_record(line: &str) -> Result<(usize, Claim), String> {
    let doc = xml::parse(line.as_bytes()).map_err(|e| e.to_string())?;
    if doc.declaration.is_some() {
        return Err("journal records carry no XML declaration".into());
    }
    let mut cx = Ctx::default();
    let decoded = read_record(&doc.root, &mut cx);
    if let Some(v) = cx.violations.first() {
        return Err(format!("{} at {}: {}", v.rule, v.path, v.detail));
    }
    let (version, claim) = decoded.ok_or("record could not be read")?;
    if encode_record(&claim) != line {
        return Err("record is not in canonical form".into());
    }
    Ok((version, claim))
}

fn claim_element(c: &Claim) -> Element {
    let mut el = Element::node(
        "Claim",
        vec![
            Element::leaf("ClaimId", canonical_uuid(&c.claim_id)),
            Element::leaf("State", c.state.as_str()),
            Element::node("PreAuth", preauth_fields(&c.preauth)),
        ],
    );
    if let Some(p) = &c.policy {
        el.push(policy_element("Policy", p));
    }
    if let Some(s) = &c.scrutiny {
        el.push(Element::node(
            "Scrutiny",
            vec![
                Element::leaf("Decision", s.decision.as_str()),
                Element::leaf("AdjusterId", &s.adjuster_id),
                Element::leaf("Notes", &s.notes),
                Element::leaf("DecidedAt", canonical_timestamp(&s.decided_at)),
            ],
        ));
    }
    if let Some(a) = &c.authorization {
        el.push(Element::node(
            "Authorization",
            vec![
                money_element("AuthorizedAmount", &a.authorized_amount),
                Element::leaf("AuthorizedAt", canonical_timestamp(&a.authorized_at)),
            ],
        ));
    }
    if let Some(p) = &c.payment {
        el.push(Element::node("Payment", payment_fields(p)));
    }
    if let Some(s) = &c.settlement {
        el.push(Element::node(
            "Settlement",
            vec![
                money_element("RefundAmount", &s.refund_amount),
                Element::leaf("SettledAt", canonical_timestamp(&s.settled_at)),
            ],
        ));
    }
    el.push(Element::node("History", c.history.iter().map(entry_element).collect()));
    el
}

fn entry_element(h: &HistoryEntry) -> Element {
    Element::node(
        "Entry",
        vec![
            Element::leaf("From", h.from.as_str()),
            Element::leaf("Event", h.event.to_string()),
            Element::leaf("To", h.to.as_str()),
            Element::leaf("At", canonical_timestamp(&h.at)),
            Element::leaf("Actor", &h.actor),
        ],
    )
}

fn read_record(root: &Element, cx: &mut Ctx) -> Option<(usize, Claim)> {
    let path = format!("/{}", root.name);
    if root.name != "Transition" {
        cx.push(&path, Rule::UnexpectedRoot, "expected <Transition>");
        return None;
    }
    let f = Fields::read(root, &path, &[("Version", One), ("Claim", One)], cx);
    let version = f.parsed::<usize>("Version", Rule::InvalidValue, cx);
    let claim = f.element("Claim").and_then(|(el, path)| read_claim(el, &path, cx));
    Some((version?, claim?))
}

fn read_claim(el: &Element, path: &str, cx: &mut Ctx) -> Option<Claim> {
    let f = Fields::read(
        el,
        path,
        &[
            ("ClaimId", One),
            ("State", One),
            ("PreAuth", One),
            ("Policy", Optional),
            ("Scrutiny", Optional),
            ("Authorization", Optional),
            ("Payment", Optional),
            ("Settlement", Optional),
            ("History", One),
        ],
        cx,
    );
    let claim_id = f.uuid("ClaimId", cx);
    let state = f.parsed::<ClaimState>("State", Rule::InvalidValue, cx);
    let preauth = f.element("PreAuth").and_then(|(el, path)| {
        let pf = Fields::read(el, &path, PREAUTH_FIELDS, cx);
        read_preauth(&pf, cx)
    });
    let policy = optional(f.element("Policy"), |el, path| read_policy(el, &path, cx))?;
    let scrutiny = optional(f.element("Scrutiny"), |el, path| {
        let sf = Fields::read(
            el,
            &path,
            &[("Decision", One), ("AdjusterId", One), ("Notes", One), ("DecidedAt", One)],
            cx,
        );
        let decision = sf.parsed("Decision", Rule::InvalidValue, cx);
        let adjuster_id = sf.text("AdjusterId", cx);
        let notes = sf.text("Notes", cx);
        let decided_at = sf.timestamp("DecidedAt", cx);
        Some(ScrutinyRecord { decision: decision?, adjuster_id: adjuster_id?, notes: notes?, decided_at: decided_at? })
    })?;
    let authorization = optional(f.element("Authorization"), |el, path| {
        let af = Fields::read(el, &path, &[("AuthorizedAmount", One), ("AuthorizedAt", One)], cx);
        let amount = af.money("AuthorizedAmount", cx);
        let at = af.timestamp("AuthorizedAt", cx);
        Some(Authorization { authorized_amount: amount?, authorized_at: at? })
    })?;
    let payment = optional(f.element("Payment"), |el, path| {
        let pf = Fields::read(
            el,
            &path,
            &[("PaidAmount", One), ("ActualExpense", One), ("PayeeHospitalId", One), ("PaidAt", One)],
            cx,
        );
        read_payment_fields(&pf, cx)
    })?;
    let settlement = optional(f.element("Settlement"), |el, path| {
        let sf = Fields::read(el, &path, &[("RefundAmount", One), ("SettledAt", One)], cx);
        read_settlement_fields(&sf, cx)
    })?;
    let history = f.element("History").and_then(|(el, path)| {
        let hf = Fields::read(el, &path, &[("Entry", Many)], cx);
        let entry_path = hf.child_path("Entry");
        let entries: Vec<Option<HistoryEntry>> =
            hf.all("Entry").iter().map(|e| read_entry(e, &entry_path, cx)).collect();
        entries.into_iter().collect::<Option<Vec<_>>>()
    });
    Some(Claim {
        claim_id: claim_id?,
        state: state?,
        preauth: preauth?,
        policy,
        scrutiny,
        authorization,
        payment,
        settlement,
        history: history?,
    })
}

fn read_entry(el: &Element, path: &str, cx: &mut Ctx) -> Option<HistoryEntry> {
    let f = Fields::read(el, path, &[("From", One), ("Event", One), ("To", One), ("At", One), ("Actor", One)], cx);
    let from = f.parsed("From", Rule::InvalidValue, cx);
    let event = f.parsed("Event", Rule::InvalidValue, cx);
    let to = f.parsed("To", Rule::InvalidValue, cx);
    let at: Option<DateTime<Utc>> = f.timestamp("At", cx);
    let actor = f.text("Actor", cx);
    Some(HistoryEntry { from: from?, event: event?, to: to?, at: at?, actor: actor? })
}

/// Reads an optional section. The outer `None` means the section was present
/// but unreadable.
fn optional<T>(
    el: Option<(&Element, String)>,
    read: impl FnOnce(&Element, String) -> Option<T>,
) -> Option<Option<T>> {
    match el {
        None => Some(None),
        Some((el, path)) => read(el, path).map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CertifyingDoctor, Money, PolicyRecord, PolicyStatus, PreAuthRequest};
    use crate::orchestrator::{advance, ClaimEvent};
    use chrono::TimeZone;

    fn at(sec: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, sec).unwrap()
    }

    fn preauth(uid: &str, hospital: &str, sec: u32) -> PreAuthRequest {
        PreAuthRequest {
            uid: uid.into(),
            hospital_id: hospital.into(),
            illness_details: "fracture, left femur".into(),
            proposed_treatment: "ORIF & <fixation>".into(),
            estimated_expense: Money::inr(50_000),
            certifying_doctor: CertifyingDoctor { name: "Dr. Rao".into(), registration_number: "KMC-1".into() },
            submitted_at: at(sec),
        }
    }

    fn policy(uid: &str) -> PolicyRecord {
        PolicyRecord {
            uid: uid.into(),
            company_id: "ACME".into(),
            policy_type: "hospitalization".into(),
            eligible_amount: Money::inr(100_000),
            status: PolicyStatus::Active,
        }
    }

    fn verified(id: u128, uid: &str, sec: u32) -> Claim {
        let claim = Claim::new(Uuid::from_u128(id), preauth(uid, "HOSP-001", sec));
        advance(&claim, ClaimEvent::VerifyOk(policy(uid)), at(sec + 1), "verification").unwrap().0
    }

    #[test]
    fn record_roundtrip_keeps_special_text_on_one_line() {
        let claim = verified(1, "U1", 0);
        let line = encode_record(&claim);
        assert!(!line.contains('\n'));
        let (version, back) = decode_record(&line).unwrap();
        assert_eq!(version, claim.version());
        assert_eq!(back, claim);
    }

    #[test]
    fn save_load_and_stale_write() {
        let store = JournaledClaimStore::in_memory();
        let fresh = Claim::new(Uuid::from_u128(7), preauth("U1", "HOSP-001", 0));
        store.save(&fresh).unwrap();
        assert_eq!(store.load(fresh.claim_id).unwrap(), fresh);

        let ahead = advance(&fresh, ClaimEvent::VerifyOk(policy("U1")), at(1), "v").unwrap().0;
        store.save(&ahead).unwrap();
        // A writer still holding `fresh` loses.
        let stale = advance(&fresh, ClaimEvent::VerifyFail, at(2), "v").unwrap().0;
        assert!(matches!(store.save(&stale), Err(StoreError::VersionConflict { stored: 2, offered: 1, .. })));
        assert!(matches!(store.save(&fresh), Err(StoreError::VersionConflict { .. })));
        assert!(matches!(store.load(Uuid::nil()), Err(StoreError::ClaimNotFound(_))));
    }

    #[test]
    fn list_filters_and_orders() {
        let store = JournaledClaimStore::in_memory();
        store.save(&verified(3, "U1", 5)).unwrap();
        store.save(&verified(2, "U2", 5)).unwrap();
        store.save(&Claim::new(Uuid::from_u128(1), preauth("U1", "HOSP-002", 9))).unwrap();
        let ids = |f: ClaimFilter| store.list(&f).iter().map(|c| c.claim_id.as_u128()).collect::<Vec<_>>();
        assert_eq!(ids(ClaimFilter::default()), vec![2, 3, 1]);
        assert_eq!(ids(ClaimFilter { uid: Some("U1".into()), ..Default::default() }), vec![3, 1]);
        assert_eq!(ids(ClaimFilter { state: Some(ClaimState::UnderScrutiny), ..Default::default() }), vec![2, 3]);
        assert_eq!(
            ids(ClaimFilter { uid: Some("U1".into()), hospital_id: Some("HOSP-002".into()), ..Default::default() }),
            vec![1]
        );
    }

    #[test]
    fn file_journal_replays_to_identical_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("claims.journal");
        let snapshot;
        let bytes;
        {
            let store = JournaledClaimStore::open(&path).unwrap();
            let claim = Claim::new(Uuid::from_u128(9), preauth("U9", "HOSP-001", 0));
            store.save(&claim).unwrap();
            store.save(&advance(&claim, ClaimEvent::VerifyFail, at(3), "v").unwrap().0).unwrap();
            store.save(&verified(4, "U4", 1)).unwrap();
            snapshot = store.snapshot();
            bytes = store.journal_bytes();
        }
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        let reopened = JournaledClaimStore::open(&path).unwrap();
        assert_eq!(reopened.snapshot(), snapshot);
        assert_eq!(reopened.journal_bytes(), bytes);
    }

    #[test]
    fn corrupt_lines_are_reported() {
        let good = encode_record(&verified(1, "U1", 0));
        let err = JournaledClaimStore::replay([good.as_str(), "<Transition>"]).unwrap_err();
        assert!(matches!(err, StoreError::CorruptJournal { line: 2, .. }));
        let bumped = good.replacen("<Version>2</Version>", "<Version>5</Version>", 1);
        assert!(matches!(JournaledClaimStore::replay([bumped.as_str()]), Err(StoreError::CorruptJournal { line: 1, .. })));
    }
}
