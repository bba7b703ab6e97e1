//! Insurer policy databases and the TPA network-hospital directory.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Currency, Hospital, Money, PolicyRecord, PolicyStatus, Tpa};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fixture line {line}: {message}")]
pub struct FixtureParseError {
    pub line: usize,
    pub message: String,
}

/// One insurer's policy database.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompanyDatabase {
    pub company_id: String,
    pub records: BTreeMap<String, PolicyRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub companies: usize,
    pub policies: usize,
    pub hospitals: usize,
    pub tpas: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdentityMatch {
    Matched(PolicyRecord),
    /// `lapsed` is set when the uid exists but only on lapsed policies.
    NotFound { lapsed: bool },
    Ambiguous(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyDirectory {
    companies: BTreeMap<String, CompanyDatabase>,
    tpas: BTreeMap<String, Tpa>,
    hospitals: BTreeMap<String, Hospital>,
}

impl PolicyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixtures(text: &str) -> Result<Self, FixtureParseError> {
        let mut dir = PolicyDirectory::new();
        dir.seed(text)?;
        Ok(dir)
    }

    /// Loads a fixture file. Seeding the same file twice changes nothing.
    pub fn seed(&mut self, text: &str) -> Result<SeedSummary, FixtureParseError> {
        let parsed = parse_fixtures(text)?;
        let summary = SeedSummary {
            companies: parsed.companies.len(),
            policies: parsed.companies.values().map(|c| c.records.len()).sum(),
            hospitals: parsed.hospitals.len(),
            tpas: parsed.tpas.len(),
        };
        for (id, db) in parsed.companies {
            self.companies
                .entry(id.clone())
                .or_insert_with(|| CompanyDatabase { company_id: id, records: BTreeMap::new() })
                .records
                .extend(db.records);
        }
        self.tpas.extend(parsed.tpas);
        self.hospitals.extend(parsed.hospitals);
        Ok(summary)
    }

    pub fn summary(&self) -> SeedSummary {
        SeedSummary {
            companies: self.companies.len(),
            policies: self.companies.values().map(|c| c.records.len()).sum(),
            hospitals: self.hospitals.len(),
            tpas: self.tpas.len(),
        }
    }

    /// Checks every company database, in company id order, for `uid`.
    pub fn lookup_identity(&self, uid: &str) -> IdentityMatch {
        let mut active = Vec::new();
        let mut lapsed = false;
        for db in self.companies.values() {
            if let Some(record) = db.records.get(uid) {
                match record.status {
                    PolicyStatus::Active => active.push(record),
                    PolicyStatus::Lapsed => lapsed = true,
                }
            }
        }
        match active.as_slice() {
            [] => IdentityMatch::NotFound { lapsed },
            [one] => IdentityMatch::Matched((*one).clone()),
            many => IdentityMatch::Ambiguous(many.iter().map(|r| r.company_id.clone()).collect()),
        }
    }

    pub fn network_hospitals(&self, tpa_id: &str) -> Vec<Hospital> {
        self.hospitals.values().filter(|h| h.in_network(tpa_id)).cloned().collect()
    }

    pub fn hospital(&self, hospital_id: &str) -> Option<&Hospital> {
        self.hospitals.get(hospital_id)
    }

    pub fn hospitals(&self) -> impl Iterator<Item = &Hospital> {
        self.hospitals.values()
    }

    pub fn tpas(&self) -> impl Iterator<Item = &Tpa> {
        self.tpas.values()
    }

    pub fn company(&self, company_id: &str) -> Option<&CompanyDatabase> {
        self.companies.get(company_id)
    }
}

struct Parsed {
    companies: BTreeMap<String, CompanyDatabase>,
    tpas: BTreeMap<String, Tpa>,
    hospitals: BTreeMap<String, Hospital>,
}

fn parse_fixtures(text: &str) -> Result<Parsed, FixtureParseError> {
    let mut out = Parsed { companies: BTreeMap::new(), tpas: BTreeMap::new(), hospitals: BTreeMap::new() };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| FixtureParseError { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
        if let Some(empty) = fields.iter().position(|f| f.is_empty()) {
            return Err(err(format!("field {} is empty", empty + 1)));
        }
        match fields.as_slice() {
            ["company", id] => {
                if out.companies.contains_key(*id) {
                    return Err(err(format!("company '{id}' declared twice")));
                }
                out.companies.insert(
                    id.to_string(),
                    CompanyDatabase { company_id: id.to_string(), records: BTreeMap::new() },
                );
            }
            ["policy", company, uid, policy_type, amount, currency, status] => {
                let amount: u64 = amount
                    .parse()
                    .map_err(|_| err(format!("'{amount}' is not an amount in minor units")))?;
                if amount == 0 {
                    return Err(err("eligible amount must be positive".into()));
                }
                let currency = Currency::new(currency).map_err(err)?;
                let status: PolicyStatus = status.parse().map_err(err)?;
                let db = out
                    .companies
                    .get_mut(*company)
                    .ok_or_else(|| err(format!("company '{company}' is not declared")))?;
                if db.records.contains_key(*uid) {
                    return Err(err(format!("uid '{uid}' appears twice in company '{company}'")));
                }
                db.records.insert(
                    uid.to_string(),
                    PolicyRecord {
                        uid: uid.to_string(),
                        company_id: company.to_string(),
                        policy_type: policy_type.to_string(),
                        eligible_amount: Money::new(amount, currency),
                        status,
                    },
                );
            }
            ["tpa", id, name] => {
                if out.tpas.contains_key(*id) {
                    return Err(err(format!("tpa '{id}' declared twice")));
                }
                out.tpas.insert(id.to_string(), Tpa { tpa_id: id.to_string(), name: name.to_string() });
            }
            ["hospital", id, name, networks] => {
                if out.hospitals.contains_key(*id) {
                    return Err(err(format!("hospital '{id}' declared twice")));
                }
                let mut tpa_networks = BTreeSet::new();
                for tpa in networks.split(',').map(str::trim) {
                    if !out.tpas.contains_key(tpa) {
                        return Err(err(format!("tpa '{tpa}' is not declared")));
                    }
                    tpa_networks.insert(tpa.to_string());
                }
                out.hospitals.insert(
                    id.to_string(),
                    Hospital { hospital_id: id.to_string(), name: name.to_string(), tpa_networks },
                );
            }
            [kind, ..] => return Err(err(format!("unrecognised record '{kind}' or wrong field count"))),
            [] => unreachable!("split yields at least one field"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
# two insurers sharing one uid
company|A
company|B
policy|A|U1|hospitalization|100000|INR|active
policy|B|U1|surgical|50000|INR|active
policy|A|U2|surgical|70000|INR|lapsed
policy|B|U3|surgical|70000|INR|active
policy|A|U3|surgical|70000|INR|lapsed
tpa|T1|First TPA
tpa|T2|Second TPA
hospital|H2|Two|T1
hospital|H1|One|T1,T2
hospital|H3|Three|T2
";

    #[test]
    fn identity_lookup_outcomes() {
        let dir = PolicyDirectory::from_fixtures(FIXTURE).unwrap();
        assert_eq!(dir.lookup_identity("U1"), IdentityMatch::Ambiguous(vec!["A".into(), "B".into()]));
        assert_eq!(dir.lookup_identity("U2"), IdentityMatch::NotFound { lapsed: true });
        assert_eq!(dir.lookup_identity("nobody"), IdentityMatch::NotFound { lapsed: false });
        match dir.lookup_identity("U3") {
            IdentityMatch::Matched(r) => assert_eq!(r.company_id, "B"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn network_hospitals_are_sorted_and_shared() {
        let dir = PolicyDirectory::from_fixtures(FIXTURE).unwrap();
        let ids = |tpa| dir.network_hospitals(tpa).into_iter().map(|h| h.hospital_id).collect::<Vec<_>>();
        assert_eq!(ids("T1"), vec!["H1", "H2"]);
        assert_eq!(ids("T2"), vec!["H1", "H3"]);
        assert!(ids("T9").is_empty());
    }

    #[test]
    fn seeding_is_idempotent() {
        let mut dir = PolicyDirectory::new();
        let first = dir.seed(FIXTURE).unwrap();
        let snapshot = dir.clone();
        let second = dir.seed(FIXTURE).unwrap();
        assert_eq!(first, second);
        assert_eq!(dir, snapshot);
        assert_eq!(first, SeedSummary { companies: 2, policies: 5, hospitals: 3, tpas: 2 });
    }

    #[test]
    fn empty_fixture_gives_zero_summary() {
        let mut dir = PolicyDirectory::new();
        assert_eq!(dir.seed("").unwrap(), SeedSummary::default());
        assert_eq!(dir.seed("# only a comment\n\n").unwrap(), SeedSummary::default());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dup = "company|A\npolicy|A|U1|x|1|INR|active\npolicy|A|U1|y|2|INR|active\n";
        assert_eq!(PolicyDirectory::from_fixtures(dup).unwrap_err().line, 3);
        assert_eq!(PolicyDirectory::from_fixtures("policy|Z|U|x|1|INR|active").unwrap_err().line, 1);
        assert_eq!(PolicyDirectory::from_fixtures("company|A\nbogus|1").unwrap_err().line, 2);
        assert_eq!(PolicyDirectory::from_fixtures("company|A\npolicy|A|U|x|0|INR|active").unwrap_err().line, 2);
        assert_eq!(PolicyDirectory::from_fixtures("hospital|H|N|T9").unwrap_err().line, 1);
        assert_eq!(PolicyDirectory::from_fixtures("company|A\npolicy|A|U|x|5|INR|gone").unwrap_err().line, 2);
    }
}
