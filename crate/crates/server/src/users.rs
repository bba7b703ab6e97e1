//! The user fixture and credential checks.
//!
//! ```text
//! user|USERNAME|SECRET|ROLE|AFFILIATION|DISPLAY_NAME
//! ```

use std::collections::BTreeMap;

use medclaim_core::domain::Role;
use medclaim_core::envelope::Actor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("users line {line}: {message}")]
pub struct UsersParseError {
    pub line: usize,
    pub message: String,
}

/// An authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub subject_id: String,
    pub role: Role,
    pub display_name: String,
    /// The uid, hospital id or TPA id the caller acts for.
    pub affiliation: String,
}

impl Principal {
    pub fn actor(&self) -> Actor {
        Actor::new(&self.subject_id, self.role, &self.affiliation)
    }
}

#[derive(Debug, Clone)]
struct UserRecord {
    digest: [u8; 32],
    principal: Principal,
}

fn digest(secret: &str) -> [u8; 32] {
    Sha256::digest(secret.as_bytes()).into()
}

#[derive(Debug, Clone, Default)]
pub struct UserDirectory {
    users: BTreeMap<String, UserRecord>,
}

impl UserDirectory {
    pub fn parse(text: &str) -> Result<Self, UsersParseError> {
        let mut users = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| UsersParseError { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split('|').map(str::trim).collect();
            if cols[0] != "user" {
                return Err(err(format!("unknown record kind '{}'", cols[0])));
            }
            if cols.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", cols.len())));
            }
            let (name, secret, role, affiliation, display) = (cols[1], cols[2], cols[3], cols[4], cols[5]);
            if name.is_empty() || secret.is_empty() {
                return Err(err("username and secret must not be empty".into()));
            }
            let role: Role = role.parse().map_err(|_| err(format!("unknown role '{role}'")))?;
            if role != Role::Admin && affiliation.is_empty() {
                return Err(err(format!("{role} users need an affiliation")));
            }
            let principal = Principal {
                subject_id: name.to_string(),
                role,
                display_name: if display.is_empty() { name.to_string() } else { display.to_string() },
                affiliation: affiliation.to_string(),
            };
            let record = UserRecord { digest: digest(secret), principal };
            if users.insert(name.to_string(), record).is_some() {
                return Err(err(format!("duplicate user '{name}'")));
            }
        }
        Ok(UserDirectory { users })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Checks a username and secret. Unknown users and wrong secrets take
    /// the same path and give the same answer.
    pub fn authenticate(&self, username: &str, secret: &str) -> Option<Principal> {
        let offered = digest(secret);
        let record = self.users.get(username);
        let expected = record.map(|r| r.digest).unwrap_or([0u8; 32]);
        let matches: bool = offered.ct_eq(&expected).into();
        match record {
            Some(r) if matches => Some(r.principal.clone()),
            _ => None,
        }
    }
}
