//! In-memory bearer sessions with a fixed lifetime.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;

use crate::users::Principal;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub token: String,
    pub principal: Principal,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct SessionStore {
    ttl: Duration,
    clock: Clock,
    sessions: RwLock<HashMap<String, Session>>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore")
            .field("ttl", &self.ttl)
            .field("sessions", &self.sessions.read().len())
            .finish()
    }
}

impl SessionStore {
    /// `ttl` must be positive.
    pub fn new(ttl: Duration) -> Self {
        Self::with_clock(ttl, Arc::new(Utc::now))
    }

    pub fn with_clock(ttl: Duration, clock: Clock) -> Self {
        assert!(ttl > Duration::zero(), "session lifetime must be positive");
        SessionStore { ttl, clock, sessions: RwLock::new(HashMap::new()) }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Opens a session; the token is 256 random bits, hex encoded.
    pub fn issue(&self, principal: Principal) -> Session {
        let token = hex::encode(rand::random::<[u8; 32]>());
        let issued_at = (self.clock)();
        let session = Session { token: token.clone(), principal, issued_at, expires_at: issued_at + self.ttl };
        let mut sessions = self.sessions.write();
        sessions.retain(|_, s| s.expires_at > issued_at);
        sessions.insert(token, session.clone());
        session
    }

    /// The principal behind a live token. Expired sessions are dropped.
    pub fn principal(&self, token: &str) -> Option<Principal> {
        let now = (self.clock)();
        {
            let sessions = self.sessions.read();
            match sessions.get(token) {
                None => return None,
                Some(s) if s.expires_at > now => return Some(s.principal.clone()),
                Some(_) => {}
            }
        }
        self.sessions.write().remove(token);
        None
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use medclaim_core::domain::Role;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn principal() -> Principal {
        Principal { subject_id: "asha".into(), role: Role::Policyholder, display_name: "Asha".into(), affiliation: "INS-1".into() }
    }

    #[test]
    fn sessions_expire() {
        let offset = Arc::new(AtomicI64::new(0));
        let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let o = Arc::clone(&offset);
        let store = SessionStore::with_clock(
            Duration::minutes(30),
            Arc::new(move || start + Duration::seconds(o.load(Ordering::SeqCst))),
        );
        let s = store.issue(principal());
        assert!(s.expires_at > s.issued_at);
        assert_eq!(s.token.len(), 64);
        assert_eq!(store.principal(&s.token), Some(principal()));
        offset.store(30 * 60 - 1, Ordering::SeqCst);
        assert!(store.principal(&s.token).is_some());
        offset.store(30 * 60, Ordering::SeqCst);
        assert!(store.principal(&s.token).is_none());
        assert!(store.is_empty());
        assert!(store.principal("not-a-token").is_none());
    }

    #[test]
    fn tokens_are_unique() {
        let store = SessionStore::new(Duration::minutes(5));
        let tokens: std::collections::HashSet<String> = (0..100).map(|_| store.issue(principal()).token).collect();
        assert_eq!(tokens.len(), 100);
    }
}
