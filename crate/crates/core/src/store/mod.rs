//! Policy databases, the network-hospital directory and claim persistence.

mod claims;
mod directory;

pub use claims::{decode_record, encode_record, ClaimFilter, ClaimRepository, JournaledClaimStore, StoreError};
pub use directory::{CompanyDatabase, FixtureParseError, IdentityMatch, PolicyDirectory, SeedSummary};
