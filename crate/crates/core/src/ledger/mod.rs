//! World state, its digest, and the persistent store.

pub mod state;
pub mod store;

pub use state::{CommitRecord, LedgerState, Mark, ModuleRecord};
pub use store::{CrashPoint, LedgerError, Store};

/// Digest of the empty state.
pub fn genesis_digest() -> [u8; 32] {
    LedgerState::new().digest()
}
