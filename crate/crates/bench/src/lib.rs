//! Shared fixtures for the benchmarks.

use mandala_core::corpus::{self, compile_source, LISTINGS};
use mandala_core::registry::MemoryRegistry;
use mandala_core::runtime::Runtime;
use mandala_core::validator;

/// Compiled listings, each against the registry of the ones before it,
/// plus that registry.
pub fn compiled() -> Vec<(Vec<u8>, MemoryRegistry)> {
    let mut reg = MemoryRegistry::new();
    let mut out = Vec::new();
    for (_, src) in LISTINGS {
        let (_, bytes) = compile_source(src, &reg).expect("listing compiles");
        out.push((bytes.clone(), reg.clone()));
        let vm = validator::validate(&bytes, &reg).expect("listing validates");
        reg.insert(&vm, bytes);
    }
    out
}

/// A runtime with the listings deployed by alice.
pub fn deployed() -> Runtime {
    let mut rt = Runtime::new();
    corpus::deploy_listings(&mut rt, "alice").expect("listings deploy");
    rt
}
