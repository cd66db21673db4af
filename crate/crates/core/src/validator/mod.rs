//! Deployment-time verification of bytecode.
//!
//! Nothing produced by the compiler is trusted: types, slot usage,
//! capabilities, visibility, effects and risks are re-derived from the
//! instruction trees, and a gas bound is computed for every entry point.

pub mod check;
pub mod gas;

use std::fmt;

use thiserror::Error;

use crate::bytecode::{self, BytecodeModule};
use crate::registry::Registry;
use crate::types::ModuleAddress;

pub use gas::GasBounds;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RejectCode {
    Decode,
    Type,
    Linear,
    Cap,
    Effect,
    Risk,
    DepMissing,
    DefaultDup,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::Decode => "V-DECODE",
            RejectCode::Type => "V-TYPE",
            RejectCode::Linear => "V-LINEAR",
            RejectCode::Cap => "V-CAP",
            RejectCode::Effect => "V-EFFECT",
            RejectCode::Risk => "V-RISK",
            RejectCode::DepMissing => "V-DEP-MISSING",
            RejectCode::DefaultDup => "V-DEFAULT-DUP",
        }
    }
}

impl fmt::Display for RejectCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("{code} {detail}")]
pub struct Rejection {
    pub code: RejectCode,
    pub detail: String,
}

impl Rejection {
    pub fn new(code: RejectCode, detail: impl Into<String>) -> Self {
        Rejection { code, detail: detail.into() }
    }
}

/// A module that passed validation. The interpreter runs nothing else.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct VerifiedModule {
    pub address: ModuleAddress,
    pub module: BytecodeModule,
    pub bounds: GasBounds,
}

/// Decode, verify and bound a module against the deployed universe.
pub fn validate(bytes: &[u8], registry: &dyn Registry) -> Result<VerifiedModule, Rejection> {
    let module = bytecode::decode(bytes).map_err(|e| Rejection::new(RejectCode::Decode, e.to_string()))?;
    let address = bytecode::address_of(bytes);
    let bounds = validate_module(&module, registry)?;
    Ok(VerifiedModule { address, module, bounds })
}

/// Verification of an already decoded module.
pub fn validate_module(module: &BytecodeModule, registry: &dyn Registry) -> Result<GasBounds, Rejection> {
    check::check_module(module, registry)?;
    Ok(gas::bounds(module, registry))
}

/// `OK <address> fn=<name> bound=<n>` per function, then vals and init.
pub fn report(vm: &VerifiedModule) -> Vec<String> {
    let a = vm.address.to_hex();
    let mut out = Vec::new();
    for (f, b) in vm.module.functions.iter().zip(&vm.bounds.functions) {
        out.push(format!("OK {a} fn={} bound={b}", f.name));
    }
    for (v, b) in vm.module.vals.iter().zip(&vm.bounds.vals) {
        out.push(format!("OK {a} val={} bound={b}", v.name));
    }
    if let Some(b) = vm.bounds.init {
        out.push(format!("OK {a} init bound={b}"));
    }
    out
}

pub fn reject_line(r: &Rejection) -> String {
    format!("REJECT {} {}", r.code, r.detail)
}
