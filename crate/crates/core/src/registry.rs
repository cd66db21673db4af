//! Read-only view of the deployed universe, shared by the elaborator, the
//! validator and the interpreter.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::bytecode::{self, BytecodeModule};
use crate::types::ModuleAddress;
use crate::validator::{GasBounds, VerifiedModule};

pub trait Registry {
    fn module(&self, addr: &ModuleAddress) -> Option<&BytecodeModule>;
    fn bounds(&self, addr: &ModuleAddress) -> Option<&GasBounds>;
    /// Address currently bound to a module name.
    fn resolve_name(&self, name: &str) -> Option<ModuleAddress>;
    /// Every name binding, sorted by name.
    fn module_names(&self) -> Vec<(String, ModuleAddress)>;
}

/// An in-memory registry; the ledger keeps one of these as part of its
/// state.
#[derive(Clone, Default, Debug)]
pub struct MemoryRegistry {
    pub modules: BTreeMap<ModuleAddress, Deployed>,
    pub names: BTreeMap<String, ModuleAddress>,
}

#[derive(Clone, Debug)]
pub struct Deployed {
    pub module: Arc<BytecodeModule>,
    pub bytes: Arc<Vec<u8>>,
    pub bounds: GasBounds,
    /// Deployment order, starting at zero.
    pub seq: u64,
}

impl MemoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, addr: &ModuleAddress) -> bool {
        self.modules.contains_key(addr)
    }

    /// Register a verified module and bind its name. Returns the previous
    /// name binding.
    pub fn insert(&mut self, vm: &VerifiedModule, bytes: Vec<u8>) -> Option<ModuleAddress> {
        let seq = self.modules.len() as u64;
        self.modules.insert(
            vm.address,
            Deployed { module: Arc::new(vm.module.clone()), bytes: Arc::new(bytes), bounds: vm.bounds.clone(), seq },
        );
        self.names.insert(vm.module.name.clone(), vm.address)
    }

    pub fn remove(&mut self, addr: &ModuleAddress) {
        self.modules.remove(addr);
    }

    pub fn deployed(&self, addr: &ModuleAddress) -> Option<&Deployed> {
        self.modules.get(addr)
    }

    /// Decode and register without validation; used when replaying a
    /// trusted store.
    pub fn restore(&mut self, addr: ModuleAddress, bytes: Vec<u8>, bounds: GasBounds, seq: u64) -> Result<(), bytecode::DecodeError> {
        let module = bytecode::decode(&bytes)?;
        self.modules.insert(addr, Deployed { module: Arc::new(module), bytes: Arc::new(bytes), bounds, seq });
        Ok(())
    }
}

impl Registry for MemoryRegistry {
    fn module(&self, addr: &ModuleAddress) -> Option<&BytecodeModule> {
        self.modules.get(addr).map(|d| d.module.as_ref())
    }

    fn bounds(&self, addr: &ModuleAddress) -> Option<&GasBounds> {
        self.modules.get(addr).map(|d| &d.bounds)
    }

    fn resolve_name(&self, name: &str) -> Option<ModuleAddress> {
        self.names.get(name).copied()
    }

    fn module_names(&self) -> Vec<(String, ModuleAddress)> {
        self.names.iter().map(|(n, a)| (n.clone(), *a)).collect()
    }
}
