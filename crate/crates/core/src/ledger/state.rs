//! In-memory world state with an undo journal.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::bytecode::codec::{DecodeError, Reader, Writer};
use crate::registry::{MemoryRegistry, Registry};
use crate::runtime::value::{Hash32, Value};
use crate::types::ModuleAddress;
use crate::validator::{GasBounds, VerifiedModule};

pub type ValKey = (ModuleAddress, u16);
/// Absolute type reference, as (module, type index).
pub type TypeKey = (ModuleAddress, u16);

#[derive(Clone, Debug)]
enum Undo {
    Cell(Hash32, Option<Value>),
    Val(ValKey, Option<Value>),
    Module { address: ModuleAddress, name: String, prev_binding: Option<ModuleAddress>, defaults: Vec<TypeKey> },
}

/// Position in the journal; rolling back to it undoes later writes.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Mark(usize);

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ModuleRecord {
    pub address: ModuleAddress,
    pub bytes: Vec<u8>,
    pub bounds: GasBounds,
}

/// Net effect of one committed transaction.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct CommitRecord {
    /// Transaction counter after the commit.
    pub counter: u64,
    pub modules: Vec<ModuleRecord>,
    pub cells: Vec<(Hash32, Value)>,
    pub vals: Vec<(ValKey, Value)>,
}

#[derive(Clone, Debug, Default)]
pub struct LedgerState {
    pub registry: MemoryRegistry,
    cells: BTreeMap<Hash32, Value>,
    vals: BTreeMap<ValKey, Value>,
    defaults: BTreeMap<TypeKey, (ModuleAddress, u16)>,
    tx_counter: u64,
    journal: Option<Vec<Undo>>,
}

impl LedgerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tx_counter(&self) -> u64 {
        self.tx_counter
    }

    pub fn cell(&self, key: &Hash32) -> Option<&Value> {
        self.cells.get(key)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Hash32, &Value)> {
        self.cells.iter()
    }

    pub fn val(&self, key: &ValKey) -> Option<&Value> {
        self.vals.get(key)
    }

    pub fn default_for(&self, ty: &TypeKey) -> Option<(ModuleAddress, u16)> {
        self.defaults.get(ty).copied()
    }

    pub fn in_transaction(&self) -> bool {
        self.journal.is_some()
    }

    pub fn begin(&mut self) {
        assert!(self.journal.is_none(), "nested top-level transaction");
        self.journal = Some(Vec::new());
    }

    fn log(&mut self, u: Undo) {
        self.journal.as_mut().expect("write outside a transaction").push(u);
    }

    pub fn mark(&self) -> Mark {
        Mark(self.journal.as_ref().map_or(0, Vec::len))
    }

    pub fn write_cell(&mut self, key: Hash32, v: Value) {
        assert!(v.caps.has_persist(), "storing a value without Persist");
        let prev = self.cells.insert(key, v);
        self.log(Undo::Cell(key, prev));
    }

    pub fn set_val(&mut self, key: ValKey, v: Value) {
        assert!(v.caps.has_persist() && v.caps.has_copy(), "storing a val without Copy and Persist");
        let prev = self.vals.insert(key, v);
        self.log(Undo::Val(key, prev));
    }

    /// Register a module, its name and its defaults.
    pub fn add_module(&mut self, vm: &VerifiedModule, bytes: Vec<u8>) {
        let (prev_binding, defaults) = self.register(vm, bytes);
        self.log(Undo::Module { address: vm.address, name: vm.module.name.clone(), prev_binding, defaults });
    }

    fn register(&mut self, vm: &VerifiedModule, bytes: Vec<u8>) -> (Option<ModuleAddress>, Vec<TypeKey>) {
        let prev = self.registry.insert(vm, bytes);
        let mut keys = Vec::new();
        for (i, f) in vm.module.functions.iter().enumerate() {
            if let Some(t) = f.default_for {
                let key = (vm.address, t);
                let old = self.defaults.insert(key, (vm.address, i as u16));
                assert!(old.is_none(), "second default for one type");
                keys.push(key);
            }
        }
        (prev, keys)
    }

    pub fn rollback_to(&mut self, m: Mark) {
        let Some(j) = self.journal.as_mut() else { return };
        let undo: Vec<Undo> = j.drain(m.0..).rev().collect();
        for u in undo {
            match u {
                Undo::Cell(k, prev) => restore(&mut self.cells, k, prev),
                Undo::Val(k, prev) => restore(&mut self.vals, k, prev),
                Undo::Module { address, name, prev_binding, defaults } => {
                    self.registry.remove(&address);
                    match prev_binding {
                        Some(a) => {
                            self.registry.names.insert(name, a);
                        }
                        None => {
                            self.registry.names.remove(&name);
                        }
                    }
                    for d in defaults {
                        self.defaults.remove(&d);
                    }
                }
            }
        }
    }

    pub fn abort(&mut self) {
        self.rollback_to(Mark(0));
        self.journal = None;
    }

    /// Close the transaction, bump the counter and return the net writes.
    pub fn commit(&mut self) -> CommitRecord {
        let journal = self.journal.take().expect("commit outside a transaction");
        self.tx_counter += 1;
        let mut rec = CommitRecord { counter: self.tx_counter, ..Default::default() };
        let mut cells = BTreeSet::new();
        let mut vals = BTreeSet::new();
        for u in &journal {
            match u {
                Undo::Cell(k, _) => {
                    cells.insert(*k);
                }
                Undo::Val(k, _) => {
                    vals.insert(*k);
                }
                Undo::Module { address, .. } => {
                    let d = self.registry.deployed(address).expect("registered");
                    rec.modules.push(ModuleRecord {
                        address: *address,
                        bytes: d.bytes.as_ref().clone(),
                        bounds: d.bounds.clone(),
                    });
                }
            }
        }
        rec.cells = cells.into_iter().map(|k| (k, self.cells[&k].clone())).collect();
        rec.vals = vals.into_iter().map(|k| (k, self.vals[&k].clone())).collect();
        rec
    }

    /// Replay a committed record without executing anything.
    pub fn apply(&mut self, rec: &CommitRecord) -> Result<(), String> {
        for m in &rec.modules {
            let module = crate::bytecode::decode(&m.bytes).map_err(|e| e.to_string())?;
            if crate::bytecode::address_of(&m.bytes) != m.address {
                return Err(format!("module {} does not match its bytes", m.address.short()));
            }
            let vm = VerifiedModule { address: m.address, module, bounds: m.bounds.clone() };
            self.register(&vm, m.bytes.clone());
        }
        for (k, v) in &rec.cells {
            self.cells.insert(*k, v.clone());
        }
        for (k, v) in &rec.vals {
            self.vals.insert(*k, v.clone());
        }
        self.tx_counter = rec.counter;
        Ok(())
    }

    /// Canonical serialization of everything the digest covers.
    pub fn canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(b"mandala-state/1");
        let mut mods: Vec<_> = self.registry.modules.iter().collect();
        mods.sort_by_key(|(a, _)| **a);
        w.u32(mods.len() as u32);
        for (a, d) in mods {
            w.bytes(&a.0);
            write_bounds(&mut w, &d.bounds);
        }
        let names = self.registry.module_names();
        w.u32(names.len() as u32);
        for (n, a) in names {
            w.str(&n);
            w.bytes(&a.0);
        }
        w.u32(self.defaults.len() as u32);
        for ((ta, ti), (fa, fi)) in &self.defaults {
            w.bytes(&ta.0);
            w.u16(*ti);
            w.bytes(&fa.0);
            w.u16(*fi);
        }
        w.u32(self.cells.len() as u32);
        for (k, v) in &self.cells {
            w.bytes(k);
            crate::runtime::value::write_value(&mut w, v);
        }
        w.u32(self.vals.len() as u32);
        for ((a, i), v) in &self.vals {
            w.bytes(&a.0);
            w.u16(*i);
            crate::runtime::value::write_value(&mut w, v);
        }
        w.buf
    }

    /// Digest over modules, name bindings, defaults, cells and vals. The
    /// transaction counter is not covered, so a failed transaction leaves
    /// the digest unchanged.
    pub fn digest(&self) -> Hash32 {
        Sha256::digest(self.canonical()).into()
    }

    /// Deployment order, oldest first.
    pub fn modules_in_order(&self) -> Vec<ModuleAddress> {
        let mut v: Vec<_> = self.registry.modules.iter().map(|(a, d)| (d.seq, *a)).collect();
        v.sort();
        v.into_iter().map(|(_, a)| a).collect()
    }

    pub fn vals(&self) -> impl Iterator<Item = (&ValKey, &Value)> {
        self.vals.iter()
    }
}

fn restore<K: Ord, V>(map: &mut BTreeMap<K, V>, k: K, prev: Option<V>) {
    match prev {
        Some(v) => {
            map.insert(k, v);
        }
        None => {
            map.remove(&k);
        }
    }
}

pub fn write_bounds(w: &mut Writer, b: &GasBounds) {
    w.u32(b.functions.len() as u32);
    b.functions.iter().for_each(|n| w.u64(*n));
    w.u32(b.vals.len() as u32);
    b.vals.iter().for_each(|n| w.u64(*n));
    match b.init {
        Some(n) => {
            w.u8(1);
            w.u64(n);
        }
        None => w.u8(0),
    }
}

pub fn read_bounds(r: &mut Reader) -> Result<GasBounds, DecodeError> {
    let mut b = GasBounds::default();
    for _ in 0..r.u32()? {
        b.functions.push(r.u64()?);
    }
    for _ in 0..r.u32()? {
        b.vals.push(r.u64()?);
    }
    b.init = match r.u8()? {
        0 => None,
        1 => Some(r.u64()?),
        t => return r.err(format!("bad bound tag {t}")),
    };
    Ok(b)
}
