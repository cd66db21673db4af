//! Deployments and transactions against a `LedgerState`.

pub mod args;
pub mod interp;
pub mod value;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::{CommitRecord, LedgerState};
use crate::registry::Registry;
use crate::types::{Cap, ModuleAddress, Risk, SemType, TypeKind, Visibility};
use crate::validator::{self, Rejection};
use interp::{Exec, Machine};
use value::{external_id, render, Hash32, Value};

pub use args::{parse_type, Arg};

/// Counters for the dynamic safety checks. All but the first three must
/// stay zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub invocations: u64,
    pub max_depth: usize,
    pub cell_writes: u64,
    pub handled_risks: u64,
    pub reentrancy_violations: u64,
    pub gas_violations: u64,
    pub effect_faults: u64,
    pub faults: u64,
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum TxError {
    #[error("{0}")]
    Invalid(Rejection),
    #[error("DuplicateModule {0}")]
    DuplicateModule(ModuleAddress),
    #[error("DeployError({0})")]
    DeployFailed(Risk),
    #[error("TxRejected(MissingSigner)")]
    MissingSigner,
    #[error("TxRejected(SignerMismatch): {0}")]
    SignerMismatch(String),
    #[error("TxRejected(UnknownModule): {0}")]
    UnknownModule(String),
    #[error("TxRejected(UnknownFunction): {0}")]
    UnknownFunction(String),
    #[error("TxRejected(NotPublic): {0}")]
    NotPublic(String),
    #[error("TxRejected(TypeMismatch): {0}")]
    TypeMismatch(String),
    #[error("TxRejected(InsufficientGasLimit): limit {limit} below bound {bound}")]
    InsufficientGasLimit { limit: u64, bound: u64 },
    #[error("InternalFault: {0}")]
    Fault(String),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Status {
    Ok,
    Error(Risk),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Receipt {
    pub status: Status,
    pub gas_used: u64,
    pub gas_bound: u64,
    pub digest: Hash32,
    /// Rendered return value, `-` on error; the address for deployments.
    pub ret: String,
}

impl Receipt {
    /// `status gasUsed gasBound digest return`
    pub fn line(&self) -> String {
        let status = match &self.status {
            Status::Ok => "ok".to_string(),
            Status::Error(r) => format!("error:{r}"),
        };
        format!("{status} {} {} {} {}", self.gas_used, self.gas_bound, hex::encode(self.digest), self.ret)
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CallRequest {
    pub module: ModuleAddress,
    pub function: String,
    /// Absolute types.
    pub type_args: Vec<SemType>,
    pub args: Vec<Arg>,
    pub signer: Option<String>,
    /// Defaults to the stored bound of the target.
    pub gas_limit: Option<u64>,
}

fn tx_digest(counter: u64, kind: &[u8], payload: &[u8]) -> Hash32 {
    let mut h = Sha256::new();
    h.update(b"tx:");
    h.update(counter.to_le_bytes());
    h.update(kind);
    h.update(payload);
    h.finalize().into()
}

/// Ledger state plus the runtime counters; the unit tests and the CLI both
/// drive transactions through this.
#[derive(Clone, Debug, Default)]
pub struct Runtime {
    pub state: LedgerState,
    pub stats: Stats,
}

impl Runtime {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_state(state: LedgerState) -> Self {
        Runtime { state, stats: Stats::default() }
    }

    pub fn digest(&self) -> Hash32 {
        self.state.digest()
    }

    /// Validate and deploy a module, running its val initializers and its
    /// init function. Any risk discards the whole deployment.
    pub fn deploy(&mut self, bytes: &[u8], signer: Option<&str>) -> Result<(Receipt, CommitRecord), TxError> {
        let vm = validator::validate(bytes, &self.state.registry).map_err(TxError::Invalid)?;
        if self.state.registry.contains(&vm.address) {
            return Err(TxError::DuplicateModule(vm.address));
        }
        let deployer = match (&vm.module.init, signer) {
            (Some(_), None) => return Err(TxError::MissingSigner),
            (_, s) => s.map(|s| Value::id(external_id(s), true)),
        };
        let bound = vm
            .bounds
            .vals
            .iter()
            .copied()
            .chain(vm.bounds.init)
            .fold(0u64, u64::saturating_add);
        let tx = tx_digest(self.state.tx_counter(), b"deploy", &vm.address.0);
        self.state.begin();
        self.state.add_module(&vm, bytes.to_vec());
        let mut m = Machine::new(&mut self.state, &mut self.stats, tx, bound);
        let mut run = || -> Result<(), Exec> {
            for j in 0..vm.module.vals.len() {
                let v = m.run_val(vm.address, j as u16)?;
                m.state.set_val((vm.address, j as u16), v);
            }
            if let Some(d) = deployer.clone() {
                if vm.module.init.is_some() {
                    m.run_init(vm.address, d)?;
                }
            }
            Ok(())
        };
        let r = run();
        let used = m.gas_used;
        match r {
            Ok(()) => {
                if used > bound {
                    self.stats.gas_violations += 1;
                }
                let rec = self.state.commit();
                let receipt =
                    Receipt { status: Status::Ok, gas_used: used, gas_bound: bound, digest: self.digest(), ret: vm.address.to_hex() };
                Ok((receipt, rec))
            }
            Err(e) => {
                self.state.abort();
                match e {
                    Exec::Risk(r) => Err(TxError::DeployFailed(r)),
                    Exec::Fault(f) => {
                        self.stats.faults += 1;
                        Err(TxError::Fault(f))
                    }
                }
            }
        }
    }

    /// Resolve arguments and run a public function as a transaction.
    pub fn call(&mut self, req: &CallRequest) -> Result<(Receipt, CommitRecord), TxError> {
        let module = self
            .state
            .registry
            .module(&req.module)
            .ok_or_else(|| TxError::UnknownModule(req.module.to_hex()))?;
        let index = module.function_index(&req.function).ok_or_else(|| TxError::UnknownFunction(req.function.clone()))?;
        let f = &module.functions[index as usize];
        if f.visibility != Visibility::Public {
            return Err(TxError::NotPublic(req.function.clone()));
        }
        if req.type_args.len() != f.type_params.len() {
            return Err(TxError::TypeMismatch(format!(
                "{} expects {} type arguments",
                f.name,
                f.type_params.len()
            )));
        }
        for t in &req.type_args {
            validator::check::wf(&crate::sema::env::Universe::new(&self.state.registry, Default::default()), t, 0)
                .map_err(|r| TxError::TypeMismatch(r.detail))?;
        }
        if req.args.len() != f.params.len() {
            return Err(TxError::TypeMismatch(format!("{} expects {} arguments", f.name, f.params.len())));
        }
        let mut args = Vec::new();
        for (a, p) in req.args.iter().zip(&f.params) {
            let expected = p.ty.subst(&req.type_args).resolve(req.module);
            args.push(self.arg_value(a, &expected, req.signer.as_deref())?);
        }
        let bound = self.state.registry.bounds(&req.module).expect("deployed").functions[index as usize];
        let limit = req.gas_limit.unwrap_or(bound);
        if limit < bound {
            return Err(TxError::InsufficientGasLimit { limit, bound });
        }
        let mut payload = req.module.0.to_vec();
        payload.extend_from_slice(req.function.as_bytes());
        args.iter().for_each(|a| payload.extend(a.encode()));
        let tx = tx_digest(self.state.tx_counter(), b"call", &payload);

        self.state.begin();
        let mut m = Machine::new(&mut self.state, &mut self.stats, tx, limit);
        let r = m.invoke(req.module, index, req.type_args.clone(), args);
        let used = m.gas_used;
        let (status, ret) = match r {
            Ok(v) => (Status::Ok, render(&v, &self.state.registry)),
            Err(Exec::Risk(r)) => (Status::Error(r), "-".into()),
            Err(Exec::Fault(f)) => {
                self.stats.faults += 1;
                self.state.abort();
                return Err(TxError::Fault(f));
            }
        };
        let rec = self.state.commit();
        Ok((Receipt { status, gas_used: used, gas_bound: bound, digest: self.digest(), ret }, rec))
    }

    fn arg_value(&self, a: &Arg, expected: &SemType, signer: Option<&str>) -> Result<Value, TxError> {
        let mismatch = |what: &str| TxError::TypeMismatch(format!("{what} where {} is expected", value::render_type(expected, &self.state.registry)));
        let v = match (a, &expected.kind) {
            (Arg::UInt(n), TypeKind::UInt) => Value::uint(*n),
            (Arg::UInt(n), TypeKind::Int) => Value::int(i64::try_from(*n).map_err(|_| mismatch("an out-of-range integer"))?),
            (Arg::Int(n), TypeKind::Int) => Value::int(*n),
            (Arg::Int(n), TypeKind::UInt) => Value::uint(u64::try_from(*n).map_err(|_| mismatch("a negative integer"))?),
            (Arg::Unit, TypeKind::Unit) => Value::unit(),
            (Arg::Id(name), TypeKind::Id) => {
                let master = expected.caps.contains(&Cap::Master);
                if master {
                    match signer {
                        None => return Err(TxError::MissingSigner),
                        Some(s) if s != name => {
                            return Err(TxError::SignerMismatch(format!("Master ID of {name} needs signer {name}, got {s}")))
                        }
                        Some(_) => {}
                    }
                }
                Value::id(external_id(name), master)
            }
            (Arg::Val { module, name }, _) => {
                let addr = self.state.registry.resolve_name(module).ok_or_else(|| TxError::UnknownModule(module.clone()))?;
                let m = self.state.registry.module(&addr).expect("bound name");
                let j = m.val_index(name).ok_or_else(|| TxError::TypeMismatch(format!("no val {module}.{name}")))?;
                self.state.val(&(addr, j)).cloned().ok_or_else(|| TxError::TypeMismatch(format!("val {module}.{name} unset")))?
            }
            _ => return Err(mismatch(&a.to_string())),
        };
        if !v.ty().fits(expected) {
            return Err(mismatch(&value::render_type(&v.ty(), &self.state.registry)));
        }
        Ok(v)
    }
}
