//! Tree-walking interpreter over verified bytecode.

use std::sync::Arc;

use crate::bytecode::*;
use crate::ledger::LedgerState;
use crate::runtime::value::{cell_key, fresh_id, Hash32, Value, ValueKind};
use crate::runtime::Stats;
use crate::types::{Cap, CapSet, Effect, FnRef, ModuleAddress, Risk, SemType, TypeKind};
use crate::validator::gas::cost;

/// Why evaluation stopped early.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Exec {
    Risk(Risk),
    /// A dynamic check failed; only a validator bug can cause this.
    Fault(String),
}

type R<T> = Result<T, Exec>;

fn fault<T>(msg: impl Into<String>) -> R<T> {
    Err(Exec::Fault(msg.into()))
}

struct Frame {
    addr: ModuleAddress,
    targs: Vec<SemType>,
    slots: Vec<Option<Value>>,
    effect: Effect,
}

impl Frame {
    fn ty(&self, t: &SemType) -> SemType {
        t.subst(&self.targs).resolve(self.addr)
    }
}

pub struct Machine<'a> {
    pub state: &'a mut LedgerState,
    pub stats: &'a mut Stats,
    pub gas_used: u64,
    gas_limit: u64,
    stack: Vec<(ModuleAddress, u16)>,
    /// Depth of nested modify transitions; cell access is off while > 0.
    in_modify: usize,
    tx: Hash32,
    fresh: u64,
}

impl<'a> Machine<'a> {
    pub fn new(state: &'a mut LedgerState, stats: &'a mut Stats, tx: Hash32, gas_limit: u64) -> Self {
        Machine { state, stats, gas_used: 0, gas_limit, stack: Vec::new(), in_modify: 0, tx, fresh: 0 }
    }

    fn charge(&mut self, n: u64) -> R<()> {
        self.gas_used = self.gas_used.saturating_add(n);
        if self.gas_used > self.gas_limit {
            return fault("gas limit exceeded after the upfront check");
        }
        Ok(())
    }

    fn module(&self, addr: &ModuleAddress) -> R<Arc<BytecodeModule>> {
        match self.state.registry.deployed(addr) {
            Some(d) => Ok(d.module.clone()),
            None => fault(format!("module {} not deployed", addr.short())),
        }
    }

    fn bound(&self, addr: &ModuleAddress, f: u16) -> u64 {
        self.state.registry.deployed(addr).map_or(u64::MAX, |d| d.bounds.functions[f as usize])
    }

    /// Run function `f` of `addr`. On a risk, every write it made is undone.
    pub fn invoke(&mut self, addr: ModuleAddress, f: u16, targs: Vec<SemType>, args: Vec<Value>) -> R<Value> {
        if self.stack.contains(&(addr, f)) {
            self.stats.reentrancy_violations += 1;
            return fault("function already on the call stack");
        }
        self.stack.push((addr, f));
        self.stats.invocations += 1;
        self.stats.max_depth = self.stats.max_depth.max(self.stack.len());
        let mark = self.state.mark();
        let start = self.gas_used;
        let r = self.run_function(addr, f, targs, args);
        self.stack.pop();
        if let Err(Exec::Risk(_)) = r {
            self.state.rollback_to(mark);
        }
        if self.gas_used - start > self.bound(&addr, f) {
            self.stats.gas_violations += 1;
        }
        r
    }

    fn run_function(&mut self, addr: ModuleAddress, f: u16, targs: Vec<SemType>, args: Vec<Value>) -> R<Value> {
        let module = self.module(&addr)?;
        let Some(def) = module.functions.get(f as usize) else {
            return fault("missing function");
        };
        if args.len() != def.params.len() {
            return fault("wrong argument count");
        }
        let mut fr = Frame {
            addr,
            targs,
            slots: vec![None; def.locals.len()],
            effect: def.effect,
        };
        for (p, v) in def.params.iter().zip(args) {
            if !matches!(p.pattern, Pat::Bind(_)) {
                self.charge(cost::PARAM_UNPACK)?;
            }
            bind(&mut fr, &p.pattern, v)?;
        }
        let v = self.eval(&mut fr, &def.body)?;
        finish(&fr)?;
        Ok(v)
    }

    /// Evaluate a val initializer of module `addr`.
    pub fn run_val(&mut self, addr: ModuleAddress, j: u16) -> R<Value> {
        let module = self.module(&addr)?;
        let def = &module.vals[j as usize];
        let mut fr =
            Frame { addr, targs: vec![], slots: vec![None; def.locals.len()], effect: Effect::Init };
        let v = self.eval(&mut fr, &def.init)?;
        finish(&fr)?;
        Ok(v)
    }

    pub fn run_init(&mut self, addr: ModuleAddress, deployer: Value) -> R<Value> {
        let module = self.module(&addr)?;
        let Some(def) = &module.init else { return Ok(Value::unit()) };
        let mut fr =
            Frame { addr, targs: vec![], slots: vec![None; def.locals.len()], effect: Effect::Active };
        if !matches!(def.param.pattern, Pat::Bind(_)) {
            self.charge(cost::PARAM_UNPACK)?;
        }
        bind(&mut fr, &def.param.pattern, deployer)?;
        let v = self.eval(&mut fr, &def.body)?;
        finish(&fr)?;
        Ok(v)
    }

    fn cell_guard(&mut self, fr: &Frame, needed: Effect) -> R<()> {
        if self.in_modify > 0 {
            self.stats.effect_faults += 1;
            return fault("cell access inside a modify transition");
        }
        if fr.effect < needed {
            self.stats.effect_faults += 1;
            return fault(format!("{} operation in a {} frame", needed.keyword(), fr.effect.keyword()));
        }
        Ok(())
    }

    /// Current content of a cell, materializing the default if empty.
    fn load_cell(&mut self, key: &Hash32, inner: &SemType, default: Option<FnRef>, fr: &Frame) -> R<Value> {
        if let Some(v) = self.state.cell(key) {
            return Ok(v.clone());
        }
        let Some(d) = default else {
            return Err(Exec::Risk(Risk::EmptyCell));
        };
        let TypeKind::Adt(_, targs) = &inner.kind else {
            return fault("default for a non-ADT cell");
        };
        self.charge(cost::CALL)?;
        self.invoke(d.module.absolute(fr.addr), d.index, targs.clone(), vec![])
    }

    fn call_target(&self, fr: &Frame, c: &CallSite) -> (ModuleAddress, u16, Vec<SemType>) {
        (c.func.module.absolute(fr.addr), c.func.index, c.type_args.iter().map(|t| fr.ty(t)).collect())
    }

    fn args(&mut self, fr: &mut Frame, args: &[Node]) -> R<Vec<Value>> {
        args.iter().map(|a| self.eval(fr, a)).collect()
    }

    fn eval(&mut self, fr: &mut Frame, n: &Node) -> R<Value> {
        match n {
            Node::Const(c) => {
                self.charge(cost::CONST)?;
                Ok(match c {
                    Const::UInt(n) => Value::uint(*n),
                    Const::Int(n) => Value::int(*n),
                    Const::Unit => Value::unit(),
                })
            }
            Node::Move(s) => {
                self.charge(cost::MOVE)?;
                match fr.slots.get_mut(*s as usize).and_then(Option::take) {
                    Some(v) => Ok(v),
                    None => fault(format!("slot {s} is empty")),
                }
            }
            Node::Copy(s) => {
                self.charge(cost::COPY)?;
                match fr.slots.get(*s as usize).and_then(Option::as_ref) {
                    Some(v) if v.caps.has_copy() => Ok(v.clone()),
                    Some(_) => fault(format!("copy of slot {s} without Copy")),
                    None => fault(format!("slot {s} is empty")),
                }
            }
            Node::Drop { slots, body } => {
                for s in slots {
                    self.charge(cost::DROP)?;
                    match fr.slots.get_mut(*s as usize).and_then(Option::take) {
                        Some(v) if v.caps.has_drop() => {}
                        Some(_) => return fault(format!("drop of slot {s} without Drop")),
                        None => return fault(format!("slot {s} is empty")),
                    }
                }
                self.eval(fr, body)
            }
            Node::Val(v) => {
                self.charge(cost::VAL)?;
                match self.state.val(&(v.module.absolute(fr.addr), v.index)) {
                    Some(x) => Ok(x.clone()),
                    None => fault("val not initialized"),
                }
            }
            Node::Arith { op, lhs, rhs } => {
                self.charge(cost::ARITH)?;
                let l = self.eval(fr, lhs)?;
                let r = self.eval(fr, rhs)?;
                arith(*op, &l, &r)
            }
            Node::Coerce { to, operand } => {
                self.charge(cost::COERCE)?;
                let v = self.eval(fr, operand)?;
                match (to, &v.kind) {
                    (NumKind::Int, ValueKind::UInt(n)) => {
                        i64::try_from(*n).map(Value::int).map_err(|_| Exec::Risk(Risk::NumericOverflow))
                    }
                    (NumKind::UInt, ValueKind::Int(n)) => {
                        u64::try_from(*n).map(Value::uint).map_err(|_| Exec::Risk(Risk::NumericUnderflow))
                    }
                    _ => fault("bad conversion operand"),
                }
            }
            Node::Construct { ty, type_args, ctor, fields } => {
                self.charge(cost::CONSTRUCT + fields.len() as u64)?;
                let vals = self.args(fr, fields)?;
                let owner = ty.module.absolute(fr.addr);
                let m = self.module(&owner)?;
                let caps = m.types[ty.index as usize].caps.resolve(owner);
                let kind = ValueKind::Adt {
                    ty: ty.resolve(fr.addr),
                    targs: type_args.iter().map(|t| fr.ty(t)).collect(),
                    ctor: *ctor,
                    fields: vals,
                };
                Ok(Value::new(kind, caps))
            }
            Node::Tuple(elems) => {
                self.charge(cost::CONSTRUCT + elems.len() as u64)?;
                Ok(Value::tuple(self.args(fr, elems)?))
            }
            Node::Let { pattern, bound, body } => {
                self.charge(cost::LET)?;
                let v = self.eval(fr, bound)?;
                bind(fr, pattern, v)?;
                self.eval(fr, body)
            }
            Node::Match { scrutinee, arms } => {
                self.charge(cost::MATCH + arms.len() as u64)?;
                let v = self.eval(fr, scrutinee)?;
                let Some(arm) = arms.iter().find(|a| matches(&a.pattern, &v)) else {
                    return fault("no arm matches");
                };
                bind(fr, &arm.pattern, v)?;
                self.eval(fr, &arm.body)
            }
            Node::Call(c) => {
                self.charge(cost::CALL)?;
                let args = self.args(fr, &c.args)?;
                let (addr, f, targs) = self.call_target(fr, c);
                self.invoke(addr, f, targs, args)
            }
            Node::Try { call, success_drops, handlers } => {
                self.charge(cost::TRY)?;
                let args = self.args(fr, &call.args)?;
                let saved = args.clone();
                self.charge(cost::CALL)?;
                let (addr, f, targs) = self.call_target(fr, call);
                match self.invoke(addr, f, targs, args) {
                    Ok(v) => {
                        for s in success_drops {
                            self.charge(cost::DROP)?;
                            if fr.slots[*s as usize].take().is_none() {
                                return fault(format!("slot {s} is empty"));
                            }
                        }
                        Ok(v)
                    }
                    Err(Exec::Risk(r)) => match handlers.iter().find(|h| h.risk == r) {
                        Some(h) => {
                            self.stats.handled_risks += 1;
                            for (b, v) in h.binders.iter().zip(saved) {
                                fr.slots[*b as usize] = Some(v);
                            }
                            self.eval(fr, &h.body)
                        }
                        None => Err(Exec::Risk(r)),
                    },
                    Err(e) => Err(e),
                }
            }
            Node::Modify { reference, binder, default, returns, body } => {
                self.charge(cost::CELL_READ + cost::CELL_WRITE)?;
                self.cell_guard(fr, Effect::Active)?;
                let r = self.eval(fr, reference)?;
                let ValueKind::Ref { key, inner } = &r.kind else {
                    return fault("modify of a non-reference");
                };
                let old = self.load_cell(key, inner, *default, fr)?;
                fr.slots[*binder as usize] = Some(old);
                self.in_modify += 1;
                let v = self.eval(fr, body);
                self.in_modify -= 1;
                let v = v?;
                let (new, result) = if *returns {
                    match v.kind {
                        ValueKind::Tuple(mut pair) if pair.len() == 2 => {
                            let result = pair.pop().expect("pair");
                            (pair.pop().expect("pair"), result)
                        }
                        _ => return fault("modify body did not return a pair"),
                    }
                } else {
                    (v, Value::unit())
                };
                if !new.caps.has_persist() {
                    return fault("cell value without Persist");
                }
                self.cell_guard(fr, Effect::Active)?;
                self.state.write_cell(*key, new);
                self.stats.cell_writes += 1;
                Ok(result)
            }
            Node::AndReturn { cell, result } => {
                self.charge(cost::AND_RETURN)?;
                let c = self.eval(fr, cell)?;
                let r = self.eval(fr, result)?;
                Ok(Value::new(ValueKind::Tuple(vec![c, r]), CapSet::new()))
            }
            Node::Read { reference, default } => {
                self.charge(cost::CELL_READ)?;
                self.cell_guard(fr, Effect::Dependent)?;
                let r = self.eval(fr, reference)?;
                let ValueKind::Ref { key, inner } = &r.kind else {
                    return fault("read of a non-reference");
                };
                let v = self.load_cell(key, inner, *default, fr)?;
                if !v.caps.has_copy() {
                    return fault("read of a value without Copy");
                }
                Ok(v)
            }
            Node::Attach { operand, cap } => {
                self.charge(cost::ATTACH)?;
                let mut v = self.eval(fr, operand)?;
                v.caps.insert(cap.resolve(fr.addr));
                Ok(v)
            }
            Node::Detach { operand, cap } => {
                self.charge(cost::DETACH)?;
                let mut v = self.eval(fr, operand)?;
                v.caps.remove(&cap.resolve(fr.addr));
                Ok(v)
            }
            Node::Cycle { bound, init, acc, body } => {
                self.charge(cost::CYCLE)?;
                let mut v = self.eval(fr, init)?;
                for _ in 0..*bound {
                    fr.slots[*acc as usize] = Some(v);
                    v = self.eval(fr, body)?;
                }
                Ok(v)
            }
            Node::Derive { context, id } => {
                self.charge(cost::DERIVE)?;
                let c = self.eval(fr, context)?;
                let i = self.eval(fr, id)?;
                match (c.kind, i.kind) {
                    (ValueKind::Context { id: cid, inner }, ValueKind::Id(ib)) => Ok(Value::new(
                        ValueKind::Ref { key: cell_key(&cid, &ib), inner },
                        CapSet::structural().with(Cap::Modify),
                    )),
                    _ => fault("derive operands"),
                }
            }
            Node::NewId => {
                self.charge(cost::NEW_ID)?;
                self.fresh_guard(fr)?;
                Ok(Value::id(self.next_fresh(), true))
            }
            Node::NewContext { inner } => {
                self.charge(cost::NEW_CONTEXT)?;
                self.fresh_guard(fr)?;
                let inner = fr.ty(inner);
                Ok(Value::new(ValueKind::Context { id: self.next_fresh(), inner }, CapSet::structural()))
            }
        }
    }

    fn fresh_guard(&mut self, fr: &Frame) -> R<()> {
        if fr.effect < Effect::Init || self.in_modify > 0 {
            self.stats.effect_faults += 1;
            return fault("fresh identity outside an init frame");
        }
        Ok(())
    }

    fn next_fresh(&mut self) -> Hash32 {
        let id = fresh_id(&self.tx, self.fresh);
        self.fresh += 1;
        id
    }
}

fn finish(fr: &Frame) -> R<()> {
    if fr.slots.iter().any(Option::is_some) {
        return fault("slots left unconsumed");
    }
    Ok(())
}

fn arith(op: ArithOp, l: &Value, r: &Value) -> R<Value> {
    use Risk::{NumericOverflow as Over, NumericUnderflow as Under};
    match (&l.kind, &r.kind) {
        (ValueKind::UInt(a), ValueKind::UInt(b)) => match op {
            ArithOp::Add => a.checked_add(*b).map(Value::uint).ok_or(Exec::Risk(Over)),
            ArithOp::Sub => a.checked_sub(*b).map(Value::uint).ok_or(Exec::Risk(Under)),
        },
        (ValueKind::Int(a), ValueKind::Int(b)) => {
            let wide = match op {
                ArithOp::Add => *a as i128 + *b as i128,
                ArithOp::Sub => *a as i128 - *b as i128,
            };
            if wide > i64::MAX as i128 {
                Err(Exec::Risk(Over))
            } else if wide < i64::MIN as i128 {
                Err(Exec::Risk(Under))
            } else {
                Ok(Value::int(wide as i64))
            }
        }
        _ => fault("arithmetic on mismatched operands"),
    }
}

fn matches(p: &Pat, v: &Value) -> bool {
    match (p, &v.kind) {
        (Pat::Bind(_), _) => true,
        (Pat::Ctor { ctor, fields, .. }, ValueKind::Adt { ctor: c, fields: vs, .. }) => {
            ctor == c && fields.len() == vs.len() && fields.iter().zip(vs).all(|(p, v)| matches(p, v))
        }
        (Pat::Tuple(ps), ValueKind::Tuple(vs)) => ps.len() == vs.len() && ps.iter().zip(vs).all(|(p, v)| matches(p, v)),
        _ => false,
    }
}

fn bind(fr: &mut Frame, p: &Pat, v: Value) -> R<()> {
    match (p, v.kind) {
        (Pat::Bind(s), kind) => {
            let slot = &mut fr.slots[*s as usize];
            if slot.is_some() {
                return fault(format!("slot {s} bound while occupied"));
            }
            *slot = Some(Value { kind, caps: v.caps });
            Ok(())
        }
        (Pat::Ctor { fields, .. }, ValueKind::Adt { fields: vs, .. }) | (Pat::Tuple(fields), ValueKind::Tuple(vs))
            if fields.len() == vs.len() =>
        {
            fields.iter().zip(vs).try_for_each(|(p, v)| bind(fr, p, v))
        }
        _ => fault("pattern does not fit the value"),
    }
}
