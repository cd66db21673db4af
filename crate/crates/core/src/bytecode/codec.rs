//! Canonical binary encoding.
//!
//! Layout: magic `MDLC`, `u16` version, module name, then six sections in
//! fixed order (types, caps, imports, functions, vals, init), each prefixed
//! with its `u32` byte length. Integers are little-endian and fixed width.
//! Every list is length-prefixed. Sets (capabilities, risks, imports) must
//! be strictly ascending, booleans are 0 or 1, and no bytes may trail a
//! section, so `encode(decode(b)) == b` whenever decoding succeeds.
//!
//! Inside a module, a reference to another module is a `u16` index into the
//! import table; `0xFFFF` denotes the module itself.

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ir::*;
use crate::types::*;

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("offset {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

const LOCAL: u16 = 0xFFFF;
const MAX_DEPTH: usize = 200;

/// How module references are written.
#[derive(Clone, Copy)]
pub enum AddrMode<'a> {
    /// Index into the import table of the enclosing module.
    Relative(&'a [ModuleAddress]),
    /// Full 32-byte addresses; used for stored values.
    Absolute,
}

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.len16(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn len16(&mut self, n: usize) {
        self.u16(u16::try_from(n).expect("list longer than 65535 entries"));
    }

    pub fn module_id(&mut self, m: ModuleId, mode: AddrMode) {
        match (mode, m) {
            (AddrMode::Relative(_), ModuleId::Local) => self.u16(LOCAL),
            (AddrMode::Relative(imports), ModuleId::Addr(a)) => {
                let i = imports.binary_search(&a).expect("reference to a module missing from the import table");
                self.u16(i as u16)
            }
            (AddrMode::Absolute, ModuleId::Local) => self.u8(0),
            (AddrMode::Absolute, ModuleId::Addr(a)) => {
                self.u8(1);
                self.bytes(&a.0);
            }
        }
    }

    pub fn item(&mut self, m: ModuleId, index: u16, mode: AddrMode) {
        self.module_id(m, mode);
        self.u16(index);
    }

    pub fn cap(&mut self, c: &Cap, mode: AddrMode) {
        match c {
            Cap::Drop => self.u8(0),
            Cap::Copy => self.u8(1),
            Cap::Persist => self.u8(2),
            Cap::Modify => self.u8(3),
            Cap::Inspect => self.u8(4),
            Cap::Master => self.u8(5),
            Cap::User(r) => {
                self.u8(6);
                self.item(r.module, r.index, mode);
            }
        }
    }

    pub fn capset(&mut self, caps: &CapSet, mode: AddrMode) {
        self.u8(u8::try_from(caps.len()).expect("capability set too large"));
        for c in caps.iter() {
            self.cap(c, mode);
        }
    }

    pub fn sem_type(&mut self, t: &SemType, mode: AddrMode) {
        match &t.kind {
            TypeKind::UInt => self.u8(0),
            TypeKind::Int => self.u8(1),
            TypeKind::Unit => self.u8(2),
            TypeKind::Id => self.u8(3),
            TypeKind::Context(inner) => {
                self.u8(4);
                self.sem_type(inner, mode);
            }
            TypeKind::Ref(inner) => {
                self.u8(5);
                self.sem_type(inner, mode);
            }
            TypeKind::Adt(r, args) => {
                self.u8(6);
                self.item(r.module, r.index, mode);
                self.types(args, mode);
            }
            TypeKind::Var(i) => {
                self.u8(7);
                self.u16(*i);
                // Type variables carry no capabilities of their own.
                return;
            }
            TypeKind::Tuple(elems) => {
                self.u8(8);
                self.types(elems, mode);
                // Tuple capabilities are derived from the elements.
                return;
            }
        }
        self.capset(&t.caps, mode);
    }

    pub fn types(&mut self, ts: &[SemType], mode: AddrMode) {
        self.len16(ts.len());
        for t in ts {
            self.sem_type(t, mode);
        }
    }

    pub fn risk(&mut self, r: &Risk, mode: AddrMode) {
        match r {
            Risk::NumericOverflow => self.u8(0),
            Risk::NumericUnderflow => self.u8(1),
            Risk::EmptyCell => self.u8(2),
            Risk::Custom(m, name) => {
                self.u8(3);
                self.module_id(*m, mode);
                self.str(name);
            }
        }
    }

    fn risks(&mut self, rs: &[Risk], mode: AddrMode) {
        self.len16(rs.len());
        for r in rs {
            self.risk(r, mode);
        }
    }

    fn pat(&mut self, p: &Pat, mode: AddrMode) {
        match p {
            Pat::Bind(s) => {
                self.u8(0);
                self.u16(*s);
            }
            Pat::Ctor { ty, ctor, fields } => {
                self.u8(1);
                self.item(ty.module, ty.index, mode);
                self.u16(*ctor);
                self.len16(fields.len());
                for f in fields {
                    self.pat(f, mode);
                }
            }
            Pat::Tuple(elems) => {
                self.u8(2);
                self.len16(elems.len());
                for f in elems {
                    self.pat(f, mode);
                }
            }
        }
    }

    fn slots(&mut self, slots: &[u16]) {
        self.len16(slots.len());
        for s in slots {
            self.u16(*s);
        }
    }

    fn opt_fn(&mut self, f: &Option<FnRef>, mode: AddrMode) {
        match f {
            None => self.u8(0),
            Some(f) => {
                self.u8(1);
                self.item(f.module, f.index, mode);
            }
        }
    }

    fn call_site(&mut self, c: &CallSite, mode: AddrMode) {
        self.item(c.func.module, c.func.index, mode);
        self.types(&c.type_args, mode);
        self.nodes(&c.args, mode);
    }

    fn nodes(&mut self, ns: &[Node], mode: AddrMode) {
        self.len16(ns.len());
        for n in ns {
            self.node(n, mode);
        }
    }

    pub fn node(&mut self, n: &Node, mode: AddrMode) {
        match n {
            Node::Const(Const::UInt(v)) => {
                self.u8(0);
                self.u64(*v);
            }
            Node::Const(Const::Int(v)) => {
                self.u8(1);
                self.i64(*v);
            }
            Node::Const(Const::Unit) => self.u8(2),
            Node::Move(s) => {
                self.u8(3);
                self.u16(*s);
            }
            Node::Copy(s) => {
                self.u8(4);
                self.u16(*s);
            }
            Node::Drop { slots, body } => {
                self.u8(5);
                self.slots(slots);
                self.node(body, mode);
            }
            Node::Val(v) => {
                self.u8(6);
                self.item(v.module, v.index, mode);
            }
            Node::Arith { op, lhs, rhs } => {
                self.u8(7);
                self.u8(match op {
                    ArithOp::Add => 0,
                    ArithOp::Sub => 1,
                });
                self.node(lhs, mode);
                self.node(rhs, mode);
            }
            Node::Coerce { to, operand } => {
                self.u8(8);
                self.u8(match to {
                    NumKind::UInt => 0,
                    NumKind::Int => 1,
                });
                self.node(operand, mode);
            }
            Node::Construct { ty, type_args, ctor, fields } => {
                self.u8(9);
                self.item(ty.module, ty.index, mode);
                self.types(type_args, mode);
                self.u16(*ctor);
                self.nodes(fields, mode);
            }
            Node::Tuple(elems) => {
                self.u8(10);
                self.nodes(elems, mode);
            }
            Node::Let { pattern, bound, body } => {
                self.u8(11);
                self.pat(pattern, mode);
                self.node(bound, mode);
                self.node(body, mode);
            }
            Node::Match { scrutinee, arms } => {
                self.u8(12);
                self.node(scrutinee, mode);
                self.len16(arms.len());
                for a in arms {
                    self.pat(&a.pattern, mode);
                    self.node(&a.body, mode);
                }
            }
            Node::Call(c) => {
                self.u8(13);
                self.call_site(c, mode);
            }
            Node::Try { call, success_drops, handlers } => {
                self.u8(14);
                self.call_site(call, mode);
                self.slots(success_drops);
                self.len16(handlers.len());
                for h in handlers {
                    self.risk(&h.risk, mode);
                    self.slots(&h.binders);
                    self.node(&h.body, mode);
                }
            }
            Node::Modify { reference, binder, default, returns, body } => {
                self.u8(15);
                self.node(reference, mode);
                self.u16(*binder);
                self.opt_fn(default, mode);
                self.bool(*returns);
                self.node(body, mode);
            }
            Node::AndReturn { cell, result } => {
                self.u8(16);
                self.node(cell, mode);
                self.node(result, mode);
            }
            Node::Read { reference, default } => {
                self.u8(17);
                self.node(reference, mode);
                self.opt_fn(default, mode);
            }
            Node::Attach { operand, cap } => {
                self.u8(18);
                self.node(operand, mode);
                self.cap(cap, mode);
            }
            Node::Detach { operand, cap } => {
                self.u8(19);
                self.node(operand, mode);
                self.cap(cap, mode);
            }
            Node::Cycle { bound, init, acc, body } => {
                self.u8(20);
                self.u64(*bound);
                self.node(init, mode);
                self.u16(*acc);
                self.node(body, mode);
            }
            Node::Derive { context, id } => {
                self.u8(21);
                self.node(context, mode);
                self.node(id, mode);
            }
            Node::NewId => self.u8(22),
            Node::NewContext { inner } => {
                self.u8(23);
                self.sem_type(inner, mode);
            }
        }
    }

    fn param(&mut self, p: &ParamDef, mode: AddrMode) {
        self.sem_type(&p.ty, mode);
        self.pat(&p.pattern, mode);
    }

    fn section(&mut self, f: impl FnOnce(&mut Writer)) {
        let mut inner = Writer::new();
        f(&mut inner);
        self.u32(u32::try_from(inner.buf.len()).expect("section larger than 4 GiB"));
        self.buf.extend_from_slice(&inner.buf);
    }
}

pub fn encode(m: &BytecodeModule) -> Vec<u8> {
    let mode = AddrMode::Relative(&m.imports);
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.str(&m.name);
    w.section(|w| {
        w.len16(m.types.len());
        for t in &m.types {
            w.str(&t.name);
            w.bool(t.public);
            w.bool(t.open);
            w.capset(&t.caps, mode);
            w.len16(t.type_params.len());
            for p in &t.type_params {
                w.str(p);
            }
            w.len16(t.ctors.len());
            for c in &t.ctors {
                w.str(&c.name);
                w.types(&c.fields, mode);
            }
        }
    });
    w.section(|w| {
        w.len16(m.caps.len());
        for c in &m.caps {
            w.str(&c.name);
            w.bool(c.open);
        }
    });
    w.section(|w| {
        w.len16(m.imports.len());
        for a in &m.imports {
            w.bytes(&a.0);
        }
    });
    w.section(|w| {
        w.len16(m.functions.len());
        for f in &m.functions {
            w.str(&f.name);
            match f.visibility {
                Visibility::Public => w.u8(0),
                Visibility::Private => w.u8(1),
                Visibility::Protected(i) => {
                    w.u8(2);
                    w.u16(i);
                }
            }
            w.u8(f.effect as u8);
            w.risks(&f.risks, mode);
            w.len16(f.type_params.len());
            for p in &f.type_params {
                w.str(p);
            }
            match f.default_for {
                None => w.u8(0),
                Some(t) => {
                    w.u8(1);
                    w.u16(t);
                }
            }
            w.types(&f.locals, mode);
            w.len16(f.params.len());
            for p in &f.params {
                w.param(p, mode);
            }
            w.sem_type(&f.ret, mode);
            w.node(&f.body, mode);
        }
    });
    w.section(|w| {
        w.len16(m.vals.len());
        for v in &m.vals {
            w.str(&v.name);
            w.sem_type(&v.ty, mode);
            w.u16(v.after_fns);
            w.types(&v.locals, mode);
            w.node(&v.init, mode);
        }
    });
    w.section(|w| match &m.init {
        None => w.u8(0),
        Some(i) => {
            w.u8(1);
            w.risks(&i.risks, mode);
            w.types(&i.locals, mode);
            w.param(&i.param, mode);
            w.node(&i.body, mode);
        }
    });
    w.buf
}

/// Content address of encoded module bytes.
pub fn address_of(bytes: &[u8]) -> ModuleAddress {
    ModuleAddress(Sha256::digest(bytes).into())
}

pub fn address(m: &BytecodeModule) -> ModuleAddress {
    address_of(&encode(m))
}

/// Bounds for local indices, known before any section body is decoded.
#[derive(Clone, Copy, Default)]
struct Counts {
    types: u16,
    caps: u16,
    fns: u16,
    vals: u16,
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Offset of `bytes[0]` within the whole input, for error reporting.
    base: usize,
    depth: usize,
    imports: Vec<ModuleAddress>,
    counts: Counts,
    /// Number of slots in the function currently being decoded.
    locals: Option<u16>,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0, base: 0, depth: 0, imports: vec![], counts: Counts::default(), locals: None }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn err<T>(&self, reason: impl Into<String>) -> Result<T, DecodeError> {
        Err(DecodeError { offset: self.offset(), reason: reason.into() })
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.bytes.len() - self.pos < n {
            return self.err("truncated input");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => {
                self.pos -= 1;
                self.err("boolean out of range")
            }
        }
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn array32(&mut self) -> Result<[u8; 32], DecodeError> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let n = self.u16()? as usize;
        let at = self.offset();
        let b = self.take(n)?;
        match std::str::from_utf8(b) {
            Ok(s) => Ok(s.to_string()),
            Err(_) => Err(DecodeError { offset: at, reason: "invalid UTF-8 in name".into() }),
        }
    }

    /// Read a list length, rejecting lengths that cannot fit in the rest of
    /// the input (each element takes at least `min` bytes).
    fn len(&mut self, min: usize) -> Result<usize, DecodeError> {
        let n = self.u16()? as usize;
        if n * min > self.bytes.len() - self.pos {
            return self.err("list length exceeds input");
        }
        Ok(n)
    }

    fn enter(&mut self) -> Result<(), DecodeError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err("nesting too deep");
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    pub fn module_id(&mut self, mode: Mode) -> Result<ModuleId, DecodeError> {
        match mode {
            Mode::Relative => {
                let i = self.u16()?;
                if i == LOCAL {
                    return Ok(ModuleId::Local);
                }
                match self.imports.get(i as usize) {
                    Some(a) => Ok(ModuleId::Addr(*a)),
                    None => {
                        self.pos -= 2;
                        self.err(format!("import index {i} out of range"))
                    }
                }
            }
            Mode::Absolute => match self.u8()? {
                0 => Ok(ModuleId::Local),
                1 => Ok(ModuleId::Addr(ModuleAddress(self.array32()?))),
                _ => {
                    self.pos -= 1;
                    self.err("bad module reference tag")
                }
            },
        }
    }

    fn item(&mut self, mode: Mode, local_count: Option<u16>, what: &str) -> Result<(ModuleId, u16), DecodeError> {
        let m = self.module_id(mode)?;
        let i = self.u16()?;
        if let (ModuleId::Local, Some(n), Mode::Relative) = (m, local_count, mode) {
            if i >= n {
                self.pos -= 2;
                return self.err(format!("local {what} index {i} out of range"));
            }
        }
        Ok((m, i))
    }

    fn type_ref(&mut self, mode: Mode) -> Result<TypeRef, DecodeError> {
        let n = self.counts.types;
        let (module, index) = self.item(mode, Some(n), "type")?;
        Ok(TypeRef { module, index })
    }

    fn fn_ref(&mut self, mode: Mode) -> Result<FnRef, DecodeError> {
        let n = self.counts.fns;
        let (module, index) = self.item(mode, Some(n), "function")?;
        Ok(FnRef { module, index })
    }

    pub fn cap(&mut self, mode: Mode) -> Result<Cap, DecodeError> {
        Ok(match self.u8()? {
            0 => Cap::Drop,
            1 => Cap::Copy,
            2 => Cap::Persist,
            3 => Cap::Modify,
            4 => Cap::Inspect,
            5 => Cap::Master,
            6 => {
                let n = self.counts.caps;
                let (module, index) = self.item(mode, Some(n), "capability")?;
                Cap::User(CapRef { module, index })
            }
            t => {
                self.pos -= 1;
                return self.err(format!("bad capability tag {t}"));
            }
        })
    }

    pub fn capset(&mut self, mode: Mode) -> Result<CapSet, DecodeError> {
        let n = self.u8()?;
        let mut caps = CapSet::new();
        let mut last: Option<Cap> = None;
        for _ in 0..n {
            let at = self.offset();
            let c = self.cap(mode)?;
            if last.is_some_and(|l| l >= c) {
                return Err(DecodeError { offset: at, reason: "capability set not in canonical order".into() });
            }
            last = Some(c);
            caps.insert(c);
        }
        Ok(caps)
    }

    pub fn sem_type(&mut self, mode: Mode) -> Result<SemType, DecodeError> {
        self.enter()?;
        let kind = match self.u8()? {
            0 => TypeKind::UInt,
            1 => TypeKind::Int,
            2 => TypeKind::Unit,
            3 => TypeKind::Id,
            4 => TypeKind::Context(Box::new(self.sem_type(mode)?)),
            5 => TypeKind::Ref(Box::new(self.sem_type(mode)?)),
            6 => {
                let r = self.type_ref(mode)?;
                TypeKind::Adt(r, self.types(mode)?)
            }
            7 => {
                let i = self.u16()?;
                self.leave();
                return Ok(SemType::var(i));
            }
            8 => {
                let elems = self.types(mode)?;
                self.leave();
                return Ok(SemType::tuple(elems));
            }
            t => {
                self.pos -= 1;
                return self.err(format!("bad type tag {t}"));
            }
        };
        let caps = self.capset(mode)?;
        self.leave();
        Ok(SemType::new(kind, caps))
    }

    pub fn types(&mut self, mode: Mode) -> Result<Vec<SemType>, DecodeError> {
        let n = self.len(1)?;
        (0..n).map(|_| self.sem_type(mode)).collect()
    }

    fn risk(&mut self, mode: Mode) -> Result<Risk, DecodeError> {
        Ok(match self.u8()? {
            0 => Risk::NumericOverflow,
            1 => Risk::NumericUnderflow,
            2 => Risk::EmptyCell,
            3 => {
                let m = self.module_id(mode)?;
                Risk::Custom(m, self.str()?)
            }
            t => {
                self.pos -= 1;
                return self.err(format!("bad risk tag {t}"));
            }
        })
    }

    fn risks(&mut self, mode: Mode) -> Result<Vec<Risk>, DecodeError> {
        let n = self.len(1)?;
        let mut out: Vec<Risk> = Vec::with_capacity(n);
        for _ in 0..n {
            let at = self.offset();
            let r = self.risk(mode)?;
            if out.last().is_some_and(|l| *l >= r) {
                return Err(DecodeError { offset: at, reason: "risk set not in canonical order".into() });
            }
            out.push(r);
        }
        Ok(out)
    }

    fn slot(&mut self) -> Result<u16, DecodeError> {
        let s = self.u16()?;
        match self.locals {
            Some(n) if s < n => Ok(s),
            _ => {
                self.pos -= 2;
                self.err(format!("slot {s} out of range"))
            }
        }
    }

    fn slots(&mut self) -> Result<Vec<u16>, DecodeError> {
        let n = self.len(2)?;
        (0..n).map(|_| self.slot()).collect()
    }

    fn pat(&mut self) -> Result<Pat, DecodeError> {
        self.enter()?;
        let p = match self.u8()? {
            0 => Pat::Bind(self.slot()?),
            1 => {
                let ty = self.type_ref(Mode::Relative)?;
                let ctor = self.u16()?;
                let n = self.len(1)?;
                let fields = (0..n).map(|_| self.pat()).collect::<Result<_, _>>()?;
                Pat::Ctor { ty, ctor, fields }
            }
            2 => {
                let n = self.len(1)?;
                Pat::Tuple((0..n).map(|_| self.pat()).collect::<Result<_, _>>()?)
            }
            t => {
                self.pos -= 1;
                return self.err(format!("bad pattern tag {t}"));
            }
        };
        self.leave();
        Ok(p)
    }

    fn opt_fn(&mut self) -> Result<Option<FnRef>, DecodeError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.fn_ref(Mode::Relative)?)),
            _ => {
                self.pos -= 1;
                self.err("option tag out of range")
            }
        }
    }

    fn call_site(&mut self) -> Result<CallSite, DecodeError> {
        let func = self.fn_ref(Mode::Relative)?;
        let type_args = self.types(Mode::Relative)?;
        let args = self.nodes()?;
        Ok(CallSite { func, type_args, args })
    }

    fn nodes(&mut self) -> Result<Vec<Node>, DecodeError> {
        let n = self.len(1)?;
        (0..n).map(|_| self.node()).collect()
    }

    fn boxed(&mut self) -> Result<Box<Node>, DecodeError> {
        Ok(Box::new(self.node()?))
    }

    pub fn node(&mut self) -> Result<Node, DecodeError> {
        self.enter()?;
        let m = Mode::Relative;
        let n = match self.u8()? {
            0 => Node::Const(Const::UInt(self.u64()?)),
            1 => Node::Const(Const::Int(self.i64()?)),
            2 => Node::Const(Const::Unit),
            3 => Node::Move(self.slot()?),
            4 => Node::Copy(self.slot()?),
            5 => {
                let slots = self.slots()?;
                Node::Drop { slots, body: self.boxed()? }
            }
            6 => {
                let n = self.counts.vals;
                let (module, index) = self.item(m, Some(n), "val")?;
                Node::Val(ValRef { module, index })
            }
            7 => {
                let op = match self.u8()? {
                    0 => ArithOp::Add,
                    1 => ArithOp::Sub,
                    _ => {
                        self.pos -= 1;
                        return self.err("bad arithmetic operator");
                    }
                };
                Node::Arith { op, lhs: self.boxed()?, rhs: self.boxed()? }
            }
            8 => {
                let to = match self.u8()? {
                    0 => NumKind::UInt,
                    1 => NumKind::Int,
                    _ => {
                        self.pos -= 1;
                        return self.err("bad numeric kind");
                    }
                };
                Node::Coerce { to, operand: self.boxed()? }
            }
            9 => {
                let ty = self.type_ref(m)?;
                let type_args = self.types(m)?;
                let ctor = self.u16()?;
                Node::Construct { ty, type_args, ctor, fields: self.nodes()? }
            }
            10 => Node::Tuple(self.nodes()?),
            11 => {
                let pattern = self.pat()?;
                Node::Let { pattern, bound: self.boxed()?, body: self.boxed()? }
            }
            12 => {
                let scrutinee = self.boxed()?;
                let n = self.len(2)?;
                let mut arms = Vec::with_capacity(n);
                for _ in 0..n {
                    let pattern = self.pat()?;
                    arms.push(Arm { pattern, body: self.node()? });
                }
                Node::Match { scrutinee, arms }
            }
            13 => Node::Call(self.call_site()?),
            14 => {
                let call = self.call_site()?;
                let success_drops = self.slots()?;
                let n = self.len(2)?;
                let mut handlers = Vec::with_capacity(n);
                for _ in 0..n {
                    let risk = self.risk(m)?;
                    let binders = self.slots()?;
                    handlers.push(HandlerNode { risk, binders, body: self.node()? });
                }
                Node::Try { call, success_drops, handlers }
            }
            15 => {
                let reference = self.boxed()?;
                let binder = self.slot()?;
                let default = self.opt_fn()?;
                let returns = self.bool()?;
                Node::Modify { reference, binder, default, returns, body: self.boxed()? }
            }
            16 => Node::AndReturn { cell: self.boxed()?, result: self.boxed()? },
            17 => {
                let reference = self.boxed()?;
                Node::Read { reference, default: self.opt_fn()? }
            }
            18 => {
                let operand = self.boxed()?;
                Node::Attach { operand, cap: self.cap(m)? }
            }
            19 => {
                let operand = self.boxed()?;
                Node::Detach { operand, cap: self.cap(m)? }
            }
            20 => {
                let bound = self.u64()?;
                let init = self.boxed()?;
                let acc = self.slot()?;
                Node::Cycle { bound, init, acc, body: self.boxed()? }
            }
            21 => Node::Derive { context: self.boxed()?, id: self.boxed()? },
            22 => Node::NewId,
            23 => Node::NewContext { inner: self.sem_type(m)? },
            t => {
                self.pos -= 1;
                return self.err(format!("bad node tag {t}"));
            }
        };
        self.leave();
        Ok(n)
    }

    fn locals(&mut self) -> Result<Vec<SemType>, DecodeError> {
        let locals = self.types(Mode::Relative)?;
        self.locals = Some(locals.len() as u16);
        Ok(locals)
    }

    fn param(&mut self) -> Result<ParamDef, DecodeError> {
        let ty = self.sem_type(Mode::Relative)?;
        Ok(ParamDef { ty, pattern: self.pat()? })
    }

    fn finish(&self, what: &str) -> Result<(), DecodeError> {
        if !self.is_empty() {
            return self.err(format!("trailing bytes in {what} section"));
        }
        Ok(())
    }
}

/// Which module-reference encoding a reader expects.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Relative,
    Absolute,
}

fn split_section<'a>(r: &mut Reader<'a>) -> Result<Reader<'a>, DecodeError> {
    let len = r.u32()? as usize;
    let base = r.offset();
    let bytes = r.take(len)?;
    Ok(Reader { bytes, pos: 0, base, depth: 0, imports: vec![], counts: Counts::default(), locals: None })
}

fn peek_count(r: &Reader) -> u16 {
    if r.bytes.len() >= 2 {
        u16::from_le_bytes([r.bytes[0], r.bytes[1]])
    } else {
        0
    }
}

pub fn decode(bytes: &[u8]) -> Result<BytecodeModule, DecodeError> {
    let mut r = Reader::new(bytes);
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return r.err("bad magic");
    }
    r.take(4)?;
    let version = r.u16()?;
    if version != VERSION {
        r.pos -= 2;
        return r.err(format!("unsupported version {version}"));
    }
    let name = r.str()?;
    let mut sections = Vec::with_capacity(6);
    for _ in 0..6 {
        sections.push(split_section(&mut r)?);
    }
    if !r.is_empty() {
        return r.err("trailing bytes after last section");
    }
    let counts = Counts {
        types: peek_count(&sections[0]),
        caps: peek_count(&sections[1]),
        fns: peek_count(&sections[3]),
        vals: peek_count(&sections[4]),
    };

    // Imports first: every other section refers to them.
    let imports = {
        let s = &mut sections[2];
        let n = s.len(32)?;
        let mut imports: Vec<ModuleAddress> = Vec::with_capacity(n);
        for _ in 0..n {
            let at = s.offset();
            let a = ModuleAddress(s.array32()?);
            if imports.last().is_some_and(|l| *l >= a) {
                return Err(DecodeError { offset: at, reason: "import table not in canonical order".into() });
            }
            imports.push(a);
        }
        s.finish("imports")?;
        imports
    };
    for s in sections.iter_mut() {
        s.imports = imports.clone();
        s.counts = counts;
    }
    let mode = Mode::Relative;

    let types = {
        let s = &mut sections[0];
        let n = s.len(1)?;
        let mut types = Vec::with_capacity(n);
        for _ in 0..n {
            let name = s.str()?;
            let public = s.bool()?;
            let open = s.bool()?;
            let caps = s.capset(mode)?;
            let np = s.len(2)?;
            let type_params = (0..np).map(|_| s.str()).collect::<Result<_, _>>()?;
            let nc = s.len(2)?;
            let mut ctors = Vec::with_capacity(nc);
            for _ in 0..nc {
                let name = s.str()?;
                ctors.push(CtorDef { name, fields: s.types(mode)? });
            }
            types.push(TypeDef { name, public, open, caps, type_params, ctors });
        }
        s.finish("types")?;
        types
    };

    let caps = {
        let s = &mut sections[1];
        let n = s.len(3)?;
        let mut caps = Vec::with_capacity(n);
        for _ in 0..n {
            let name = s.str()?;
            caps.push(CapDef { name, open: s.bool()? });
        }
        s.finish("caps")?;
        caps
    };

    let functions = {
        let s = &mut sections[3];
        let n = s.len(1)?;
        let mut fns = Vec::with_capacity(n);
        for _ in 0..n {
            let name = s.str()?;
            let visibility = match s.u8()? {
                0 => Visibility::Public,
                1 => Visibility::Private,
                2 => Visibility::Protected(s.u16()?),
                t => {
                    s.pos -= 1;
                    return s.err(format!("bad visibility tag {t}"));
                }
            };
            let effect = match Effect::from_u8(s.u8()?) {
                Some(e) => e,
                None => {
                    s.pos -= 1;
                    return s.err("bad effect tag");
                }
            };
            let risks = s.risks(mode)?;
            let np = s.len(2)?;
            let type_params = (0..np).map(|_| s.str()).collect::<Result<_, _>>()?;
            let default_for = match s.u8()? {
                0 => None,
                1 => {
                    let t = s.u16()?;
                    if t >= counts.types {
                        s.pos -= 2;
                        return s.err("default type index out of range");
                    }
                    Some(t)
                }
                _ => {
                    s.pos -= 1;
                    return s.err("option tag out of range");
                }
            };
            let locals = s.locals()?;
            let nparams = s.len(2)?;
            let params = (0..nparams).map(|_| s.param()).collect::<Result<_, _>>()?;
            let ret = s.sem_type(mode)?;
            let body = s.node()?;
            s.locals = None;
            fns.push(FunctionDef { name, visibility, effect, risks, type_params, default_for, params, ret, locals, body });
        }
        s.finish("functions")?;
        fns
    };

    let vals = {
        let s = &mut sections[4];
        let n = s.len(1)?;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let name = s.str()?;
            let ty = s.sem_type(mode)?;
            let after_fns = s.u16()?;
            let locals = s.locals()?;
            let init = s.node()?;
            s.locals = None;
            vals.push(ValDef { name, ty, after_fns, locals, init });
        }
        s.finish("vals")?;
        vals
    };

    let init = {
        let s = &mut sections[5];
        let init = match s.u8()? {
            0 => None,
            1 => {
                let risks = s.risks(mode)?;
                let locals = s.locals()?;
                let param = s.param()?;
                let body = s.node()?;
                Some(InitDef { risks, param, locals, body })
            }
            _ => {
                s.pos -= 1;
                return s.err("option tag out of range");
            }
        };
        s.finish("init")?;
        init
    };

    Ok(BytecodeModule { name, imports, types, caps, functions, vals, init })
}

/// Reader over a standalone buffer using absolute module addresses.
pub fn absolute_reader(bytes: &[u8]) -> Reader<'_> {
    Reader::new(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BytecodeModule {
        let token = TypeRef::local(0);
        BytecodeModule {
            name: "T".into(),
            imports: vec![],
            types: vec![TypeDef {
                name: "Token".into(),
                public: false,
                open: false,
                caps: [Cap::Drop, Cap::Persist].into_iter().collect(),
                type_params: vec!["T".into()],
                ctors: vec![CtorDef { name: "Token".into(), fields: vec![SemType::uint()] }],
            }],
            caps: vec![],
            functions: vec![FunctionDef {
                name: "zero".into(),
                visibility: Visibility::Public,
                effect: Effect::Pure,
                risks: vec![],
                type_params: vec!["T".into()],
                default_for: Some(0),
                params: vec![],
                ret: SemType::new(
                    TypeKind::Adt(token, vec![SemType::var(0)]),
                    [Cap::Drop, Cap::Persist].into_iter().collect(),
                ),
                locals: vec![],
                body: Node::Construct {
                    ty: token,
                    type_args: vec![SemType::var(0)],
                    ctor: 0,
                    fields: vec![Node::Const(Const::UInt(0))],
                },
            }],
            vals: vec![],
            init: None,
        }
    }

    #[test]
    fn round_trip_sample() {
        let m = sample();
        let b = encode(&m);
        assert_eq!(decode(&b).unwrap(), m);
        assert_eq!(encode(&decode(&b).unwrap()), b);
    }

    #[test]
    fn empty_input_is_bad_magic() {
        let e = decode(&[]).unwrap_err();
        assert_eq!(e.reason, "bad magic");
    }

    #[test]
    fn empty_module_is_header_plus_empty_tables() {
        let m = BytecodeModule { name: "M".into(), ..Default::default() };
        let b = encode(&m);
        // magic + version + name + six sections
        assert_eq!(b.len(), 4 + 2 + 3 + (4 + 2) * 5 + (4 + 1));
        assert_eq!(decode(&b).unwrap(), m);
    }

    #[test]
    fn truncation_is_an_error_at_every_length() {
        let b = encode(&sample());
        for n in 0..b.len() {
            assert!(decode(&b[..n]).is_err(), "prefix of length {n} decoded");
        }
    }

    #[test]
    fn non_canonical_capset_is_rejected() {
        let mut w = Writer::new();
        w.u8(2);
        w.cap(&Cap::Persist, AddrMode::Absolute);
        w.cap(&Cap::Drop, AddrMode::Absolute);
        let mut r = Reader::new(&w.buf);
        assert!(r.capset(Mode::Absolute).is_err());
    }

    #[test]
    fn literal_change_changes_address() {
        let a = sample();
        let mut b = sample();
        b.functions[0].body = Node::Construct {
            ty: TypeRef::local(0),
            type_args: vec![SemType::var(0)],
            ctor: 0,
            fields: vec![Node::Const(Const::UInt(1))],
        };
        assert_ne!(address(&a), address(&b));
    }
}
