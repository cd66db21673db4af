//! Runtime values and their canonical encoding.

use sha2::{Digest, Sha256};

use crate::bytecode::codec::{AddrMode, DecodeError, Mode, Reader, Writer};
use crate::registry::Registry;
use crate::types::{Cap, CapSet, ModuleId, SemType, TypeKind, TypeRef};

pub type Hash32 = [u8; 32];

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ValueKind {
    UInt(u64),
    Int(i64),
    Unit,
    Id(Hash32),
    Context { id: Hash32, inner: SemType },
    Ref { key: Hash32, inner: SemType },
    /// `ty` and `targs` always use absolute module addresses.
    Adt { ty: TypeRef, targs: Vec<SemType>, ctor: u16, fields: Vec<Value> },
    Tuple(Vec<Value>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Value {
    pub kind: ValueKind,
    pub caps: CapSet,
}

fn sha(parts: &[&[u8]]) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Identity bound to a signer name.
pub fn external_id(name: &str) -> Hash32 {
    sha(&[b"external:", name.as_bytes()])
}

/// The `n`th fresh identity of a transaction.
pub fn fresh_id(tx: &Hash32, n: u64) -> Hash32 {
    sha(&[b"fresh:", tx, &n.to_le_bytes()])
}

pub fn cell_key(context: &Hash32, id: &Hash32) -> Hash32 {
    sha(&[context, id])
}

impl Value {
    pub fn new(kind: ValueKind, caps: CapSet) -> Self {
        Value { kind, caps }
    }

    pub fn uint(n: u64) -> Self {
        Value::new(ValueKind::UInt(n), CapSet::structural())
    }

    pub fn int(n: i64) -> Self {
        Value::new(ValueKind::Int(n), CapSet::structural())
    }

    pub fn unit() -> Self {
        Value::new(ValueKind::Unit, CapSet::structural())
    }

    pub fn id(bytes: Hash32, master: bool) -> Self {
        let caps = if master { CapSet::structural().with(Cap::Master) } else { CapSet::structural() };
        Value::new(ValueKind::Id(bytes), caps)
    }

    pub fn tuple(elems: Vec<Value>) -> Self {
        let mut caps = CapSet::structural();
        for e in &elems {
            caps = caps.intersection(&e.caps);
        }
        Value::new(ValueKind::Tuple(elems), caps.structural_part())
    }

    /// The most precise static type describing this value.
    pub fn ty(&self) -> SemType {
        let kind = match &self.kind {
            ValueKind::UInt(_) => TypeKind::UInt,
            ValueKind::Int(_) => TypeKind::Int,
            ValueKind::Unit => TypeKind::Unit,
            ValueKind::Id(_) => TypeKind::Id,
            ValueKind::Context { inner, .. } => TypeKind::Context(Box::new(inner.clone())),
            ValueKind::Ref { inner, .. } => TypeKind::Ref(Box::new(inner.clone())),
            ValueKind::Adt { ty, targs, .. } => TypeKind::Adt(*ty, targs.clone()),
            ValueKind::Tuple(elems) => return SemType::tuple(elems.iter().map(Value::ty).collect()),
        };
        SemType::new(kind, self.caps.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_value(&mut w, self);
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Value, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = read_value(&mut r, 0)?;
        if !r.is_empty() {
            return r.err("trailing bytes after value");
        }
        Ok(v)
    }

    /// Visit this value and every value nested in it.
    pub fn walk(&self, f: &mut impl FnMut(&Value)) {
        f(self);
        match &self.kind {
            ValueKind::Adt { fields: vs, .. } | ValueKind::Tuple(vs) => vs.iter().for_each(|v| v.walk(f)),
            _ => {}
        }
    }
}

pub fn write_value(w: &mut Writer, v: &Value) {
    match &v.kind {
        ValueKind::UInt(n) => {
            w.u8(0);
            w.u64(*n);
        }
        ValueKind::Int(n) => {
            w.u8(1);
            w.i64(*n);
        }
        ValueKind::Unit => w.u8(2),
        ValueKind::Id(b) => {
            w.u8(3);
            w.bytes(b);
        }
        ValueKind::Context { id, inner } => {
            w.u8(4);
            w.bytes(id);
            w.sem_type(inner, AddrMode::Absolute);
        }
        ValueKind::Ref { key, inner } => {
            w.u8(5);
            w.bytes(key);
            w.sem_type(inner, AddrMode::Absolute);
        }
        ValueKind::Adt { ty, targs, ctor, fields } => {
            w.u8(6);
            w.item(ty.module, ty.index, AddrMode::Absolute);
            w.types(targs, AddrMode::Absolute);
            w.u16(*ctor);
            w.len16(fields.len());
            fields.iter().for_each(|f| write_value(w, f));
        }
        ValueKind::Tuple(elems) => {
            w.u8(7);
            w.len16(elems.len());
            elems.iter().for_each(|f| write_value(w, f));
        }
    }
    w.capset(&v.caps, AddrMode::Absolute);
}

const MAX_DEPTH: usize = 200;

pub fn read_value(r: &mut Reader, depth: usize) -> Result<Value, DecodeError> {
    if depth > MAX_DEPTH {
        return r.err("value nested too deeply");
    }
    let list = |r: &mut Reader| -> Result<Vec<Value>, DecodeError> {
        let n = r.u16()?;
        (0..n).map(|_| read_value(r, depth + 1)).collect()
    };
    let kind = match r.u8()? {
        0 => ValueKind::UInt(r.u64()?),
        1 => ValueKind::Int(r.i64()?),
        2 => ValueKind::Unit,
        3 => ValueKind::Id(r.array32()?),
        4 => ValueKind::Context { id: r.array32()?, inner: r.sem_type(Mode::Absolute)? },
        5 => ValueKind::Ref { key: r.array32()?, inner: r.sem_type(Mode::Absolute)? },
        6 => {
            let module = r.module_id(Mode::Absolute)?;
            let index = r.u16()?;
            let targs = r.types(Mode::Absolute)?;
            let ctor = r.u16()?;
            ValueKind::Adt { ty: TypeRef { module, index }, targs, ctor, fields: list(r)? }
        }
        7 => ValueKind::Tuple(list(r)?),
        t => return r.err(format!("bad value tag {t}")),
    };
    let caps = r.capset(Mode::Absolute)?;
    Ok(Value { kind, caps })
}

fn short(b: &Hash32) -> String {
    hex::encode(&b[..4])
}

/// Human-readable type, without capabilities.
pub fn render_type(t: &SemType, registry: &dyn Registry) -> String {
    match &t.kind {
        TypeKind::UInt => "UInt".into(),
        TypeKind::Int => "Int".into(),
        TypeKind::Unit => "()".into(),
        TypeKind::Id => "ID".into(),
        TypeKind::Context(i) => format!("Context[{}]", render_type(i, registry)),
        TypeKind::Ref(i) => format!("Ref[{}]", render_type(i, registry)),
        TypeKind::Var(i) => format!("'{i}"),
        TypeKind::Tuple(elems) => {
            format!("({})", elems.iter().map(|e| render_type(e, registry)).collect::<Vec<_>>().join(", "))
        }
        TypeKind::Adt(r, args) => {
            let name = type_name(*r, registry);
            if args.is_empty() {
                name
            } else {
                format!("{name}[{}]", args.iter().map(|a| render_type(a, registry)).collect::<Vec<_>>().join(", "))
            }
        }
    }
}

fn type_name(r: TypeRef, registry: &dyn Registry) -> String {
    match r.module {
        ModuleId::Addr(a) => registry
            .module(&a)
            .and_then(|m| m.types.get(r.index as usize))
            .map(|t| t.name.clone())
            .unwrap_or_else(|| format!("{}#{}", a.short(), r.index)),
        ModuleId::Local => format!("#{}", r.index),
    }
}

/// `Token[MyToken](100000000)`, `(a, b)`, `ID(1a2b3c4d)`.
pub fn render(v: &Value, registry: &dyn Registry) -> String {
    match &v.kind {
        ValueKind::UInt(n) => n.to_string(),
        ValueKind::Int(n) => n.to_string(),
        ValueKind::Unit => "()".into(),
        ValueKind::Id(b) => format!("ID({})", short(b)),
        ValueKind::Context { id, .. } => format!("Context({})", short(id)),
        ValueKind::Ref { key, .. } => format!("Ref({})", short(key)),
        ValueKind::Tuple(elems) => {
            format!("({})", elems.iter().map(|e| render(e, registry)).collect::<Vec<_>>().join(", "))
        }
        ValueKind::Adt { ty, targs, ctor, fields } => {
            let name = match ty.module {
                ModuleId::Addr(a) => registry
                    .module(&a)
                    .and_then(|m| m.types.get(ty.index as usize))
                    .and_then(|t| t.ctors.get(*ctor as usize))
                    .map(|c| c.name.clone()),
                ModuleId::Local => None,
            }
            .unwrap_or_else(|| type_name(*ty, registry));
            let mut s = name;
            if !targs.is_empty() {
                s.push('[');
                s.push_str(&targs.iter().map(|a| render_type(a, registry)).collect::<Vec<_>>().join(", "));
                s.push(']');
            }
            if !fields.is_empty() {
                s.push('(');
                s.push_str(&fields.iter().map(|f| render(f, registry)).collect::<Vec<_>>().join(", "));
                s.push(')');
            }
            s
        }
    }
}
