//! Typed instruction trees.
//!
//! Names survive only in declaration tables for diagnostics; every
//! reference inside code is an index. Slot uses are explicit: a binding is
//! consumed by exactly one `Move` or `Drop` on every path, and may be read
//! any number of times before that through `Copy`.

use std::collections::BTreeSet;

use crate::types::{Cap, CapSet, Effect, FnRef, ModuleAddress, ModuleId, Risk, SemType, TypeKind, TypeRef, ValRef, Visibility};

pub const MAGIC: &[u8; 4] = b"MDLC";
/// Bytecode format version. Version 1 fixes SHA-256 as the address digest
/// and the cost table in `validator::gas`.
pub const VERSION: u16 = 1;

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct BytecodeModule {
    pub name: String,
    /// Addresses of every module referenced, strictly ascending.
    pub imports: Vec<ModuleAddress>,
    pub types: Vec<TypeDef>,
    pub caps: Vec<CapDef>,
    pub functions: Vec<FunctionDef>,
    pub vals: Vec<ValDef>,
    pub init: Option<InitDef>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TypeDef {
    pub name: String,
    pub public: bool,
    pub open: bool,
    pub caps: CapSet,
    pub type_params: Vec<String>,
    pub ctors: Vec<CtorDef>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CtorDef {
    pub name: String,
    pub fields: Vec<SemType>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CapDef {
    pub name: String,
    pub open: bool,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FunctionDef {
    pub name: String,
    pub visibility: Visibility,
    pub effect: Effect,
    /// Sorted, without duplicates.
    pub risks: Vec<Risk>,
    pub type_params: Vec<String>,
    /// Index of the local type this function provides the default value for.
    pub default_for: Option<u16>,
    pub params: Vec<ParamDef>,
    pub ret: SemType,
    /// Type of every slot used by the body, parameters included.
    pub locals: Vec<SemType>,
    pub body: Node,
}

/// Everything a caller needs to know about a function.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FnSig {
    pub name: String,
    pub visibility: Visibility,
    pub effect: Effect,
    pub risks: Vec<Risk>,
    pub type_params: usize,
    pub default_for: Option<u16>,
    pub params: Vec<SemType>,
    pub ret: SemType,
}

impl FunctionDef {
    pub fn sig(&self) -> FnSig {
        FnSig {
            name: self.name.clone(),
            visibility: self.visibility,
            effect: self.effect,
            risks: self.risks.clone(),
            type_params: self.type_params.len(),
            default_for: self.default_for,
            params: self.params.iter().map(|p| p.ty.clone()).collect(),
            ret: self.ret.clone(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParamDef {
    /// For destructuring parameters the capabilities are a requirement only.
    pub ty: SemType,
    pub pattern: Pat,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValDef {
    pub name: String,
    pub ty: SemType,
    /// Number of functions declared before this val. The initializer may
    /// call only those; functions from that index on may read the val.
    pub after_fns: u16,
    pub locals: Vec<SemType>,
    pub init: Node,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InitDef {
    pub risks: Vec<Risk>,
    pub param: ParamDef,
    pub locals: Vec<SemType>,
    pub body: Node,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Const {
    UInt(u64),
    Int(i64),
    Unit,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ArithOp {
    Add,
    Sub,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NumKind {
    UInt,
    Int,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Pat {
    Bind(u16),
    /// Unpack an ADT value; the type arguments come from the scrutinee.
    Ctor { ty: TypeRef, ctor: u16, fields: Vec<Pat> },
    Tuple(Vec<Pat>),
}

impl Pat {
    pub fn slots(&self, out: &mut Vec<u16>) {
        match self {
            Pat::Bind(s) => out.push(*s),
            Pat::Ctor { fields, .. } => fields.iter().for_each(|f| f.slots(out)),
            Pat::Tuple(elems) => elems.iter().for_each(|f| f.slots(out)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CallSite {
    pub func: FnRef,
    pub type_args: Vec<SemType>,
    pub args: Vec<Node>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HandlerNode {
    pub risk: Risk,
    /// One slot per callee parameter, receiving the original arguments.
    pub binders: Vec<u16>,
    pub body: Node,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Arm {
    pub pattern: Pat,
    pub body: Node,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Node {
    Const(Const),
    Move(u16),
    Copy(u16),
    /// Discard the slots, then evaluate the body.
    Drop { slots: Vec<u16>, body: Box<Node> },
    Val(ValRef),
    Arith { op: ArithOp, lhs: Box<Node>, rhs: Box<Node> },
    /// Checked conversion between the two integer types.
    Coerce { to: NumKind, operand: Box<Node> },
    Construct { ty: TypeRef, type_args: Vec<SemType>, ctor: u16, fields: Vec<Node> },
    Tuple(Vec<Node>),
    Let { pattern: Pat, bound: Box<Node>, body: Box<Node> },
    Match { scrutinee: Box<Node>, arms: Vec<Arm> },
    Call(CallSite),
    Try { call: CallSite, success_drops: Vec<u16>, handlers: Vec<HandlerNode> },
    /// Replace the cell's content with the value of `body`, which runs with
    /// the old content bound to `binder`. With `returns`, every tail of the
    /// body is an `AndReturn` and the node yields its second component.
    Modify { reference: Box<Node>, binder: u16, default: Option<FnRef>, returns: bool, body: Box<Node> },
    AndReturn { cell: Box<Node>, result: Box<Node> },
    Read { reference: Box<Node>, default: Option<FnRef> },
    Attach { operand: Box<Node>, cap: Cap },
    Detach { operand: Box<Node>, cap: Cap },
    Cycle { bound: u64, init: Box<Node>, acc: u16, body: Box<Node> },
    Derive { context: Box<Node>, id: Box<Node> },
    NewId,
    NewContext { inner: SemType },
}

impl Node {
    /// Direct children in evaluation order (handlers and arms included).
    pub fn children(&self) -> Vec<&Node> {
        match self {
            Node::Const(_) | Node::Move(_) | Node::Copy(_) | Node::Val(_) | Node::NewId | Node::NewContext { .. } => {
                vec![]
            }
            Node::Drop { body, .. } => vec![body],
            Node::Arith { lhs, rhs, .. } => vec![lhs, rhs],
            Node::Coerce { operand, .. } | Node::Attach { operand, .. } | Node::Detach { operand, .. } => {
                vec![operand]
            }
            Node::Construct { fields, .. } => fields.iter().collect(),
            Node::Tuple(elems) => elems.iter().collect(),
            Node::Let { bound, body, .. } => vec![bound, body],
            Node::Match { scrutinee, arms } => {
                let mut v: Vec<&Node> = vec![scrutinee];
                v.extend(arms.iter().map(|a| &a.body));
                v
            }
            Node::Call(c) => c.args.iter().collect(),
            Node::Try { call, handlers, .. } => {
                let mut v: Vec<&Node> = call.args.iter().collect();
                v.extend(handlers.iter().map(|h| &h.body));
                v
            }
            Node::Modify { reference, body, .. } => vec![reference, body],
            Node::AndReturn { cell, result } => vec![cell, result],
            Node::Read { reference, .. } => vec![reference],
            Node::Cycle { init, body, .. } => vec![init, body],
            Node::Derive { context, id } => vec![context, id],
        }
    }

    /// Every call target in this tree, including defaults invoked by cell
    /// access.
    pub fn callees(&self, out: &mut Vec<FnRef>) {
        match self {
            Node::Call(c) => out.push(c.func),
            Node::Try { call, .. } => out.push(call.func),
            Node::Modify { default: Some(d), .. } | Node::Read { default: Some(d), .. } => out.push(*d),
            _ => {}
        }
        for c in self.children() {
            c.callees(out);
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }
}

impl BytecodeModule {
    pub fn function_index(&self, name: &str) -> Option<u16> {
        self.functions.iter().position(|f| f.name == name).map(|i| i as u16)
    }

    pub fn type_index(&self, name: &str) -> Option<u16> {
        self.types.iter().position(|t| t.name == name).map(|i| i as u16)
    }

    pub fn val_index(&self, name: &str) -> Option<u16> {
        self.vals.iter().position(|v| v.name == name).map(|i| i as u16)
    }

    pub fn cap_index(&self, name: &str) -> Option<u16> {
        self.caps.iter().position(|c| c.name == name).map(|i| i as u16)
    }

    /// The function registered as default for local type `ty`.
    pub fn default_for(&self, ty: u16) -> Option<u16> {
        self.functions.iter().position(|f| f.default_for == Some(ty)).map(|i| i as u16)
    }
}

/// Every foreign module address mentioned anywhere in a module.
#[derive(Default)]
pub struct RefCollector {
    pub addrs: BTreeSet<ModuleAddress>,
}

impl RefCollector {
    fn id(&mut self, m: ModuleId) {
        if let ModuleId::Addr(a) = m {
            self.addrs.insert(a);
        }
    }

    pub fn cap(&mut self, c: &Cap) {
        if let Cap::User(r) = c {
            self.id(r.module);
        }
    }

    pub fn ty(&mut self, t: &SemType) {
        t.caps.iter().for_each(|c| self.cap(c));
        match &t.kind {
            TypeKind::Context(i) | TypeKind::Ref(i) => self.ty(i),
            TypeKind::Adt(r, args) => {
                self.id(r.module);
                args.iter().for_each(|a| self.ty(a));
            }
            TypeKind::Tuple(elems) => elems.iter().for_each(|a| self.ty(a)),
            _ => {}
        }
    }

    pub fn risk(&mut self, r: &Risk) {
        if let Risk::Custom(m, _) = r {
            self.id(*m);
        }
    }

    pub fn pat(&mut self, p: &Pat) {
        match p {
            Pat::Bind(_) => {}
            Pat::Ctor { ty, fields, .. } => {
                self.id(ty.module);
                fields.iter().for_each(|f| self.pat(f));
            }
            Pat::Tuple(elems) => elems.iter().for_each(|f| self.pat(f)),
        }
    }

    fn call(&mut self, c: &CallSite) {
        self.id(c.func.module);
        c.type_args.iter().for_each(|t| self.ty(t));
    }

    pub fn node(&mut self, n: &Node) {
        match n {
            Node::Val(v) => self.id(v.module),
            Node::Construct { ty, type_args, .. } => {
                self.id(ty.module);
                type_args.iter().for_each(|t| self.ty(t));
            }
            Node::Let { pattern, .. } => self.pat(pattern),
            Node::Match { arms, .. } => arms.iter().for_each(|a| self.pat(&a.pattern)),
            Node::Call(c) => self.call(c),
            Node::Try { call, handlers, .. } => {
                self.call(call);
                handlers.iter().for_each(|h| self.risk(&h.risk));
            }
            Node::Modify { default: Some(d), .. } | Node::Read { default: Some(d), .. } => self.id(d.module),
            Node::Attach { cap, .. } | Node::Detach { cap, .. } => self.cap(cap),
            Node::NewContext { inner } => self.ty(inner),
            _ => {}
        }
        n.children().into_iter().for_each(|c| self.node(c));
    }

    pub fn module(&mut self, m: &BytecodeModule) {
        for t in &m.types {
            t.caps.iter().for_each(|c| self.cap(c));
            t.ctors.iter().flat_map(|c| &c.fields).for_each(|f| self.ty(f));
        }
        for f in &m.functions {
            f.risks.iter().for_each(|r| self.risk(r));
            f.params.iter().for_each(|p| {
                self.ty(&p.ty);
                self.pat(&p.pattern);
            });
            self.ty(&f.ret);
            f.locals.iter().for_each(|t| self.ty(t));
            self.node(&f.body);
        }
        for v in &m.vals {
            self.ty(&v.ty);
            v.locals.iter().for_each(|t| self.ty(t));
            self.node(&v.init);
        }
        if let Some(i) = &m.init {
            i.risks.iter().for_each(|r| self.risk(r));
            self.ty(&i.param.ty);
            self.pat(&i.param.pattern);
            i.locals.iter().for_each(|t| self.ty(t));
            self.node(&i.body);
        }
    }
}

impl BytecodeModule {
    /// Sorted addresses of all modules this one refers to.
    pub fn referenced_modules(&self) -> Vec<ModuleAddress> {
        let mut c = RefCollector::default();
        c.module(self);
        c.addrs.into_iter().collect()
    }
}
