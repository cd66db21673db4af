//! Elaborated program: the bytecode tree plus types and source positions.

use crate::bytecode::{ArithOp, CapDef, Const, NumKind, Pat, TypeDef};
use crate::syntax::ast::Span;
use crate::types::{Cap, Effect, FnRef, Risk, SemType, TypeRef, ValRef, Visibility};

#[derive(Clone, Debug)]
pub struct LocalInfo {
    pub name: String,
    pub ty: SemType,
    pub span: Span,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Use {
    Move,
    Copy,
}

#[derive(Clone, Debug)]
pub enum TPat {
    Bind(u16),
    /// `matched` is the type of the value being unpacked.
    Ctor { ty: TypeRef, ctor: u16, fields: Vec<TPat>, matched: SemType, span: Span },
    Tuple(Vec<TPat>),
}

impl TPat {
    pub fn slots(&self, out: &mut Vec<u16>) {
        match self {
            TPat::Bind(s) => out.push(*s),
            TPat::Ctor { fields, .. } | TPat::Tuple(fields) => fields.iter().for_each(|f| f.slots(out)),
        }
    }

    pub fn to_pat(&self) -> Pat {
        match self {
            TPat::Bind(s) => Pat::Bind(*s),
            TPat::Ctor { ty, ctor, fields, .. } => {
                Pat::Ctor { ty: *ty, ctor: *ctor, fields: fields.iter().map(|f| f.to_pat()).collect() }
            }
            TPat::Tuple(elems) => Pat::Tuple(elems.iter().map(|f| f.to_pat()).collect()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TCall {
    pub func: FnRef,
    pub type_args: Vec<SemType>,
    pub args: Vec<TExpr>,
}

#[derive(Clone, Debug)]
pub struct THandler {
    pub risk: Risk,
    pub binders: Vec<u16>,
    pub body: TExpr,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct TArm {
    pub pattern: TPat,
    pub body: TExpr,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct TExpr {
    pub ty: SemType,
    pub span: Span,
    pub kind: TKind,
}

#[derive(Clone, Debug)]
pub enum TKind {
    Const(Const),
    Local(u16, Use),
    Drop { slots: Vec<u16>, body: Box<TExpr> },
    Val(ValRef),
    Arith { op: ArithOp, lhs: Box<TExpr>, rhs: Box<TExpr> },
    Coerce { to: NumKind, operand: Box<TExpr> },
    Construct { ty: TypeRef, type_args: Vec<SemType>, ctor: u16, fields: Vec<TExpr> },
    Tuple(Vec<TExpr>),
    Let { pattern: TPat, bound: Box<TExpr>, body: Box<TExpr> },
    Match { scrutinee: Box<TExpr>, arms: Vec<TArm> },
    Call(TCall),
    Try { call: TCall, success_drops: Vec<u16>, handlers: Vec<THandler> },
    Modify { reference: Box<TExpr>, binder: u16, default: Option<FnRef>, returns: bool, body: Box<TExpr> },
    AndReturn { cell: Box<TExpr>, result: Box<TExpr> },
    Read { reference: Box<TExpr>, default: Option<FnRef> },
    Attach { operand: Box<TExpr>, cap: Cap },
    Detach { operand: Box<TExpr>, cap: Cap },
    Cycle { bound: u64, init: Box<TExpr>, acc: u16, body: Box<TExpr> },
    Derive { context: Box<TExpr>, id: Box<TExpr> },
    NewId,
    NewContext { inner: SemType },
}

impl TExpr {
    pub fn new(ty: SemType, span: Span, kind: TKind) -> Self {
        TExpr { ty, span, kind }
    }

    /// Visit every sub-expression, this one first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a TExpr)) {
        f(self);
        match &self.kind {
            TKind::Const(_) | TKind::Local(..) | TKind::Val(_) | TKind::NewId | TKind::NewContext { .. } => {}
            TKind::Drop { body, .. } => body.walk(f),
            TKind::Arith { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            TKind::Coerce { operand, .. } | TKind::Attach { operand, .. } | TKind::Detach { operand, .. } => {
                operand.walk(f)
            }
            TKind::Construct { fields, .. } | TKind::Tuple(fields) => fields.iter().for_each(|e| e.walk(f)),
            TKind::Let { bound, body, .. } => {
                bound.walk(f);
                body.walk(f);
            }
            TKind::Match { scrutinee, arms } => {
                scrutinee.walk(f);
                arms.iter().for_each(|a| a.body.walk(f));
            }
            TKind::Call(c) => c.args.iter().for_each(|e| e.walk(f)),
            TKind::Try { call, handlers, .. } => {
                call.args.iter().for_each(|e| e.walk(f));
                handlers.iter().for_each(|h| h.body.walk(f));
            }
            TKind::Modify { reference, body, .. } => {
                reference.walk(f);
                body.walk(f);
            }
            TKind::AndReturn { cell, result } => {
                cell.walk(f);
                result.walk(f);
            }
            TKind::Read { reference, .. } => reference.walk(f),
            TKind::Cycle { init, body, .. } => {
                init.walk(f);
                body.walk(f);
            }
            TKind::Derive { context, id } => {
                context.walk(f);
                id.walk(f);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TParam {
    pub ty: SemType,
    pub pattern: TPat,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct TypedFunction {
    pub name: String,
    pub span: Span,
    pub visibility: Visibility,
    pub effect: Effect,
    /// Sorted, without duplicates.
    pub risks: Vec<Risk>,
    pub type_params: Vec<String>,
    pub default_for: Option<u16>,
    pub params: Vec<TParam>,
    pub ret: SemType,
    pub locals: Vec<LocalInfo>,
    pub body: TExpr,
}

#[derive(Clone, Debug)]
pub struct TypedVal {
    pub name: String,
    pub span: Span,
    pub ty: SemType,
    pub after_fns: u16,
    pub locals: Vec<LocalInfo>,
    pub init: TExpr,
}

#[derive(Clone, Debug)]
pub struct TypedInit {
    pub span: Span,
    pub risks: Vec<Risk>,
    pub param: TParam,
    pub locals: Vec<LocalInfo>,
    pub body: TExpr,
}

#[derive(Clone, Debug)]
pub struct TypedModule {
    pub name: String,
    pub types: Vec<TypeDef>,
    /// Source position of each type declaration.
    pub type_spans: Vec<Span>,
    pub caps: Vec<CapDef>,
    pub functions: Vec<TypedFunction>,
    pub vals: Vec<TypedVal>,
    pub init: Option<TypedInit>,
}
