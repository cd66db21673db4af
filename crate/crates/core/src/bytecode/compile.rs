//! Lowering of the typed tree to bytecode.

use crate::bytecode::ir::*;
use crate::sema::typed::*;

pub fn compile(tm: &TypedModule) -> BytecodeModule {
    let mut m = BytecodeModule {
        name: tm.name.clone(),
        imports: Vec::new(),
        types: tm.types.clone(),
        caps: tm.caps.clone(),
        functions: tm.functions.iter().map(function).collect(),
        vals: tm
            .vals
            .iter()
            .map(|v| ValDef {
                name: v.name.clone(),
                ty: v.ty.clone(),
                after_fns: v.after_fns,
                locals: locals(&v.locals),
                init: node(&v.init),
            })
            .collect(),
        init: tm.init.as_ref().map(|i| InitDef {
            risks: i.risks.clone(),
            param: param(&i.param),
            locals: locals(&i.locals),
            body: node(&i.body),
        }),
    };
    m.imports = m.referenced_modules();
    m
}

fn locals(ls: &[LocalInfo]) -> Vec<crate::types::SemType> {
    ls.iter().map(|l| l.ty.clone()).collect()
}

fn param(p: &TParam) -> ParamDef {
    ParamDef { ty: p.ty.clone(), pattern: p.pattern.to_pat() }
}

fn function(f: &TypedFunction) -> FunctionDef {
    FunctionDef {
        name: f.name.clone(),
        visibility: f.visibility,
        effect: f.effect,
        risks: f.risks.clone(),
        type_params: f.type_params.clone(),
        default_for: f.default_for,
        params: f.params.iter().map(param).collect(),
        ret: f.ret.clone(),
        locals: locals(&f.locals),
        body: node(&f.body),
    }
}

fn call(c: &TCall) -> CallSite {
    CallSite { func: c.func, type_args: c.type_args.clone(), args: c.args.iter().map(node).collect() }
}

fn bx(e: &TExpr) -> Box<Node> {
    Box::new(node(e))
}

pub fn node(e: &TExpr) -> Node {
    match &e.kind {
        TKind::Const(c) => Node::Const(*c),
        TKind::Local(s, Use::Move) => Node::Move(*s),
        TKind::Local(s, Use::Copy) => Node::Copy(*s),
        TKind::Drop { slots, body } => Node::Drop { slots: slots.clone(), body: bx(body) },
        TKind::Val(v) => Node::Val(*v),
        TKind::Arith { op, lhs, rhs } => Node::Arith { op: *op, lhs: bx(lhs), rhs: bx(rhs) },
        TKind::Coerce { to, operand } => Node::Coerce { to: *to, operand: bx(operand) },
        TKind::Construct { ty, type_args, ctor, fields } => Node::Construct {
            ty: *ty,
            type_args: type_args.clone(),
            ctor: *ctor,
            fields: fields.iter().map(node).collect(),
        },
        TKind::Tuple(elems) => Node::Tuple(elems.iter().map(node).collect()),
        TKind::Let { pattern, bound, body } => Node::Let { pattern: pattern.to_pat(), bound: bx(bound), body: bx(body) },
        TKind::Match { scrutinee, arms } => Node::Match {
            scrutinee: bx(scrutinee),
            arms: arms.iter().map(|a| Arm { pattern: a.pattern.to_pat(), body: node(&a.body) }).collect(),
        },
        TKind::Call(c) => Node::Call(call(c)),
        TKind::Try { call: c, success_drops, handlers } => Node::Try {
            call: call(c),
            success_drops: success_drops.clone(),
            handlers: handlers
                .iter()
                .map(|h| HandlerNode { risk: h.risk.clone(), binders: h.binders.clone(), body: node(&h.body) })
                .collect(),
        },
        TKind::Modify { reference, binder, default, returns, body } => Node::Modify {
            reference: bx(reference),
            binder: *binder,
            default: *default,
            returns: *returns,
            body: bx(body),
        },
        TKind::AndReturn { cell, result } => Node::AndReturn { cell: bx(cell), result: bx(result) },
        TKind::Read { reference, default } => Node::Read { reference: bx(reference), default: *default },
        TKind::Attach { operand, cap } => Node::Attach { operand: bx(operand), cap: *cap },
        TKind::Detach { operand, cap } => Node::Detach { operand: bx(operand), cap: *cap },
        TKind::Cycle { bound, init, acc, body } => Node::Cycle { bound: *bound, init: bx(init), acc: *acc, body: bx(body) },
        TKind::Derive { context, id } => Node::Derive { context: bx(context), id: bx(id) },
        TKind::NewId => Node::NewId,
        TKind::NewContext { inner } => Node::NewContext { inner: inner.clone() },
    }
}
