//! Use counting. A backward liveness walk marks the last use of every slot
//! as a move and earlier uses as copies, and inserts explicit drops for
//! bindings that die unused on some path.

use std::collections::BTreeSet;

use crate::sema::diag::{codes, Diagnostic, Diags};
use crate::sema::env::Universe;
use crate::sema::typed::*;
use crate::syntax::ast::Span;
use crate::types::{Cap, ModuleId, TypeKind};

pub fn check(tm: &mut TypedModule, univ: &Universe) -> Diags {
    let mut diags = Vec::new();
    for f in &mut tm.functions {
        let params: Vec<&TPat> = f.params.iter().map(|p| &p.pattern).collect();
        body(univ, &f.locals, &params, &mut f.body, &mut diags);
    }
    for v in &mut tm.vals {
        body(univ, &v.locals, &[], &mut v.init, &mut diags);
    }
    if let Some(i) = &mut tm.init {
        body(univ, &i.locals, &[&i.param.pattern], &mut i.body, &mut diags);
    }
    diags
}

fn body(univ: &Universe, locals: &[LocalInfo], params: &[&TPat], e: &mut TExpr, diags: &mut Diags) {
    let mut lin = Lin { univ, locals, diags };
    for p in params {
        lin.inspect(p);
    }
    let mut live = BTreeSet::new();
    lin.expr(e, &mut live);
    let mut slots = Vec::new();
    params.iter().for_each(|p| p.slots(&mut slots));
    let unused: Vec<u16> = slots.into_iter().filter(|s| !live.contains(s)).collect();
    lin.drop_unused(&unused);
    wrap_drop(e, unused);
}

fn wrap_drop(e: &mut TExpr, mut slots: Vec<u16>) {
    if slots.is_empty() {
        return;
    }
    slots.sort();
    let inner = std::mem::replace(e, TExpr::new(e.ty.clone(), e.span, TKind::NewId));
    *e = TExpr::new(inner.ty.clone(), inner.span, TKind::Drop { slots, body: Box::new(inner) });
}

struct Lin<'a, 'r> {
    univ: &'a Universe<'r>,
    locals: &'a [LocalInfo],
    diags: &'a mut Diags,
}

impl Lin<'_, '_> {
    fn name(&self, s: u16) -> String {
        let n = &self.locals[s as usize].name;
        if n == "_" {
            "wildcard".to_string()
        } else {
            format!("`{n}`")
        }
    }

    /// Bindings that die without any use need Drop.
    fn drop_unused(&mut self, slots: &[u16]) {
        for &s in slots {
            let l = &self.locals[s as usize];
            if !l.ty.caps.has_drop() {
                self.diags.push(Diagnostic::new(
                    codes::LIN_DROP,
                    l.span,
                    format!("{} is never used and `{}` lacks Drop", self.name(s), self.univ.show(&l.ty)),
                ));
            }
        }
    }

    /// Bindings consumed on another branch but not on this one.
    fn drop_unbalanced(&mut self, slots: &[u16], branch: Span) {
        for &s in slots {
            let l = &self.locals[s as usize];
            if !l.ty.caps.has_drop() {
                self.diags.push(
                    Diagnostic::new(
                        codes::LIN_DROP,
                        branch,
                        format!(
                            "{} is consumed on another branch but not on this one, and `{}` lacks Drop",
                            self.name(s),
                            self.univ.show(&l.ty)
                        ),
                    )
                    .with_related(l.span),
                );
            }
        }
    }

    fn inspect(&mut self, p: &TPat) {
        match p {
            TPat::Bind(_) => {}
            TPat::Tuple(elems) => elems.iter().for_each(|e| self.inspect(e)),
            TPat::Ctor { ty, fields, matched, span, .. } => {
                if ty.module != ModuleId::Local && !matched.caps.contains(&Cap::Inspect) {
                    self.diags.push(Diagnostic::new(
                        codes::INSPECT,
                        *span,
                        format!("cannot unpack `{}`: it is defined in another module and lacks Inspect", self.univ.show(matched)),
                    ));
                }
                fields.iter().for_each(|e| self.inspect(e));
            }
        }
    }

    /// Bind the slots of `pat` around `body`: unused ones are dropped at
    /// the start of the body and removed from `live`.
    fn scope(&mut self, slots: &[u16], body: &mut TExpr, live: &mut BTreeSet<u16>) {
        let unused: Vec<u16> = slots.iter().copied().filter(|s| !live.contains(s)).collect();
        self.drop_unused(&unused);
        wrap_drop(body, unused);
        for s in slots {
            live.remove(s);
        }
    }

    /// `live` holds the slots used after `e`; on return, those used from
    /// the start of `e` on.
    fn expr(&mut self, e: &mut TExpr, live: &mut BTreeSet<u16>) {
        let span = e.span;
        match &mut e.kind {
            TKind::Const(_) | TKind::Val(_) | TKind::NewId | TKind::NewContext { .. } => {}
            TKind::Local(slot, u) => {
                if live.contains(slot) {
                    *u = Use::Copy;
                    let l = &self.locals[*slot as usize];
                    if !l.ty.caps.has_copy() {
                        self.diags.push(
                            Diagnostic::new(
                                codes::LIN_COPY,
                                span,
                                format!("{} is used more than once but `{}` lacks Copy", self.name(*slot), self.univ.show(&l.ty)),
                            )
                            .with_related(l.span),
                        );
                    }
                } else {
                    *u = Use::Move;
                    live.insert(*slot);
                }
            }
            TKind::Drop { body, .. } => self.expr(body, live),
            TKind::Arith { lhs, rhs, .. } => {
                self.expr(rhs, live);
                self.expr(lhs, live);
            }
            TKind::Coerce { operand, .. } | TKind::Attach { operand, .. } | TKind::Detach { operand, .. } => {
                self.expr(operand, live)
            }
            TKind::Construct { fields, .. } | TKind::Tuple(fields) => {
                fields.iter_mut().rev().for_each(|f| self.expr(f, live))
            }
            TKind::Let { pattern, bound, body } => {
                self.inspect(pattern);
                self.expr(body, live);
                let mut slots = Vec::new();
                pattern.slots(&mut slots);
                self.scope(&slots, body, live);
                self.expr(bound, live);
            }
            TKind::Match { scrutinee, arms } => {
                let after = live.clone();
                let mut ins = Vec::new();
                for a in arms.iter_mut() {
                    self.inspect(&a.pattern);
                    let mut l = after.clone();
                    self.expr(&mut a.body, &mut l);
                    let mut slots = Vec::new();
                    a.pattern.slots(&mut slots);
                    self.scope(&slots, &mut a.body, &mut l);
                    ins.push(l);
                }
                let union: BTreeSet<u16> = ins.iter().flatten().copied().collect();
                for (a, l) in arms.iter_mut().zip(&ins) {
                    let extra: Vec<u16> = union.difference(l).copied().collect();
                    self.drop_unbalanced(&extra, a.span);
                    wrap_drop(&mut a.body, extra);
                }
                *live = union;
                self.expr(scrutinee, live);
            }
            TKind::Call(c) => c.args.iter_mut().rev().for_each(|a| self.expr(a, live)),
            TKind::Try { call, success_drops, handlers } => {
                let after = live.clone();
                let mut ins = Vec::new();
                for h in handlers.iter_mut() {
                    let mut l = after.clone();
                    self.expr(&mut h.body, &mut l);
                    let binders = h.binders.clone();
                    self.scope(&binders, &mut h.body, &mut l);
                    ins.push(l);
                }
                let union: BTreeSet<u16> = ins.iter().flatten().chain(after.iter()).copied().collect();
                let extra: Vec<u16> = union.difference(&after).copied().collect();
                self.drop_unbalanced(&extra, span);
                *success_drops = extra;
                for (h, l) in handlers.iter_mut().zip(&ins) {
                    let extra: Vec<u16> = union.difference(l).copied().collect();
                    self.drop_unbalanced(&extra, h.span);
                    wrap_drop(&mut h.body, extra);
                }
                *live = union;
                call.args.iter_mut().rev().for_each(|a| self.expr(a, live));
            }
            TKind::Modify { reference, binder, body, .. } => {
                self.expr(body, live);
                let b = *binder;
                self.scope(&[b], body, live);
                self.expr(reference, live);
            }
            TKind::AndReturn { cell, result } => {
                self.expr(result, live);
                self.expr(cell, live);
            }
            TKind::Read { reference, .. } => {
                if let TypeKind::Ref(inner) = &reference.ty.kind {
                    if !inner.caps.has_copy() {
                        self.diags.push(Diagnostic::new(
                            codes::LIN_COPY,
                            span,
                            format!("read copies the cell content, but `{}` lacks Copy", self.univ.show(inner)),
                        ));
                    }
                }
                self.expr(reference, live);
            }
            TKind::Cycle { init, acc, body, .. } => {
                let mut l = BTreeSet::new();
                self.expr(body, &mut l);
                let a = *acc;
                self.scope(&[a], body, &mut l);
                self.expr(init, live);
            }
            TKind::Derive { context, id } => {
                self.expr(id, live);
                self.expr(context, live);
            }
        }
    }
}
