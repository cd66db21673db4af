//! Effect lattice and risk propagation.

use std::collections::BTreeSet;

use crate::sema::diag::{codes, Diagnostic, Diags};
use crate::sema::env::Universe;
use crate::sema::rules::{arith_risks, coerce_risk, num_kind};
use crate::sema::typed::*;
use crate::syntax::ast::Span;
use crate::types::{Effect, FnRef, Risk};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fn,
    Val,
}

pub fn check(tm: &TypedModule, univ: &Universe) -> Diags {
    let mut diags = Vec::new();
    for f in &tm.functions {
        let mut cx = Eff { univ, diags: &mut diags, declared: f.effect, in_modify: false, mode: Mode::Fn };
        let raised = cx.expr(&f.body);
        undeclared(univ, &f.name, f.span, &raised, &f.risks, &mut diags);
    }
    for v in &tm.vals {
        let mut cx = Eff { univ, diags: &mut diags, declared: Effect::Init, in_modify: false, mode: Mode::Val };
        cx.expr(&v.init);
        if !(v.ty.caps.has_copy() && v.ty.caps.has_persist()) {
            diags.push(Diagnostic::new(
                codes::VAL_CAPS,
                v.span,
                format!("value `{}` has type `{}`; values need Copy and Persist", v.name, univ.show(&v.ty)),
            ));
        }
    }
    if let Some(i) = &tm.init {
        let mut cx = Eff { univ, diags: &mut diags, declared: Effect::Active, in_modify: false, mode: Mode::Fn };
        let raised = cx.expr(&i.body);
        undeclared(univ, "init", i.span, &raised, &i.risks, &mut diags);
    }
    diags
}

fn undeclared(_univ: &Universe, name: &str, span: Span, raised: &BTreeSet<Risk>, declared: &[Risk], diags: &mut Diags) {
    for r in raised {
        if !declared.contains(r) {
            diags.push(Diagnostic::new(
                codes::RISK_UNDECLARED,
                span,
                format!("`{name}` may raise {r} but does not declare it"),
            ));
        }
    }
}

struct Eff<'a, 'r> {
    univ: &'a Universe<'r>,
    diags: &'a mut Diags,
    declared: Effect,
    in_modify: bool,
    mode: Mode,
}

impl Eff<'_, '_> {
    fn need(&mut self, eff: Effect, span: Span, what: &str) {
        if self.in_modify && eff > Effect::Pure {
            self.diags.push(Diagnostic::new(
                codes::EFF_MODIFY_IMPURE,
                span,
                format!("{what} is {}, but a modify body must be pure", eff.keyword()),
            ));
        } else if self.mode == Mode::Val && eff > Effect::Init {
            self.diags.push(Diagnostic::new(
                codes::VAL_EFFECT,
                span,
                format!("{what} is {}, but value initializers are at most init", eff.keyword()),
            ));
        } else if eff > self.declared {
            self.diags.push(Diagnostic::new(
                codes::EFF_ESCALATE,
                span,
                format!("{what} is {}, but the enclosing declaration is {}", eff.keyword(), self.declared.keyword()),
            ));
        }
    }

    fn callee(&mut self, f: FnRef, span: Span) -> Vec<Risk> {
        let sig = self.univ.fn_sig(f).expect("typed calls resolve");
        self.need(sig.effect, span, &format!("calling `{}`", self.univ.fn_name(f)));
        sig.risks
    }

    fn cell_default(&mut self, default: Option<FnRef>, span: Span, out: &mut BTreeSet<Risk>) {
        match default {
            Some(d) => out.extend(self.callee(d, span)),
            None => {
                out.insert(Risk::EmptyCell);
            }
        }
    }

    fn expr(&mut self, e: &TExpr) -> BTreeSet<Risk> {
        let mut out = BTreeSet::new();
        match &e.kind {
            TKind::Const(_) | TKind::Local(..) | TKind::Val(_) => {}
            TKind::NewId => self.need(Effect::Init, e.span, "`ID.new`"),
            TKind::NewContext { .. } => self.need(Effect::Init, e.span, "`Context.new`"),
            TKind::Drop { body, .. } => out = self.expr(body),
            TKind::Arith { op, lhs, rhs } => {
                out.extend(self.expr(lhs));
                out.extend(self.expr(rhs));
                if let Some(k) = num_kind(&e.ty) {
                    out.extend(arith_risks(*op, k));
                }
            }
            TKind::Coerce { to, operand } => {
                out = self.expr(operand);
                out.insert(coerce_risk(*to));
            }
            TKind::Attach { operand, .. } | TKind::Detach { operand, .. } => out = self.expr(operand),
            TKind::Construct { fields, .. } | TKind::Tuple(fields) => fields.iter().for_each(|f| out.extend(self.expr(f))),
            TKind::Let { bound, body, .. } => {
                out.extend(self.expr(bound));
                out.extend(self.expr(body));
            }
            TKind::Match { scrutinee, arms } => {
                out.extend(self.expr(scrutinee));
                arms.iter().for_each(|a| out.extend(self.expr(&a.body)));
            }
            TKind::Call(c) => {
                c.args.iter().for_each(|a| out.extend(self.expr(a)));
                out.extend(self.callee(c.func, e.span));
            }
            TKind::Try { call, handlers, .. } => {
                call.args.iter().for_each(|a| out.extend(self.expr(a)));
                let mut raised: BTreeSet<Risk> = self.callee(call.func, e.span).into_iter().collect();
                for h in handlers {
                    if !raised.contains(&h.risk) {
                        self.diags.push(Diagnostic::new(
                            codes::RISK_UNKNOWN,
                            h.span,
                            format!("`{}` never raises {}", self.univ.fn_name(call.func), h.risk),
                        ));
                    }
                }
                for h in handlers {
                    raised.remove(&h.risk);
                    out.extend(self.expr(&h.body));
                }
                out.extend(raised);
            }
            TKind::Modify { reference, default, body, .. } => {
                self.need(Effect::Active, e.span, "modify");
                out.extend(self.expr(reference));
                self.cell_default(*default, e.span, &mut out);
                let outer = self.in_modify;
                self.in_modify = true;
                out.extend(self.expr(body));
                self.in_modify = outer;
            }
            TKind::AndReturn { cell, result } => {
                out.extend(self.expr(cell));
                out.extend(self.expr(result));
            }
            TKind::Read { reference, default } => {
                self.need(Effect::Dependent, e.span, "read");
                out.extend(self.expr(reference));
                self.cell_default(*default, e.span, &mut out);
            }
            TKind::Cycle { init, body, .. } => {
                out.extend(self.expr(init));
                out.extend(self.expr(body));
            }
            TKind::Derive { context, id } => {
                out.extend(self.expr(context));
                out.extend(self.expr(id));
            }
        }
        out
    }
}
