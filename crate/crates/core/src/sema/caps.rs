//! Capability attachment, declared type capabilities, Modify on references
//! and call visibility.

use crate::sema::diag::{codes, Diagnostic, Diags};
use crate::sema::env::Universe;
use crate::sema::rules::{check_attach, check_call_visibility, check_decl_caps, CapViolation, VisViolation};
use crate::sema::typed::*;
use crate::syntax::ast::Span;
use crate::types::{Cap, TypeRef};

pub fn check(tm: &TypedModule, univ: &Universe) -> Diags {
    let mut diags = Vec::new();
    for (i, span) in tm.type_spans.iter().enumerate() {
        if let Err(v) = check_decl_caps(univ, TypeRef::local(i as u16)) {
            diags.push(violation(v, *span));
        }
    }
    let mut visit = |e: &TExpr| check_node(univ, e, &mut diags);
    for f in &tm.functions {
        f.body.walk(&mut visit);
    }
    for v in &tm.vals {
        v.init.walk(&mut visit);
    }
    if let Some(i) = &tm.init {
        i.body.walk(&mut visit);
    }
    diags
}

fn violation(v: CapViolation, span: Span) -> Diagnostic {
    match v {
        CapViolation::Attach(m) => Diagnostic::new(codes::CAP_ATTACH, span, m),
        CapViolation::Struct(m) => Diagnostic::new(codes::CAP_STRUCT, span, m),
    }
}

fn check_call(univ: &Universe, call: &TCall, span: Span, diags: &mut Diags) {
    let sig = univ.fn_sig(call.func).expect("typed calls resolve");
    match check_call_visibility(univ, call.func, &sig, &call.type_args) {
        Ok(()) => {}
        Err(VisViolation::Private(m)) => diags.push(Diagnostic::new(codes::VIS_PRIVATE, span, m)),
        Err(VisViolation::Protected(m)) => diags.push(Diagnostic::new(codes::VIS_PROTECTED, span, m)),
    }
}

fn check_node(univ: &Universe, e: &TExpr, diags: &mut Diags) {
    match &e.kind {
        TKind::Attach { operand, cap } => {
            if let Err(v) = check_attach(univ, &operand.ty, cap) {
                diags.push(violation(v, e.span));
            }
        }
        TKind::Call(c) => check_call(univ, c, e.span, diags),
        TKind::Try { call, .. } => check_call(univ, call, e.span, diags),
        TKind::Modify { reference, .. } => {
            if !reference.ty.caps.contains(&Cap::Modify) {
                diags.push(Diagnostic::new(
                    codes::CAP_MODIFY,
                    reference.span,
                    format!("`{}` lacks Modify", univ.show(&reference.ty)),
                ));
            }
        }
        _ => {}
    }
}
