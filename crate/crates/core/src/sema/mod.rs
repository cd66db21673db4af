//! Elaboration: name resolution, type checking, use counting, capability
//! and visibility checks, effect checks.
//!
//! Each phase reports every problem it finds; the pipeline stops after the
//! first phase that reports any.

pub mod caps;
pub mod diag;
pub mod effects;
pub mod env;
pub mod linear;
pub mod resolve;
pub mod rules;
pub mod typeck;
pub mod typed;

pub use diag::{codes, Diagnostic, Diags};
pub use resolve::{resolve, ResolvedModule};
pub use typeck::check_types;
pub use typed::TypedModule;

use crate::registry::Registry;
use crate::syntax::{self, ast::AstModule, ast::Span};
use env::{LocalItems, Universe, ValSig};

impl LocalItems {
    pub fn from_typed(tm: &TypedModule) -> Self {
        LocalItems {
            name: tm.name.clone(),
            types: tm.types.clone(),
            caps: tm.caps.clone(),
            fns: tm.functions.iter().map(typeck::sig_of).collect(),
            vals: tm
                .vals
                .iter()
                .map(|v| ValSig { name: v.name.clone(), ty: v.ty.clone(), after_fns: v.after_fns })
                .collect(),
        }
    }
}

fn phase(diags: Diags, tm: TypedModule) -> Result<TypedModule, Diags> {
    if diags.is_empty() {
        Ok(tm)
    } else {
        Err(diags)
    }
}

pub fn check_substructural(mut tm: TypedModule, registry: &dyn Registry) -> Result<TypedModule, Diags> {
    let univ = Universe::new(registry, LocalItems::from_typed(&tm));
    let diags = linear::check(&mut tm, &univ);
    phase(diags, tm)
}

pub fn check_capabilities(tm: TypedModule, registry: &dyn Registry) -> Result<TypedModule, Diags> {
    let univ = Universe::new(registry, LocalItems::from_typed(&tm));
    let diags = caps::check(&tm, &univ);
    phase(diags, tm)
}

pub fn check_effects(tm: TypedModule, registry: &dyn Registry) -> Result<TypedModule, Diags> {
    let univ = Universe::new(registry, LocalItems::from_typed(&tm));
    let diags = effects::check(&tm, &univ);
    phase(diags, tm)
}

/// resolve, check_types, check_substructural, check_capabilities,
/// check_effects.
pub fn elaborate(ast: &AstModule, registry: &dyn Registry) -> Result<TypedModule, Diags> {
    let rm = resolve(ast, registry)?;
    let tm = check_types(rm)?;
    let tm = check_substructural(tm, registry)?;
    let tm = check_capabilities(tm, registry)?;
    check_effects(tm, registry)
}

/// Parse and elaborate; syntax errors become `E-SYNTAX` diagnostics.
pub fn check_source(src: &str, registry: &dyn Registry) -> Result<(AstModule, TypedModule), Diags> {
    let ast = syntax::parse_source(src).map_err(|e| {
        let (line, col) = e.position();
        vec![Diagnostic::new(codes::SYNTAX, Span::new(line, col), e.to_string())]
    })?;
    let tm = elaborate(&ast, registry)?;
    Ok((ast, tm))
}
