//! Item lookup across the module being checked and the deployed universe,
//! and formation of semantic types from type expressions.
//!
//! Items of a deployed module store `ModuleId::Local` for their own
//! declarations; everything handed out here is relocated so that `Local`
//! always means the module under inspection.

use std::collections::BTreeMap;

use crate::bytecode::{BytecodeModule, CapDef, FnSig, TypeDef};
use crate::registry::Registry;
use crate::sema::diag::{codes, Diagnostic};
use crate::syntax::ast::{Path, Span, TypeExpr, TypeExprKind};
use crate::types::{Cap, CapRef, CapSet, FnRef, ModuleAddress, ModuleId, Risk, SemType, TypeKind, TypeRef, ValRef};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValSig {
    pub name: String,
    pub ty: SemType,
    pub after_fns: u16,
}

/// Declarations of the module under inspection.
#[derive(Clone, Default, Debug)]
pub struct LocalItems {
    pub name: String,
    pub types: Vec<TypeDef>,
    pub caps: Vec<CapDef>,
    pub fns: Vec<FnSig>,
    pub vals: Vec<ValSig>,
}

impl LocalItems {
    pub fn from_module(m: &BytecodeModule) -> Self {
        LocalItems {
            name: m.name.clone(),
            types: m.types.clone(),
            caps: m.caps.clone(),
            fns: m.functions.iter().map(|f| f.sig()).collect(),
            vals: m
                .vals
                .iter()
                .map(|v| ValSig { name: v.name.clone(), ty: v.ty.clone(), after_fns: v.after_fns })
                .collect(),
        }
    }
}

pub struct Universe<'r> {
    pub registry: &'r dyn Registry,
    pub local: LocalItems,
}

fn relocate(t: &SemType, m: ModuleId) -> SemType {
    match m {
        ModuleId::Local => t.clone(),
        ModuleId::Addr(a) => t.resolve(a),
    }
}

fn relocate_risk(r: &Risk, m: ModuleId) -> Risk {
    match m {
        ModuleId::Local => r.clone(),
        ModuleId::Addr(a) => r.resolve(a),
    }
}

pub const BUILTIN_TYPES: [&str; 6] = ["UInt", "Int", "Unit", "ID", "Context", "Ref"];

impl<'r> Universe<'r> {
    pub fn new(registry: &'r dyn Registry, local: LocalItems) -> Self {
        Universe { registry, local }
    }

    pub fn foreign(&self, m: ModuleAddress) -> Option<&BytecodeModule> {
        self.registry.module(&m)
    }

    /// Raw definition; field types are relative to the defining module.
    pub fn type_def(&self, r: TypeRef) -> Option<&TypeDef> {
        match r.module {
            ModuleId::Local => self.local.types.get(r.index as usize),
            ModuleId::Addr(a) => self.foreign(a)?.types.get(r.index as usize),
        }
    }

    pub fn declared_caps(&self, r: TypeRef) -> Option<CapSet> {
        let def = self.type_def(r)?;
        Some(match r.module {
            ModuleId::Local => def.caps.clone(),
            ModuleId::Addr(a) => def.caps.resolve(a),
        })
    }

    /// The ADT type `r[args]` carrying its declared capabilities.
    pub fn adt(&self, r: TypeRef, args: Vec<SemType>) -> Option<SemType> {
        Some(SemType::new(TypeKind::Adt(r, args), self.declared_caps(r)?))
    }

    /// Field types of constructor `ctor` instantiated at `args`.
    pub fn ctor_fields(&self, r: TypeRef, ctor: u16, args: &[SemType]) -> Option<Vec<SemType>> {
        let def = self.type_def(r)?;
        let c = def.ctors.get(ctor as usize)?;
        Some(c.fields.iter().map(|f| relocate(f, r.module).subst(args)).collect())
    }

    pub fn cap_def(&self, r: CapRef) -> Option<&CapDef> {
        match r.module {
            ModuleId::Local => self.local.caps.get(r.index as usize),
            ModuleId::Addr(a) => self.foreign(a)?.caps.get(r.index as usize),
        }
    }

    pub fn fn_sig(&self, r: FnRef) -> Option<FnSig> {
        match r.module {
            ModuleId::Local => self.local.fns.get(r.index as usize).cloned(),
            ModuleId::Addr(a) => {
                let f = self.foreign(a)?.functions.get(r.index as usize)?;
                let mut sig = f.sig();
                sig.params = sig.params.iter().map(|p| p.resolve(a)).collect();
                sig.ret = sig.ret.resolve(a);
                sig.risks = sig.risks.iter().map(|k| k.resolve(a)).collect();
                sig.risks.sort();
                Some(sig)
            }
        }
    }

    pub fn val_ty(&self, r: ValRef) -> Option<SemType> {
        match r.module {
            ModuleId::Local => self.local.vals.get(r.index as usize).map(|v| v.ty.clone()),
            ModuleId::Addr(a) => Some(self.foreign(a)?.vals.get(r.index as usize)?.ty.resolve(a)),
        }
    }

    /// Default function for ADT `r`. Local defaults are visible only among
    /// the first `local_limit` functions.
    pub fn default_for(&self, r: TypeRef, local_limit: usize) -> Option<FnRef> {
        match r.module {
            ModuleId::Local => self
                .local
                .fns
                .iter()
                .take(local_limit)
                .position(|f| f.default_for == Some(r.index))
                .map(|i| FnRef::local(i as u16)),
            ModuleId::Addr(a) => {
                let i = self.foreign(a)?.default_for(r.index)?;
                Some(FnRef { module: ModuleId::Addr(a), index: i })
            }
        }
    }

    pub fn risk_relocated(&self, r: &Risk, m: ModuleId) -> Risk {
        relocate_risk(r, m)
    }

    fn module_name(&self, m: ModuleId) -> String {
        match m {
            ModuleId::Local => self.local.name.clone(),
            ModuleId::Addr(a) => self.foreign(a).map(|m| m.name.clone()).unwrap_or_else(|| format!("@{}", a.short())),
        }
    }

    pub fn type_name(&self, r: TypeRef) -> String {
        match self.type_def(r) {
            Some(d) if r.module == ModuleId::Local => d.name.clone(),
            Some(d) => format!("{}.{}", self.module_name(r.module), d.name),
            None => format!("<type {}>", r.index),
        }
    }

    pub fn cap_name(&self, c: &Cap) -> String {
        match c {
            Cap::User(r) => match self.cap_def(*r) {
                Some(d) if r.module == ModuleId::Local => d.name.clone(),
                Some(d) => format!("{}.{}", self.module_name(r.module), d.name),
                None => format!("<cap {}>", r.index),
            },
            b => b.builtin_name().unwrap_or("?").to_string(),
        }
    }

    pub fn fn_name(&self, r: FnRef) -> String {
        match self.fn_sig(r) {
            Some(s) if r.module == ModuleId::Local => s.name,
            Some(s) => format!("{}.{}", self.module_name(r.module), s.name),
            None => format!("<fn {}>", r.index),
        }
    }

    pub fn show_caps(&self, caps: &CapSet) -> String {
        let names: Vec<String> = caps.iter().map(|c| self.cap_name(c)).collect();
        format!("{{{}}}", names.join(" "))
    }

    /// Human-readable type, capabilities first.
    pub fn show(&self, t: &SemType) -> String {
        let body = match &t.kind {
            TypeKind::UInt => "UInt".to_string(),
            TypeKind::Int => "Int".to_string(),
            TypeKind::Unit => "Unit".to_string(),
            TypeKind::Id => "ID".to_string(),
            TypeKind::Context(i) => format!("Context[{}]", self.show(i)),
            TypeKind::Ref(i) => format!("Ref[{}]", self.show(i)),
            TypeKind::Var(i) => format!("'{i}"),
            TypeKind::Adt(r, args) => {
                let mut s = self.type_name(*r);
                if !args.is_empty() {
                    let a: Vec<String> = args.iter().map(|x| self.show(x)).collect();
                    s = format!("{s}[{}]", a.join(", "));
                }
                s
            }
            TypeKind::Tuple(elems) => {
                let e: Vec<String> = elems.iter().map(|x| self.show(x)).collect();
                return format!("({})", e.join(", "));
            }
        };
        if t.caps.is_empty() {
            body
        } else {
            let names: Vec<String> = t.caps.iter().map(|c| self.cap_name(c)).collect();
            format!("{} {body}", names.join(" "))
        }
    }
}

/// Which deployed modules are reachable by name.
#[derive(Clone, Debug)]
pub struct Scope {
    pub own_name: String,
    /// With no import declarations every deployed module is in scope.
    pub explicit: bool,
    pub modules: BTreeMap<String, ModuleAddress>,
    /// Modules whose items are visible unqualified.
    pub globbed: Vec<ModuleAddress>,
}

/// Outcome of looking up one kind of item.
pub enum Found<T> {
    Item(T),
    Missing,
}

impl Scope {
    /// Implicit scope: every deployed module, unqualified.
    pub fn implicit(own_name: &str, registry: &dyn Registry) -> Scope {
        let modules: BTreeMap<String, ModuleAddress> = registry.module_names().into_iter().collect();
        let globbed = modules.values().copied().collect();
        Scope { own_name: own_name.to_string(), explicit: false, modules, globbed }
    }

    /// Code of the diagnostic for a name found nowhere.
    pub fn unknown_code(&self) -> &'static str {
        if self.explicit {
            codes::NAME_UNKNOWN
        } else {
            codes::IMPORT_MISSING
        }
    }

    pub fn not_found(&self, what: &str, path: &Path) -> Diagnostic {
        let msg = if self.explicit {
            format!("unknown {what} `{path}`")
        } else {
            format!("no deployed module provides {what} `{path}`")
        };
        Diagnostic::new(self.unknown_code(), path.span(), msg)
    }

    /// Generic lookup. `local` searches the module under inspection,
    /// `foreign` a deployed module.
    pub fn find<T>(
        &self,
        univ: &Universe,
        path: &Path,
        what: &str,
        local: impl Fn(&LocalItems, &str) -> Option<T>,
        foreign: impl Fn(&BytecodeModule, ModuleAddress, &str) -> Option<T>,
    ) -> Result<Found<T>, Diagnostic> {
        match path.segments.len() {
            1 => {
                let name = &path.segments[0].name;
                if let Some(t) = local(&univ.local, name) {
                    return Ok(Found::Item(t));
                }
                let mut hits = Vec::new();
                for a in &self.globbed {
                    if let Some(m) = univ.foreign(*a) {
                        if let Some(t) = foreign(m, *a, name) {
                            hits.push((m.name.clone(), t));
                        }
                    }
                }
                if hits.len() > 1 {
                    let names: Vec<String> = hits.iter().map(|(n, _)| n.clone()).collect();
                    return Err(Diagnostic::new(
                        codes::NAME_AMBIG,
                        path.span(),
                        format!("{what} `{path}` is provided by several modules: {}", names.join(", ")),
                    ));
                }
                Ok(match hits.pop() {
                    Some((_, t)) => Found::Item(t),
                    None => Found::Missing,
                })
            }
            2 => {
                let module = &path.segments[0].name;
                let name = &path.segments[1].name;
                if *module == self.own_name {
                    return Ok(match local(&univ.local, name) {
                        Some(t) => Found::Item(t),
                        None => Found::Missing,
                    });
                }
                let Some(addr) = self.modules.get(module) else {
                    return Err(Diagnostic::new(
                        codes::IMPORT_MISSING,
                        path.span(),
                        format!("module `{module}` is not deployed or not imported"),
                    ));
                };
                let Some(m) = univ.foreign(*addr) else {
                    return Err(Diagnostic::new(codes::IMPORT_MISSING, path.span(), format!("module `{module}` is not deployed")));
                };
                Ok(match foreign(m, *addr, name) {
                    Some(t) => Found::Item(t),
                    None => Found::Missing,
                })
            }
            _ => Ok(Found::Missing),
        }
    }

    pub fn find_type(&self, univ: &Universe, path: &Path) -> Result<Found<TypeRef>, Diagnostic> {
        self.find(
            univ,
            path,
            "type",
            |l, n| l.types.iter().position(|t| t.name == n).map(|i| TypeRef::local(i as u16)),
            |m, a, n| m.type_index(n).map(|i| TypeRef { module: ModuleId::Addr(a), index: i }),
        )
    }

    pub fn find_ctor(&self, univ: &Universe, path: &Path) -> Result<Found<(TypeRef, u16)>, Diagnostic> {
        fn search(types: &[TypeDef], n: &str) -> Option<(u16, u16)> {
            for (ti, t) in types.iter().enumerate() {
                if let Some(ci) = t.ctors.iter().position(|c| c.name == n) {
                    return Some((ti as u16, ci as u16));
                }
            }
            None
        }
        self.find(
            univ,
            path,
            "constructor",
            |l, n| search(&l.types, n).map(|(t, c)| (TypeRef::local(t), c)),
            |m, a, n| search(&m.types, n).map(|(t, c)| (TypeRef { module: ModuleId::Addr(a), index: t }, c)),
        )
    }

    pub fn find_fn(&self, univ: &Universe, path: &Path) -> Result<Found<FnRef>, Diagnostic> {
        self.find(
            univ,
            path,
            "function",
            |l, n| l.fns.iter().position(|f| f.name == n).map(|i| FnRef::local(i as u16)),
            |m, a, n| m.function_index(n).map(|i| FnRef { module: ModuleId::Addr(a), index: i }),
        )
    }

    pub fn find_val(&self, univ: &Universe, path: &Path) -> Result<Found<ValRef>, Diagnostic> {
        self.find(
            univ,
            path,
            "value",
            |l, n| l.vals.iter().position(|v| v.name == n).map(|i| ValRef::local(i as u16)),
            |m, a, n| m.val_index(n).map(|i| ValRef { module: ModuleId::Addr(a), index: i }),
        )
    }

    pub fn find_user_cap(&self, univ: &Universe, path: &Path) -> Result<Found<CapRef>, Diagnostic> {
        self.find(
            univ,
            path,
            "capability",
            |l, n| l.caps.iter().position(|c| c.name == n).map(|i| CapRef::local(i as u16)),
            |m, a, n| m.cap_index(n).map(|i| CapRef { module: ModuleId::Addr(a), index: i }),
        )
    }

    pub fn resolve_cap(&self, univ: &Universe, path: &Path) -> Result<Cap, Diagnostic> {
        if path.is_single() {
            if let Some(c) = Cap::builtin(&path.segments[0].name) {
                return Ok(c);
            }
        }
        match self.find_user_cap(univ, path)? {
            Found::Item(r) => Ok(Cap::User(r)),
            Found::Missing => Err(self.not_found("capability", path)),
        }
    }

    pub fn resolve_risk(&self, path: &Path) -> Result<Risk, Diagnostic> {
        match path.segments.len() {
            1 => {
                let n = &path.segments[0].name;
                Ok(Risk::builtin(n).unwrap_or_else(|| Risk::Custom(ModuleId::Local, n.clone())))
            }
            2 => {
                let module = &path.segments[0].name;
                let name = path.segments[1].name.clone();
                if *module == self.own_name {
                    return Ok(Risk::Custom(ModuleId::Local, name));
                }
                match self.modules.get(module) {
                    Some(a) => Ok(Risk::Custom(ModuleId::Addr(*a), name)),
                    None => Err(Diagnostic::new(
                        codes::IMPORT_MISSING,
                        path.span(),
                        format!("module `{module}` is not deployed or not imported"),
                    )),
                }
            }
            _ => Err(Diagnostic::new(codes::NAME_UNKNOWN, path.span(), format!("invalid risk name `{path}`"))),
        }
    }
}

/// How a bare ADT name without written capabilities is read.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CapMode {
    /// The type's declared capabilities.
    Declared,
    /// Top level of a destructuring parameter: written capabilities are a
    /// requirement, none written means none required.
    Requirement,
}

fn mismatch(span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(codes::TYPE_MISMATCH, span, msg)
}

impl Scope {
    /// Turn a type expression into a semantic type. `tparams` are the type
    /// parameters in scope. With `strict` unset the Persist requirement on
    /// Context and Ref contents is not enforced.
    pub fn form_type(
        &self,
        univ: &Universe,
        te: &TypeExpr,
        tparams: &[String],
        mode: CapMode,
        strict: bool,
    ) -> Result<SemType, Diagnostic> {
        let (path, args) = match &te.kind {
            TypeExprKind::Tuple(elems) => {
                let mut out = Vec::new();
                for e in elems {
                    out.push(self.form_type(univ, e, tparams, CapMode::Declared, strict)?);
                }
                return Ok(SemType::tuple(out));
            }
            TypeExprKind::Named { path, args } => (path, args),
        };
        let mut written = CapSet::new();
        for c in &te.caps {
            written.insert(self.resolve_cap(univ, c)?);
        }
        let no_args = |what: &str| -> Result<(), Diagnostic> {
            if args.is_empty() {
                Ok(())
            } else {
                Err(mismatch(te.span, format!("{what} takes no type arguments")))
            }
        };
        if path.is_single() {
            let name = path.segments[0].name.as_str();
            if let Some(i) = tparams.iter().position(|p| p == name) {
                no_args("a type parameter")?;
                if !written.is_empty() {
                    return Err(mismatch(te.span, format!("capabilities cannot be written on type parameter `{name}`")));
                }
                return Ok(SemType::var(i as u16));
            }
            let prim = match name {
                "UInt" => Some(TypeKind::UInt),
                "Int" => Some(TypeKind::Int),
                "Unit" => Some(TypeKind::Unit),
                "ID" => Some(TypeKind::Id),
                _ => None,
            };
            if let Some(kind) = prim {
                no_args(name)?;
                check_written(&written, &kind, te.span)?;
                return Ok(SemType::new(kind, CapSet::structural().union(&written)));
            }
            if name == "Context" || name == "Ref" {
                if args.len() != 1 {
                    return Err(mismatch(te.span, format!("{name} takes exactly one type argument")));
                }
                let inner = self.form_type(univ, &args[0], tparams, CapMode::Declared, strict)?;
                if strict {
                    check_persist(univ, &inner, args[0].span)?;
                }
                let kind = if name == "Ref" {
                    TypeKind::Ref(Box::new(inner))
                } else {
                    TypeKind::Context(Box::new(inner))
                };
                check_written(&written, &kind, te.span)?;
                return Ok(SemType::new(kind, CapSet::structural().union(&written)));
            }
        }
        let r = match self.find_type(univ, path)? {
            Found::Item(r) => r,
            Found::Missing => return Err(self.not_found("type", path)),
        };
        let def = univ.type_def(r).expect("found types exist");
        if def.type_params.len() != args.len() {
            return Err(mismatch(
                te.span,
                format!("`{}` expects {} type argument(s), found {}", path, def.type_params.len(), args.len()),
            ));
        }
        let mut targs = Vec::new();
        for a in args {
            targs.push(self.form_type(univ, a, tparams, CapMode::Declared, strict)?);
        }
        let kind = TypeKind::Adt(r, targs);
        check_written(&written, &kind, te.span)?;
        let caps = if !te.caps.is_empty() {
            written
        } else if mode == CapMode::Requirement {
            CapSet::new()
        } else {
            univ.declared_caps(r).expect("found types exist")
        };
        Ok(SemType::new(kind, caps))
    }
}

/// Modify belongs only on references and Master only on IDs.
fn check_written(written: &CapSet, kind: &TypeKind, span: Span) -> Result<(), Diagnostic> {
    if written.contains(&Cap::Modify) && !matches!(kind, TypeKind::Ref(_)) {
        return Err(mismatch(span, "the Modify capability applies only to Ref types"));
    }
    if written.contains(&Cap::Master) && !matches!(kind, TypeKind::Id) {
        return Err(mismatch(span, "the Master capability applies only to ID"));
    }
    Ok(())
}

/// Cells hold only Persist values; type parameters are never known to be
/// Persist.
pub fn check_persist(univ: &Universe, inner: &SemType, span: Span) -> Result<(), Diagnostic> {
    if matches!(inner.kind, TypeKind::Var(_)) || !inner.caps.has_persist() {
        return Err(Diagnostic::new(
            codes::PERSIST,
            span,
            format!("`{}` lacks the Persist capability required for cell contents", univ.show(inner)),
        ));
    }
    Ok(())
}
