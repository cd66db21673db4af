//! Name resolution: imports, duplicate declarations, unknown names and
//! references to later declarations.

use std::collections::BTreeSet;

use crate::bytecode::{CapDef, CtorDef, FnSig, TypeDef};
use crate::registry::Registry;
use crate::sema::diag::{codes, Diagnostic, Diags};
use crate::sema::env::{Found, LocalItems, Scope, Universe, ValSig, BUILTIN_TYPES};
use crate::syntax::ast::*;
use crate::types::{Cap, CapSet, Effect, ModuleId, SemType, Visibility};

/// Where an expression sits, for the declaration-order rules.
#[derive(Clone, Copy, Debug)]
pub enum Site {
    Fn(usize),
    Val { index: usize, after_fns: usize },
    Init,
}

impl Site {
    pub fn fn_visible(self, k: usize) -> bool {
        match self {
            Site::Fn(i) => k < i,
            Site::Val { after_fns, .. } => k < after_fns,
            Site::Init => true,
        }
    }

    pub fn val_visible(self, j: usize, val_after_fns: usize) -> bool {
        match self {
            Site::Fn(i) => val_after_fns <= i,
            Site::Val { index, .. } => j < index,
            Site::Init => true,
        }
    }

    /// Number of local functions visible from here.
    pub fn fn_limit(self, total: usize) -> usize {
        match self {
            Site::Fn(i) => i,
            Site::Val { after_fns, .. } => after_fns,
            Site::Init => total,
        }
    }
}

pub struct ResolvedModule<'r> {
    pub ast: AstModule,
    pub scope: Scope,
    /// Local declarations with names filled in; signatures and field types
    /// are completed by the type checker.
    pub universe: Universe<'r>,
}

pub fn resolve<'r>(ast: &AstModule, registry: &'r dyn Registry) -> Result<ResolvedModule<'r>, Diags> {
    let mut diags = Vec::new();
    let scope = build_scope(ast, registry, &mut diags);
    let local = skeleton(ast, &mut diags);
    let universe = Universe::new(registry, local);
    {
        let mut r = Resolver {
            univ: &universe,
            scope: &scope,
            diags: &mut diags,
            locals: Vec::new(),
            site: Site::Init,
            tparams: Vec::new(),
        };
        r.module(ast);
    }
    if diags.is_empty() {
        Ok(ResolvedModule { ast: ast.clone(), scope, universe })
    } else {
        Err(diags)
    }
}

fn build_scope(ast: &AstModule, registry: &dyn Registry, diags: &mut Diags) -> Scope {
    let own = ast.name.name.clone();
    if ast.imports.is_empty() {
        let mut s = Scope::implicit(&own, registry);
        s.modules.remove(&own);
        if let Some(a) = registry.resolve_name(&own) {
            s.globbed.retain(|g| *g != a);
        }
        return s;
    }
    let mut s = Scope { own_name: own, explicit: true, modules: Default::default(), globbed: Vec::new() };
    for imp in &ast.imports {
        if !imp.path.is_single() {
            diags.push(Diagnostic::new(
                codes::IMPORT_MISSING,
                imp.path.span(),
                format!("`{}` does not name a module", imp.path),
            ));
            continue;
        }
        let name = &imp.path.segments[0].name;
        match registry.resolve_name(name) {
            Some(a) => {
                s.modules.insert(name.clone(), a);
                if imp.glob && !s.globbed.contains(&a) {
                    s.globbed.push(a);
                }
            }
            None => diags.push(Diagnostic::new(
                codes::IMPORT_MISSING,
                imp.path.span(),
                format!("module `{name}` is not deployed"),
            )),
        }
    }
    s
}

fn placeholder_sig(name: &str) -> FnSig {
    FnSig {
        name: name.to_string(),
        visibility: Visibility::Private,
        effect: Effect::Pure,
        risks: Vec::new(),
        type_params: 0,
        default_for: None,
        params: Vec::new(),
        ret: SemType::unit(),
    }
}

/// Declare every local name, reporting duplicates.
fn skeleton(ast: &AstModule, diags: &mut Diags) -> LocalItems {
    let mut local = LocalItems { name: ast.name.name.clone(), ..Default::default() };
    let mut ctor_names = BTreeSet::new();
    let mut inits = 0;
    let dup = |diags: &mut Diags, what: &str, id: &Ident| {
        diags.push(Diagnostic::new(codes::NAME_DUP, id.span, format!("{what} `{}` is declared twice", id.name)));
    };
    for d in &ast.decls {
        match d {
            Decl::Type(t) => {
                if BUILTIN_TYPES.contains(&t.name.name.as_str()) || local.types.iter().any(|x| x.name == t.name.name) {
                    dup(diags, "type", &t.name);
                }
                let mut params = BTreeSet::new();
                for p in &t.type_params {
                    if !params.insert(p.name.clone()) {
                        dup(diags, "type parameter", p);
                    }
                }
                for c in &t.ctors {
                    if !ctor_names.insert(c.name.name.clone()) {
                        dup(diags, "constructor", &c.name);
                    }
                }
                local.types.push(TypeDef {
                    name: t.name.name.clone(),
                    public: t.public,
                    open: t.open,
                    caps: CapSet::new(),
                    type_params: t.type_params.iter().map(|p| p.name.clone()).collect(),
                    ctors: t
                        .ctors
                        .iter()
                        .map(|c| CtorDef { name: c.name.name.clone(), fields: vec![SemType::unit(); c.fields.len()] })
                        .collect(),
                });
            }
            Decl::Capability(c) => {
                if Cap::builtin(&c.name.name).is_some() || local.caps.iter().any(|x| x.name == c.name.name) {
                    dup(diags, "capability", &c.name);
                }
                local.caps.push(CapDef { name: c.name.name.clone(), open: c.open });
            }
            Decl::Fun(f) => {
                if local.fns.iter().any(|x| x.name == f.name.name) {
                    dup(diags, "function", &f.name);
                }
                local.fns.push(placeholder_sig(&f.name.name));
            }
            Decl::Val(v) => {
                if local.vals.iter().any(|x| x.name == v.name.name) {
                    dup(diags, "value", &v.name);
                }
                local.vals.push(ValSig { name: v.name.name.clone(), ty: SemType::unit(), after_fns: local.fns.len() as u16 });
            }
            Decl::Init(i) => {
                inits += 1;
                if inits > 1 {
                    diags.push(Diagnostic::new(codes::NAME_DUP, i.span, "a module has at most one init"));
                }
            }
        }
    }
    local
}

struct Resolver<'a, 'r> {
    univ: &'a Universe<'r>,
    scope: &'a Scope,
    diags: &'a mut Diags,
    /// Names of local binders in scope; `None` hides everything below.
    locals: Vec<Option<String>>,
    site: Site,
    /// Type parameters of the enclosing function.
    tparams: Vec<String>,
}

impl Resolver<'_, '_> {
    fn module(&mut self, ast: &AstModule) {
        let mut fn_i = 0;
        let mut val_i = 0;
        for d in &ast.decls {
            match d {
                Decl::Type(t) => self.type_decl(t),
                Decl::Capability(_) => {}
                Decl::Fun(f) => {
                    self.site = Site::Fn(fn_i);
                    self.fun(f);
                    fn_i += 1;
                }
                Decl::Val(v) => {
                    self.tparams.clear();
                    self.site = Site::Val { index: val_i, after_fns: fn_i };
                    self.locals.clear();
                    self.expr(&v.value);
                    val_i += 1;
                }
                Decl::Init(i) => {
                    self.site = Site::Init;
                    self.tparams.clear();
                    self.locals.clear();
                    self.risks(&i.risks);
                    self.param(&i.param, &[]);
                    self.expr(&i.body);
                }
            }
        }
    }

    fn report(&mut self, r: Result<(), Diagnostic>) {
        if let Err(d) = r {
            self.diags.push(d);
        }
    }

    fn type_decl(&mut self, t: &TypeDecl) {
        for c in &t.caps {
            let r = self.scope.resolve_cap(self.univ, c).map(|_| ());
            self.report(r);
        }
        let params: Vec<String> = t.type_params.iter().map(|p| p.name.clone()).collect();
        for c in &t.ctors {
            for f in &c.fields {
                self.type_expr(f, &params);
            }
        }
    }

    fn type_expr(&mut self, te: &TypeExpr, params: &[String]) {
        for c in &te.caps {
            let r = self.scope.resolve_cap(self.univ, c).map(|_| ());
            self.report(r);
        }
        match &te.kind {
            TypeExprKind::Tuple(elems) => elems.iter().for_each(|e| self.type_expr(e, params)),
            TypeExprKind::Named { path, args } => {
                let builtin = path.is_single()
                    && (BUILTIN_TYPES.contains(&path.segments[0].name.as_str())
                        || params.contains(&path.segments[0].name));
                if !builtin {
                    match self.scope.find_type(self.univ, path) {
                        Ok(Found::Item(_)) => {}
                        Ok(Found::Missing) => self.diags.push(self.scope.not_found("type", path)),
                        Err(d) => self.diags.push(d),
                    }
                }
                args.iter().for_each(|a| self.type_expr(a, params));
            }
        }
    }

    fn risks(&mut self, risks: &[Path]) {
        for r in risks {
            let res = self.scope.resolve_risk(r).map(|_| ());
            self.report(res);
        }
    }

    fn fun(&mut self, f: &FunDecl) {
        self.locals.clear();
        self.risks(&f.risks);
        let params: Vec<String> = f.type_params.iter().map(|p| p.name.clone()).collect();
        self.tparams = params.clone();
        let mut seen = BTreeSet::new();
        for p in &f.type_params {
            if !seen.insert(p.name.clone()) {
                self.diags.push(Diagnostic::new(codes::NAME_DUP, p.span, format!("type parameter `{}` is declared twice", p.name)));
            }
        }
        if let Some(VisibilityAst::Protected(t)) = &f.visibility {
            if !params.contains(&t.name) {
                self.diags.push(Diagnostic::new(
                    codes::NAME_UNKNOWN,
                    t.span,
                    format!("`{}` is not a type parameter of `{}`", t.name, f.name.name),
                ));
            }
        }
        if let Some(d) = &f.default_for {
            if !self.univ.local.types.iter().any(|t| t.name == d.name) {
                self.diags.push(Diagnostic::new(
                    codes::NAME_UNKNOWN,
                    d.span,
                    format!("`{}` is not a type declared in this module", d.name),
                ));
            }
        }
        let mut names = BTreeSet::new();
        for p in &f.params {
            let before = self.locals.len();
            self.param(p, &params);
            for n in self.locals[before..].iter().flatten() {
                if n != "_" && !names.insert(n.clone()) {
                    self.diags.push(Diagnostic::new(
                        codes::NAME_DUP,
                        param_span(p),
                        format!("parameter `{n}` is bound twice"),
                    ));
                }
            }
        }
        self.expr(&f.body);
    }

    fn param(&mut self, p: &Param, tparams: &[String]) {
        match p {
            Param::Typed { name, ty } => {
                self.type_expr(ty, tparams);
                self.locals.push(Some(name.name.clone()));
            }
            Param::Pattern(pat) => self.pattern(pat, tparams),
        }
    }

    /// Is `id` a nullary constructor in scope? Then a bare name in a
    /// pattern matches it instead of binding.
    fn is_ctor_name(&self, id: &Ident) -> bool {
        nullary_ctor(self.univ, self.scope, id)
    }

    fn pattern(&mut self, p: &Pattern, tparams: &[String]) {
        match &p.kind {
            PatternKind::Wild => self.locals.push(Some("_".into())),
            PatternKind::Name(id) => {
                if !self.is_ctor_name(id) {
                    self.locals.push(Some(id.name.clone()));
                }
            }
            PatternKind::Ctor { caps, path, type_args, fields } => {
                for c in caps {
                    let r = self.scope.resolve_cap(self.univ, c).map(|_| ());
                    self.report(r);
                }
                match self.scope.find_ctor(self.univ, path) {
                    Ok(Found::Item(_)) => {}
                    Ok(Found::Missing) => self.diags.push(self.scope.not_found("constructor", path)),
                    Err(d) => self.diags.push(d),
                }
                for t in type_args.iter().flatten() {
                    self.type_expr(t, tparams);
                }
                for f in fields.iter().flatten() {
                    self.pattern(f, tparams);
                }
            }
            PatternKind::Tuple(elems) => elems.iter().for_each(|e| self.pattern(e, tparams)),
        }
    }

    fn local_in_scope(&self, name: &str) -> bool {
        for l in self.locals.iter().rev() {
            match l {
                None => return false,
                Some(n) if n == name => return true,
                _ => {}
            }
        }
        false
    }

    fn check_fn_order(&mut self, r: crate::types::FnRef, path: &Path) {
        if r.module == ModuleId::Local && !self.site.fn_visible(r.index as usize) {
            self.diags.push(Diagnostic::new(
                codes::REC_FORWARD,
                path.span(),
                format!("`{path}` is not declared before this point; calls may only target earlier declarations"),
            ));
        }
    }

    fn check_val_order(&mut self, r: crate::types::ValRef, path: &Path) {
        if r.module == ModuleId::Local {
            let after = self.univ.local.vals[r.index as usize].after_fns as usize;
            if !self.site.val_visible(r.index as usize, after) {
                self.diags.push(Diagnostic::new(
                    codes::REC_FORWARD,
                    path.span(),
                    format!("value `{path}` is not declared before this point"),
                ));
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Lit(_) | ExprKind::Unit => {}
            ExprKind::Name(path) => {
                if path.is_single() && self.local_in_scope(&path.segments[0].name) {
                    return;
                }
                match self.scope.find_val(self.univ, path) {
                    Ok(Found::Item(v)) => return self.check_val_order(v, path),
                    Ok(Found::Missing) => {}
                    Err(d) => return self.diags.push(d),
                }
                match self.scope.find_ctor(self.univ, path) {
                    Ok(Found::Item(_)) => {}
                    Ok(Found::Missing) => {
                        let d = self.scope.not_found("name", path);
                        self.diags.push(d)
                    }
                    Err(d) => self.diags.push(d),
                }
            }
            ExprKind::Apply { path, type_args, args } => {
                for t in type_args.iter().flatten() {
                    self.type_expr_in_body(t);
                }
                for a in args.iter().flatten() {
                    self.expr(a);
                }
                if is_builtin_qualified(path) {
                    return;
                }
                match self.scope.find_ctor(self.univ, path) {
                    Ok(Found::Item(_)) => return,
                    Ok(Found::Missing) => {}
                    Err(d) => return self.diags.push(d),
                }
                match self.scope.find_fn(self.univ, path) {
                    Ok(Found::Item(f)) => return self.check_fn_order(f, path),
                    Ok(Found::Missing) => {}
                    Err(d) => return self.diags.push(d),
                }
                if path.is_single() && matches!(path.segments[0].name.as_str(), "derive" | "read") {
                    return;
                }
                let d = self.scope.not_found("function or constructor", path);
                self.diags.push(d);
            }
            ExprKind::Tuple(elems) => elems.iter().for_each(|x| self.expr(x)),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            ExprKind::Let { pattern, bound, body } => {
                self.expr(bound);
                let mark = self.locals.len();
                self.pattern_in_body(pattern);
                self.expr(body);
                self.locals.truncate(mark);
            }
            ExprKind::Case { scrutinee, arms } => {
                self.expr(scrutinee);
                for a in arms {
                    let mark = self.locals.len();
                    self.pattern_in_body(&a.pattern);
                    self.expr(&a.body);
                    self.locals.truncate(mark);
                }
            }
            ExprKind::Modify { reference, binder, body } => {
                self.expr(reference);
                let mark = self.locals.len();
                match &binder.kind {
                    PatternKind::Ctor { path, fields: Some(f), type_args: None, caps } if f.len() == 1 && caps.is_empty() => {
                        let known_type = matches!(self.scope.find_type(self.univ, path), Ok(Found::Item(_)));
                        let known_ctor = matches!(self.scope.find_ctor(self.univ, path), Ok(Found::Item(_)));
                        if !known_type && !known_ctor {
                            self.diags.push(self.scope.not_found("type", path));
                        }
                        match &f[0].kind {
                            PatternKind::Name(x) => self.locals.push(Some(x.name.clone())),
                            _ => self.locals.push(Some("_".into())),
                        }
                    }
                    PatternKind::Name(x) => self.locals.push(Some(x.name.clone())),
                    _ => self.locals.push(Some("_".into())),
                }
                self.expr(body);
                self.locals.truncate(mark);
            }
            ExprKind::AndReturn { cell, result } => {
                self.expr(cell);
                self.expr(result);
            }
            ExprKind::Attach { expr, cap } | ExprKind::Detach { expr, cap } => {
                self.expr(expr);
                let r = self.scope.resolve_cap(self.univ, cap).map(|_| ());
                self.report(r);
            }
            ExprKind::Cycle { init, acc, body, .. } => {
                self.expr(init);
                let mark = self.locals.len();
                self.locals.push(None);
                self.locals.push(Some(acc.name.clone()));
                self.expr(body);
                self.locals.truncate(mark);
            }
            ExprKind::Try { call, handlers } => {
                self.expr(call);
                for h in handlers {
                    let r = self.scope.resolve_risk(&h.risk).map(|_| ());
                    self.report(r);
                    let mark = self.locals.len();
                    for b in &h.binders {
                        self.locals.push(Some(b.name.clone()));
                    }
                    self.expr(&h.body);
                    self.locals.truncate(mark);
                }
            }
        }
    }

    fn type_expr_in_body(&mut self, te: &TypeExpr) {
        let params = self.tparams.clone();
        self.type_expr(te, &params);
    }

    fn pattern_in_body(&mut self, p: &Pattern) {
        let params = self.tparams.clone();
        self.pattern(p, &params);
    }
}

/// Is `id` a constructor without fields in scope?
pub fn nullary_ctor(univ: &Universe, scope: &Scope, id: &Ident) -> bool {
    match scope.find_ctor(univ, &Path::single(id.clone())) {
        Ok(Found::Item((r, c))) => univ.type_def(r).map(|d| d.ctors[c as usize].fields.is_empty()).unwrap_or(false),
        _ => false,
    }
}

pub fn is_builtin_qualified(path: &Path) -> bool {
    path.segments.len() == 2
        && path.segments[1].name == "new"
        && matches!(path.segments[0].name.as_str(), "ID" | "Context")
}

fn param_span(p: &Param) -> Span {
    match p {
        Param::Typed { name, .. } => name.span,
        Param::Pattern(p) => p.span,
    }
}
