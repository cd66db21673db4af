//! ADT and generic type checking. Produces the typed tree with every slot
//! use marked `Move`; the substructural pass refines that.

use crate::bytecode::{ArithOp, Const, FnSig, NumKind};
use crate::sema::diag::{codes, Diagnostic, Diags};
use crate::sema::env::{check_persist, CapMode, Found, Scope, Universe};
use crate::sema::resolve::{is_builtin_qualified, nullary_ctor, ResolvedModule, Site};
use crate::sema::rules::{is_exhaustive, num_kind, num_type};
use crate::sema::typed::*;
use crate::syntax::ast::*;
use crate::types::{CapSet, Effect, FnRef, ModuleId, Risk, SemType, TypeKind, TypeRef, Visibility};

type R<T> = Result<T, Diagnostic>;

fn mismatch(span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(codes::TYPE_MISMATCH, span, msg)
}

pub fn check_types(rm: ResolvedModule) -> Result<TypedModule, Diags> {
    let ResolvedModule { ast, scope, mut universe } = rm;
    let type_spans = build_types(&ast, &scope, &mut universe).map_err(|d| vec![d])?;
    let mut functions = Vec::new();
    let mut vals = Vec::new();
    let mut init_decl = None;
    let mut fn_i = 0usize;
    for d in &ast.decls {
        match d {
            Decl::Fun(f) => {
                let tf = check_fun(&universe, &scope, f, fn_i, &functions).map_err(|d| vec![d])?;
                universe.local.fns[fn_i] = sig_of(&tf);
                functions.push(tf);
                fn_i += 1;
            }
            Decl::Val(v) => {
                let index = vals.len();
                let site = Site::Val { index, after_fns: fn_i };
                let mut cx = FnCx::new(&universe, &scope, site, Vec::new());
                let init = cx.expr(&v.value, None).map_err(|d| vec![d])?;
                let locals = cx.locals;
                universe.local.vals[index].ty = init.ty.clone();
                vals.push(TypedVal {
                    name: v.name.name.clone(),
                    span: v.name.span,
                    ty: init.ty.clone(),
                    after_fns: fn_i as u16,
                    locals,
                    init,
                });
            }
            Decl::Init(i) => init_decl = Some(i),
            Decl::Type(_) | Decl::Capability(_) => {}
        }
    }
    let init = match init_decl {
        Some(i) => Some(check_init(&universe, &scope, i).map_err(|d| vec![d])?),
        None => None,
    };
    Ok(TypedModule {
        name: universe.local.name.clone(),
        types: universe.local.types.clone(),
        type_spans,
        caps: universe.local.caps.clone(),
        functions,
        vals,
        init,
    })
}

pub fn sig_of(f: &TypedFunction) -> FnSig {
    FnSig {
        name: f.name.clone(),
        visibility: f.visibility,
        effect: f.effect,
        risks: f.risks.clone(),
        type_params: f.type_params.len(),
        default_for: f.default_for,
        params: f.params.iter().map(|p| p.ty.clone()).collect(),
        ret: f.ret.clone(),
    }
}

/// Form constructor field types and settle the capabilities of `open`
/// types declared without any: the largest structural set all fields
/// support, found by iterating down from Copy Drop Persist.
fn build_types(ast: &AstModule, scope: &Scope, univ: &mut Universe) -> R<Vec<Span>> {
    let decls: Vec<&TypeDecl> = ast
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Type(t) => Some(t),
            _ => None,
        })
        .collect();
    let mut inferred = Vec::new();
    for (i, t) in decls.iter().enumerate() {
        let mut caps = CapSet::new();
        for c in &t.caps {
            caps.insert(scope.resolve_cap(univ, c)?);
        }
        let infer = t.open && t.caps.is_empty();
        if infer {
            caps = CapSet::structural();
        }
        inferred.push(infer);
        univ.local.types[i].caps = caps;
    }
    let form_all = |univ: &Universe, strict: bool| -> R<Vec<Vec<Vec<SemType>>>> {
        let mut all = Vec::new();
        for t in &decls {
            let params: Vec<String> = t.type_params.iter().map(|p| p.name.clone()).collect();
            let mut ctors = Vec::new();
            for c in &t.ctors {
                let mut fields = Vec::new();
                for f in &c.fields {
                    fields.push(scope.form_type(univ, f, &params, CapMode::Declared, strict)?);
                }
                ctors.push(fields);
            }
            all.push(ctors);
        }
        Ok(all)
    };
    loop {
        let all = form_all(univ, false)?;
        let mut changed = false;
        for (i, ctors) in all.iter().enumerate() {
            if !inferred[i] {
                continue;
            }
            let mut caps = CapSet::structural();
            for f in ctors.iter().flatten() {
                caps = caps.intersection(&f.caps);
            }
            if caps != univ.local.types[i].caps {
                univ.local.types[i].caps = caps;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let all = form_all(univ, true)?;
    for (i, ctors) in all.into_iter().enumerate() {
        for (c, fields) in ctors.into_iter().enumerate() {
            univ.local.types[i].ctors[c].fields = fields;
        }
    }
    Ok(decls.iter().map(|t| t.name.span).collect())
}

fn resolve_risks(scope: &Scope, paths: &[Path]) -> R<Vec<Risk>> {
    let mut out = Vec::new();
    for p in paths {
        out.push(scope.resolve_risk(p)?);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn check_fun(univ: &Universe, scope: &Scope, f: &FunDecl, index: usize, earlier: &[TypedFunction]) -> R<TypedFunction> {
    let tparams: Vec<String> = f.type_params.iter().map(|p| p.name.clone()).collect();
    let visibility = match &f.visibility {
        None | Some(VisibilityAst::Private) => Visibility::Private,
        Some(VisibilityAst::Public) => Visibility::Public,
        Some(VisibilityAst::Protected(t)) => {
            Visibility::Protected(tparams.iter().position(|p| *p == t.name).expect("resolved") as u16)
        }
    };
    let risks = resolve_risks(scope, &f.risks)?;
    let mut cx = FnCx::new(univ, scope, Site::Fn(index), tparams.clone());
    let mut params = Vec::new();
    for p in &f.params {
        params.push(cx.param(p)?);
    }
    let body = cx.expr(&f.body, None)?;
    let ret = body.ty.clone();
    let default_for = match &f.default_for {
        None => None,
        Some(x) => {
            let ti = univ.local.types.iter().position(|t| t.name == x.name).expect("resolved") as u16;
            let def = &univ.local.types[ti as usize];
            let vars: Vec<SemType> = (0..def.type_params.len() as u16).map(SemType::var).collect();
            let expected = univ.adt(TypeRef::local(ti), vars).expect("local type");
            if visibility != Visibility::Public {
                return Err(mismatch(f.name.span, format!("default for `{}` must be public", x.name)));
            }
            if !params.is_empty() || !risks.is_empty() {
                return Err(mismatch(f.name.span, format!("default for `{}` takes no parameters and declares no risks", x.name)));
            }
            if tparams.len() != def.type_params.len() || ret != expected {
                return Err(mismatch(
                    f.body.span,
                    format!("default for `{}` must return `{}`, found `{}`", x.name, univ.show(&expected), univ.show(&ret)),
                ));
            }
            if earlier.iter().any(|g| g.default_for == Some(ti)) {
                return Err(mismatch(x.span, format!("type `{}` already has a default", x.name)));
            }
            Some(ti)
        }
    };
    Ok(TypedFunction {
        name: f.name.name.clone(),
        span: f.name.span,
        visibility,
        effect: f.effect.unwrap_or(Effect::Pure),
        risks,
        type_params: tparams,
        default_for,
        params,
        ret,
        locals: cx.locals,
        body,
    })
}

fn check_init(univ: &Universe, scope: &Scope, i: &InitDecl) -> R<TypedInit> {
    let risks = resolve_risks(scope, &i.risks)?;
    let mut cx = FnCx::new(univ, scope, Site::Init, Vec::new());
    let param = match &i.param {
        Param::Typed { .. } => cx.param(&i.param)?,
        Param::Pattern(p) => return Err(mismatch(p.span, "the init parameter must be `name: Master ID`")),
    };
    if param.ty != SemType::master_id() {
        return Err(mismatch(param.span, format!("the init parameter must be `Master ID`, found `{}`", univ.show(&param.ty))));
    }
    let body = cx.expr(&i.body, None)?;
    Ok(TypedInit { span: i.span, risks, param, locals: cx.locals, body })
}

pub(crate) struct FnCx<'c, 'r> {
    univ: &'c Universe<'r>,
    scope: &'c Scope,
    site: Site,
    tparams: Vec<String>,
    pub locals: Vec<LocalInfo>,
    /// Lexical bindings; `None` hides everything below (cycle bodies).
    env: Vec<Option<(String, u16)>>,
}

#[derive(PartialEq)]
enum Tails {
    Plain,
    Returns,
    Mixed,
}

fn tails(e: &TExpr) -> Tails {
    match &e.kind {
        TKind::AndReturn { .. } => Tails::Returns,
        TKind::Let { body, .. } | TKind::Drop { body, .. } => tails(body),
        TKind::Match { arms, .. } => {
            let ts: Vec<Tails> = arms.iter().map(|a| tails(&a.body)).collect();
            if ts.iter().all(|t| *t == Tails::Plain) {
                Tails::Plain
            } else if ts.iter().all(|t| *t == Tails::Returns) {
                Tails::Returns
            } else {
                Tails::Mixed
            }
        }
        _ => Tails::Plain,
    }
}

impl<'c, 'r> FnCx<'c, 'r> {
    fn new(univ: &'c Universe<'r>, scope: &'c Scope, site: Site, tparams: Vec<String>) -> Self {
        FnCx { univ, scope, site, tparams, locals: Vec::new(), env: Vec::new() }
    }

    fn bind(&mut self, name: &str, ty: SemType, span: Span) -> u16 {
        let slot = self.locals.len() as u16;
        self.locals.push(LocalInfo { name: name.to_string(), ty, span });
        if name != "_" {
            self.env.push(Some((name.to_string(), slot)));
        }
        slot
    }

    fn lookup_local(&self, name: &str) -> Option<u16> {
        for b in self.env.iter().rev() {
            match b {
                None => return None,
                Some((n, s)) if n == name => return Some(*s),
                _ => {}
            }
        }
        None
    }

    fn form(&self, te: &TypeExpr, mode: CapMode) -> R<SemType> {
        self.scope.form_type(self.univ, te, &self.tparams, mode, true)
    }

    fn show(&self, t: &SemType) -> String {
        self.univ.show(t)
    }

    fn ctor(&self, path: &Path) -> R<Option<(TypeRef, u16)>> {
        match self.scope.find_ctor(self.univ, path)? {
            Found::Item(x) => Ok(Some(x)),
            Found::Missing => Ok(None),
        }
    }

    fn param(&mut self, p: &Param) -> R<TParam> {
        match p {
            Param::Typed { name, ty } => {
                let t = self.form(ty, CapMode::Declared)?;
                let slot = self.bind(&name.name, t.clone(), name.span);
                Ok(TParam { ty: t, pattern: TPat::Bind(slot), span: name.span })
            }
            Param::Pattern(pat) => {
                let ty = self.pattern_type(pat)?;
                let tp = self.pattern(pat, &ty)?;
                self.irrefutable(&ty, &tp, pat.span)?;
                Ok(TParam { ty, pattern: tp, span: pat.span })
            }
        }
    }

    /// Type demanded by a destructuring parameter.
    fn pattern_type(&self, p: &Pattern) -> R<SemType> {
        match &p.kind {
            PatternKind::Ctor { caps, path, type_args, .. } => {
                let (r, _) = self.ctor(path)?.ok_or_else(|| self.scope.not_found("constructor", path))?;
                let def = self.univ.type_def(r).expect("found");
                let args = match type_args {
                    Some(tas) => {
                        if tas.len() != def.type_params.len() {
                            return Err(mismatch(p.span, format!("`{path}` expects {} type argument(s)", def.type_params.len())));
                        }
                        tas.iter().map(|t| self.form(t, CapMode::Declared)).collect::<R<Vec<_>>>()?
                    }
                    None if def.type_params.is_empty() => Vec::new(),
                    None => {
                        return Err(Diagnostic::new(
                            codes::GENERIC_AMBIG,
                            p.span,
                            format!("type arguments of `{path}` must be written in a parameter pattern"),
                        ))
                    }
                };
                let mut req = CapSet::new();
                for c in caps {
                    req.insert(self.scope.resolve_cap(self.univ, c)?);
                }
                Ok(SemType::new(TypeKind::Adt(r, args), req))
            }
            PatternKind::Tuple(elems) => {
                Ok(SemType::tuple(elems.iter().map(|e| self.pattern_type(e)).collect::<R<Vec<_>>>()?))
            }
            PatternKind::Name(id) if nullary_ctor(self.univ, self.scope, id) => {
                let (r, _) = self.ctor(&Path::single(id.clone()))?.expect("nullary");
                let def = self.univ.type_def(r).expect("found");
                if !def.type_params.is_empty() {
                    return Err(Diagnostic::new(codes::GENERIC_AMBIG, p.span, format!("type arguments of `{}` are unknown", id.name)));
                }
                Ok(SemType::new(TypeKind::Adt(r, vec![]), CapSet::new()))
            }
            _ => Err(mismatch(p.span, "parameter needs a type annotation")),
        }
    }

    fn irrefutable(&self, ty: &SemType, p: &TPat, span: Span) -> R<()> {
        if is_exhaustive(self.univ, ty, &[&p.to_pat()]) {
            Ok(())
        } else {
            Err(Diagnostic::new(codes::MATCH_NONEXH, span, format!("pattern does not cover every value of `{}`", self.show(ty))))
        }
    }

    fn pattern(&mut self, p: &Pattern, ty: &SemType) -> R<TPat> {
        match &p.kind {
            PatternKind::Wild => Ok(TPat::Bind(self.bind("_", ty.clone(), p.span))),
            PatternKind::Name(id) => {
                if nullary_ctor(self.univ, self.scope, id) {
                    self.ctor_pattern(p, &Path::single(id.clone()), &[], &None, &None, ty)
                } else {
                    Ok(TPat::Bind(self.bind(&id.name, ty.clone(), id.span)))
                }
            }
            PatternKind::Ctor { caps, path, type_args, fields } => {
                self.ctor_pattern(p, path, caps, type_args, fields, ty)
            }
            PatternKind::Tuple(elems) => {
                let TypeKind::Tuple(tys) = &ty.kind else {
                    return Err(mismatch(p.span, format!("tuple pattern cannot match `{}`", self.show(ty))));
                };
                if tys.len() != elems.len() {
                    return Err(mismatch(p.span, format!("tuple pattern has {} elements, `{}` has {}", elems.len(), self.show(ty), tys.len())));
                }
                let tys = tys.clone();
                let mut out = Vec::new();
                for (e, t) in elems.iter().zip(&tys) {
                    out.push(self.pattern(e, t)?);
                }
                Ok(TPat::Tuple(out))
            }
        }
    }

    fn ctor_pattern(
        &mut self,
        p: &Pattern,
        path: &Path,
        caps: &[Path],
        type_args: &Option<Vec<TypeExpr>>,
        fields: &Option<Vec<Pattern>>,
        ty: &SemType,
    ) -> R<TPat> {
        let (r, c) = self.ctor(path)?.ok_or_else(|| self.scope.not_found("constructor", path))?;
        let args = match &ty.kind {
            TypeKind::Adt(r2, args) if *r2 == r => args.clone(),
            _ => return Err(mismatch(p.span, format!("constructor `{path}` cannot match a value of type `{}`", self.show(ty)))),
        };
        if let Some(tas) = type_args {
            let given = tas.iter().map(|t| self.form(t, CapMode::Declared)).collect::<R<Vec<_>>>()?;
            if given != args {
                return Err(mismatch(p.span, format!("type arguments of `{path}` do not match `{}`", self.show(ty))));
            }
        }
        for cp in caps {
            let cap = self.scope.resolve_cap(self.univ, cp)?;
            if !ty.caps.contains(&cap) {
                return Err(mismatch(cp.span(), format!("`{}` lacks {}", self.show(ty), self.univ.cap_name(&cap))));
            }
        }
        let field_tys = self.univ.ctor_fields(r, c, &args).expect("found");
        let subs: &[Pattern] = fields.as_deref().unwrap_or(&[]);
        if subs.len() != field_tys.len() {
            return Err(mismatch(p.span, format!("`{path}` has {} field(s), pattern has {}", field_tys.len(), subs.len())));
        }
        let mut out = Vec::new();
        for (s, t) in subs.iter().zip(&field_tys) {
            out.push(self.pattern(s, t)?);
        }
        Ok(TPat::Ctor { ty: r, ctor: c, fields: out, matched: ty.clone(), span: p.span })
    }

    /// Accept `arg` where `expected` is required, inserting an integer
    /// conversion when the kinds differ.
    fn coerce(&self, arg: TExpr, expected: &SemType) -> R<TExpr> {
        if arg.ty.fits(expected) {
            return Ok(arg);
        }
        if let (Some(from), Some(to)) = (num_kind(&arg.ty), num_kind(expected)) {
            if from != to {
                let target = num_type(to);
                if target.fits(expected) {
                    let span = arg.span;
                    let folded = match (&arg.kind, to) {
                        (TKind::Const(Const::UInt(v)), NumKind::Int) => {
                            Some(i64::try_from(*v).map(Const::Int).map_err(|_| ()))
                        }
                        (TKind::Const(Const::Int(v)), NumKind::UInt) => {
                            Some(u64::try_from(*v).map(Const::UInt).map_err(|_| ()))
                        }
                        _ => None,
                    };
                    return match folded {
                        Some(Ok(k)) => Ok(TExpr::new(target, span, TKind::Const(k))),
                        Some(Err(())) => Err(mismatch(span, format!("literal does not fit `{}`", self.show(expected)))),
                        None => Ok(TExpr::new(target, span, TKind::Coerce { to, operand: Box::new(arg) })),
                    };
                }
            }
        }
        Err(mismatch(arg.span, format!("expected `{}`, found `{}`", self.show(expected), self.show(&arg.ty))))
    }

    /// First-use unification of the callee's type variables.
    fn infer(&self, n: usize, params: &[SemType], args: &[SemType], span: Span, what: &str) -> R<Vec<SemType>> {
        fn unify(p: &SemType, a: &SemType, out: &mut [Option<SemType>]) {
            match (&p.kind, &a.kind) {
                (TypeKind::Var(i), _) => {
                    if let Some(slot) = out.get_mut(*i as usize) {
                        if slot.is_none() {
                            *slot = Some(a.clone());
                        }
                    }
                }
                (TypeKind::Adt(r1, ps), TypeKind::Adt(r2, as_)) if r1 == r2 && ps.len() == as_.len() => {
                    ps.iter().zip(as_).for_each(|(p, a)| unify(p, a, out))
                }
                (TypeKind::Tuple(ps), TypeKind::Tuple(as_)) if ps.len() == as_.len() => {
                    ps.iter().zip(as_).for_each(|(p, a)| unify(p, a, out))
                }
                (TypeKind::Context(p), TypeKind::Context(a)) | (TypeKind::Ref(p), TypeKind::Ref(a)) => unify(p, a, out),
                _ => {}
            }
        }
        let mut out = vec![None; n];
        for (p, a) in params.iter().zip(args) {
            unify(p, a, &mut out);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or_else(|| {
                    Diagnostic::new(
                        codes::GENERIC_AMBIG,
                        span,
                        format!("type argument {} of `{what}` cannot be inferred; write it explicitly", i + 1),
                    )
                })
            })
            .collect()
    }

    fn type_args(&self, tas: &Option<Vec<TypeExpr>>) -> R<Option<Vec<SemType>>> {
        match tas {
            None => Ok(None),
            Some(v) => Ok(Some(v.iter().map(|t| self.form(t, CapMode::Declared)).collect::<R<Vec<_>>>()?)),
        }
    }

    fn construct(
        &mut self,
        span: Span,
        path: &Path,
        (r, c): (TypeRef, u16),
        type_args: &Option<Vec<TypeExpr>>,
        args: &Option<Vec<Expr>>,
    ) -> R<TExpr> {
        let def = self.univ.type_def(r).expect("found");
        if r.module != ModuleId::Local && !def.open {
            return Err(Diagnostic::new(
                codes::CTOR_CLOSED,
                span,
                format!("`{}` is not open; only its defining module may construct it", self.univ.type_name(r)),
            ));
        }
        let n_params = def.type_params.len();
        let arity = def.ctors[c as usize].fields.len();
        let args: &[Expr] = args.as_deref().unwrap_or(&[]);
        if args.len() != arity {
            return Err(mismatch(span, format!("`{path}` takes {arity} field(s), found {}", args.len())));
        }
        let mut typed = Vec::new();
        for a in args {
            typed.push(self.expr(a, None)?);
        }
        let targs = match self.type_args(type_args)? {
            Some(t) if t.len() != n_params => {
                return Err(mismatch(span, format!("`{path}` expects {n_params} type argument(s), found {}", t.len())))
            }
            Some(t) => t,
            None => {
                let vars: Vec<SemType> = (0..n_params as u16).map(SemType::var).collect();
                let raw = self.univ.ctor_fields(r, c, &vars).expect("found");
                let arg_tys: Vec<SemType> = typed.iter().map(|t| t.ty.clone()).collect();
                self.infer(n_params, &raw, &arg_tys, span, &path.to_string())?
            }
        };
        let expected = self.univ.ctor_fields(r, c, &targs).expect("found");
        let mut fields = Vec::new();
        for (a, e) in typed.into_iter().zip(&expected) {
            fields.push(self.coerce(a, e)?);
        }
        let ty = self.univ.adt(r, targs.clone()).expect("found");
        Ok(TExpr::new(ty, span, TKind::Construct { ty: r, type_args: targs, ctor: c, fields }))
    }

    fn call(&mut self, span: Span, path: &Path, f: FnRef, type_args: &Option<Vec<TypeExpr>>, args: &Option<Vec<Expr>>) -> R<(TCall, SemType)> {
        let sig = self.univ.fn_sig(f).expect("found");
        let Some(args) = args else {
            return Err(mismatch(span, format!("function `{path}` must be called with an argument list")));
        };
        if args.len() != sig.params.len() {
            return Err(mismatch(span, format!("`{path}` takes {} argument(s), found {}", sig.params.len(), args.len())));
        }
        let mut typed = Vec::new();
        for a in args {
            typed.push(self.expr(a, None)?);
        }
        let targs = match self.type_args(type_args)? {
            Some(t) if t.len() != sig.type_params => {
                return Err(mismatch(span, format!("`{path}` expects {} type argument(s), found {}", sig.type_params, t.len())))
            }
            Some(t) => t,
            None => {
                let arg_tys: Vec<SemType> = typed.iter().map(|t| t.ty.clone()).collect();
                self.infer(sig.type_params, &sig.params, &arg_tys, span, &path.to_string())?
            }
        };
        let mut out = Vec::new();
        for (a, p) in typed.into_iter().zip(&sig.params) {
            out.push(self.coerce(a, &p.subst(&targs))?);
        }
        let ret = sig.ret.subst(&targs);
        Ok((TCall { func: f, type_args: targs, args: out }, ret))
    }

    fn default_for(&self, inner: &SemType) -> Option<FnRef> {
        match &inner.kind {
            TypeKind::Adt(r, _) => self.univ.default_for(*r, self.site.fn_limit(self.univ.local.fns.len())),
            _ => None,
        }
    }

    fn apply(&mut self, e: &Expr, path: &Path, type_args: &Option<Vec<TypeExpr>>, args: &Option<Vec<Expr>>) -> R<TExpr> {
        let span = e.span;
        if is_builtin_qualified(path) {
            let no_args = matches!(args, Some(a) if a.is_empty());
            if path.segments[0].name == "ID" {
                if !no_args || type_args.is_some() {
                    return Err(mismatch(span, "`ID.new` is called as `ID.new()`"));
                }
                return Ok(TExpr::new(SemType::master_id(), span, TKind::NewId));
            }
            let tas = type_args.as_deref().unwrap_or(&[]);
            if !no_args || tas.len() != 1 {
                return Err(mismatch(span, "`Context.new` is called as `Context.new[T]()`"));
            }
            let inner = self.form(&tas[0], CapMode::Declared)?;
            check_persist(self.univ, &inner, tas[0].span)?;
            return Ok(TExpr::new(SemType::context(inner.clone()), span, TKind::NewContext { inner }));
        }
        if let Some(rc) = self.ctor(path)? {
            return self.construct(span, path, rc, type_args, args);
        }
        if let Found::Item(f) = self.scope.find_fn(self.univ, path)? {
            let (call, ret) = self.call(span, path, f, type_args, args)?;
            return Ok(TExpr::new(ret, span, TKind::Call(call)));
        }
        let name = path.segments[0].name.as_str();
        if path.is_single() && (name == "derive" || name == "read") {
            let args: &[Expr] = args.as_deref().unwrap_or(&[]);
            if type_args.is_some() {
                return Err(mismatch(span, format!("`{name}` takes no type arguments")));
            }
            if name == "derive" {
                if args.len() != 2 {
                    return Err(mismatch(span, "`derive` takes a context and an ID"));
                }
                let ctx = self.expr(&args[0], None)?;
                let id = self.expr(&args[1], None)?;
                let TypeKind::Context(inner) = &ctx.ty.kind else {
                    return Err(mismatch(ctx.span, format!("expected a Context, found `{}`", self.show(&ctx.ty))));
                };
                if id.ty.kind != TypeKind::Id {
                    return Err(mismatch(id.span, format!("expected an ID, found `{}`", self.show(&id.ty))));
                }
                let ty = SemType::reference((**inner).clone(), true);
                return Ok(TExpr::new(ty, span, TKind::Derive { context: Box::new(ctx), id: Box::new(id) }));
            }
            if args.len() != 1 {
                return Err(mismatch(span, "`read` takes one reference"));
            }
            let reference = self.expr(&args[0], None)?;
            let TypeKind::Ref(inner) = &reference.ty.kind else {
                return Err(mismatch(reference.span, format!("expected a Ref, found `{}`", self.show(&reference.ty))));
            };
            let inner = (**inner).clone();
            let default = self.default_for(&inner);
            return Ok(TExpr::new(inner, span, TKind::Read { reference: Box::new(reference), default }));
        }
        Err(self.scope.not_found("function or constructor", path))
    }

    /// `cell` is the content type of the innermost modify when `e` is in
    /// tail position of its body.
    pub fn expr(&mut self, e: &Expr, cell: Option<&SemType>) -> R<TExpr> {
        let span = e.span;
        match &e.kind {
            ExprKind::Lit(Literal::UInt(v)) => Ok(TExpr::new(SemType::uint(), span, TKind::Const(Const::UInt(*v)))),
            ExprKind::Lit(Literal::Int(v)) => Ok(TExpr::new(SemType::int(), span, TKind::Const(Const::Int(*v)))),
            ExprKind::Unit => Ok(TExpr::new(SemType::unit(), span, TKind::Const(Const::Unit))),
            ExprKind::Name(path) => {
                if path.is_single() {
                    if let Some(slot) = self.lookup_local(&path.segments[0].name) {
                        let ty = self.locals[slot as usize].ty.clone();
                        return Ok(TExpr::new(ty, span, TKind::Local(slot, Use::Move)));
                    }
                }
                if let Found::Item(v) = self.scope.find_val(self.univ, path)? {
                    let ty = self.univ.val_ty(v).expect("found");
                    return Ok(TExpr::new(ty, span, TKind::Val(v)));
                }
                match self.ctor(path)? {
                    Some(rc) => self.construct(span, path, rc, &None, &None),
                    None => Err(self.scope.not_found("name", path)),
                }
            }
            ExprKind::Apply { path, type_args, args } => self.apply(e, path, type_args, args),
            ExprKind::Tuple(elems) => {
                let elems = elems.iter().map(|x| self.expr(x, None)).collect::<R<Vec<_>>>()?;
                let ty = SemType::tuple(elems.iter().map(|t| t.ty.clone()).collect());
                Ok(TExpr::new(ty, span, TKind::Tuple(elems)))
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs, None)?;
                let r = self.expr(rhs, None)?;
                let (Some(lk), Some(rk)) = (num_kind(&l.ty), num_kind(&r.ty)) else {
                    let bad = if num_kind(&l.ty).is_none() { &l } else { &r };
                    return Err(mismatch(bad.span, format!("arithmetic needs UInt or Int, found `{}`", self.show(&bad.ty))));
                };
                let is_lit = |t: &TExpr| matches!(t.kind, TKind::Const(_));
                let kind = if lk == rk {
                    lk
                } else if is_lit(&r) {
                    lk
                } else if is_lit(&l) {
                    rk
                } else {
                    return Err(mismatch(span, format!("cannot combine `{}` and `{}`", self.show(&l.ty), self.show(&r.ty))));
                };
                let target = num_type(kind);
                let l = if lk == kind { l } else { self.coerce(l, &target)? };
                let r = if rk == kind { r } else { self.coerce(r, &target)? };
                let op = match op {
                    BinOp::Add => ArithOp::Add,
                    BinOp::Sub => ArithOp::Sub,
                };
                Ok(TExpr::new(target, span, TKind::Arith { op, lhs: Box::new(l), rhs: Box::new(r) }))
            }
            ExprKind::Let { pattern, bound, body } => {
                let bound = self.expr(bound, None)?;
                let mark = self.env.len();
                let pat = self.pattern(pattern, &bound.ty)?;
                self.irrefutable(&bound.ty, &pat, pattern.span)?;
                let body = self.expr(body, cell)?;
                self.env.truncate(mark);
                Ok(TExpr::new(body.ty.clone(), span, TKind::Let { pattern: pat, bound: Box::new(bound), body: Box::new(body) }))
            }
            ExprKind::Case { scrutinee, arms } => {
                let scrut = self.expr(scrutinee, None)?;
                let mut tarms: Vec<TArm> = Vec::new();
                for a in arms {
                    let mark = self.env.len();
                    let pat = self.pattern(&a.pattern, &scrut.ty)?;
                    let body = self.expr(&a.body, cell)?;
                    self.env.truncate(mark);
                    if let Some(first) = tarms.first() {
                        if first.body.ty != body.ty {
                            return Err(mismatch(
                                a.body.span,
                                format!("arm has type `{}`, the first arm has `{}`", self.show(&body.ty), self.show(&first.body.ty)),
                            ));
                        }
                    }
                    tarms.push(TArm { pattern: pat, body, span: a.pattern.span });
                }
                let pats: Vec<_> = tarms.iter().map(|a| a.pattern.to_pat()).collect();
                let refs: Vec<_> = pats.iter().collect();
                if !is_exhaustive(self.univ, &scrut.ty, &refs) {
                    return Err(Diagnostic::new(
                        codes::MATCH_NONEXH,
                        span,
                        format!("case does not cover every value of `{}`", self.show(&scrut.ty)),
                    ));
                }
                let Some(first) = tarms.first() else {
                    return Err(mismatch(span, "case needs at least one arm"));
                };
                let ty = first.body.ty.clone();
                Ok(TExpr::new(ty, span, TKind::Match { scrutinee: Box::new(scrut), arms: tarms }))
            }
            ExprKind::Modify { reference, binder, body } => {
                let reference = self.expr(reference, None)?;
                let TypeKind::Ref(inner) = &reference.ty.kind else {
                    return Err(mismatch(reference.span, format!("modify needs a Ref, found `{}`", self.show(&reference.ty))));
                };
                let inner = (**inner).clone();
                let mark = self.env.len();
                let slot = self.modify_binder(binder, &inner)?;
                let body = self.expr(body, Some(&inner))?;
                self.env.truncate(mark);
                let returns = match tails(&body) {
                    Tails::Plain => false,
                    Tails::Returns => true,
                    Tails::Mixed => {
                        return Err(mismatch(body.span, "either every or no branch of a modify body ends in `& return`"))
                    }
                };
                if !returns && !body.ty.fits(&inner) {
                    return Err(mismatch(
                        body.span,
                        format!("cell holds `{}`, body yields `{}`", self.show(&inner), self.show(&body.ty)),
                    ));
                }
                let ty = if returns { body.ty.clone() } else { SemType::unit() };
                let default = self.default_for(&inner);
                Ok(TExpr::new(
                    ty,
                    span,
                    TKind::Modify { reference: Box::new(reference), binder: slot, default, returns, body: Box::new(body) },
                ))
            }
            ExprKind::AndReturn { cell: c, result } => {
                let Some(inner) = cell else {
                    return Err(mismatch(span, "`& return` may only end the body of a modify"));
                };
                let c = self.expr(c, None)?;
                if !c.ty.fits(inner) {
                    return Err(mismatch(c.span, format!("cell holds `{}`, found `{}`", self.show(inner), self.show(&c.ty))));
                }
                let result = self.expr(result, None)?;
                Ok(TExpr::new(result.ty.clone(), span, TKind::AndReturn { cell: Box::new(c), result: Box::new(result) }))
            }
            ExprKind::Attach { expr, cap } => {
                let operand = self.expr(expr, None)?;
                let cap = self.scope.resolve_cap(self.univ, cap)?;
                let ty = operand.ty.clone().with_caps(operand.ty.caps.clone().with(cap));
                Ok(TExpr::new(ty, span, TKind::Attach { operand: Box::new(operand), cap }))
            }
            ExprKind::Detach { expr, cap } => {
                let operand = self.expr(expr, None)?;
                let cap = self.scope.resolve_cap(self.univ, cap)?;
                if matches!(operand.ty.kind, TypeKind::Tuple(_)) {
                    return Err(mismatch(span, "a tuple's capabilities follow its elements and cannot be detached"));
                }
                let ty = operand.ty.clone().with_caps(operand.ty.caps.clone().without(&cap));
                Ok(TExpr::new(ty, span, TKind::Detach { operand: Box::new(operand), cap }))
            }
            ExprKind::Cycle { bound, init, acc, body } => {
                let init = self.expr(init, None)?;
                let mark = self.env.len();
                self.env.push(None);
                let slot = self.bind(&acc.name, init.ty.clone(), acc.span);
                let body = self.expr(body, None)?;
                self.env.truncate(mark);
                if body.ty != init.ty {
                    return Err(mismatch(
                        body.span,
                        format!("loop body yields `{}`, the accumulator is `{}`", self.show(&body.ty), self.show(&init.ty)),
                    ));
                }
                Ok(TExpr::new(init.ty.clone(), span, TKind::Cycle { bound: *bound, init: Box::new(init), acc: slot, body: Box::new(body) }))
            }
            ExprKind::Try { call, handlers } => {
                let ExprKind::Apply { path, type_args, args: Some(args) } = &call.kind else {
                    return Err(mismatch(call.span, "try needs a function call"));
                };
                let f = match self.scope.find_fn(self.univ, path)? {
                    Found::Item(f) if self.ctor(path)?.is_none() => f,
                    _ => return Err(mismatch(call.span, format!("`{path}` is not a function"))),
                };
                let (tcall, ret) = self.call(call.span, path, f, type_args, &Some(args.clone()))?;
                let mut seen: Vec<Risk> = Vec::new();
                let mut ths = Vec::new();
                for h in handlers {
                    let risk = self.scope.resolve_risk(&h.risk)?;
                    if seen.contains(&risk) {
                        return Err(Diagnostic::new(codes::NAME_DUP, h.risk.span(), format!("risk `{}` is handled twice", h.risk)));
                    }
                    seen.push(risk.clone());
                    if h.binders.len() != tcall.args.len() {
                        return Err(mismatch(
                            h.risk.span(),
                            format!("handler binds {} argument(s), `{path}` takes {}", h.binders.len(), tcall.args.len()),
                        ));
                    }
                    let mark = self.env.len();
                    let binders: Vec<u16> =
                        h.binders.iter().zip(&tcall.args).map(|(b, a)| self.bind(&b.name, a.ty.clone(), b.span)).collect();
                    let body = self.expr(&h.body, None)?;
                    self.env.truncate(mark);
                    if body.ty != ret {
                        return Err(mismatch(
                            h.body.span,
                            format!("handler yields `{}`, the call yields `{}`", self.show(&body.ty), self.show(&ret)),
                        ));
                    }
                    ths.push(THandler { risk, binders, body, span: h.risk.span() });
                }
                Ok(TExpr::new(ret, span, TKind::Try { call: tcall, success_drops: Vec::new(), handlers: ths }))
            }
        }
    }

    /// `modify r with x =>` or `modify r with T(x) =>`, where `T` names the
    /// cell's type or its constructor; either way `x` is the whole content.
    fn modify_binder(&mut self, binder: &Pattern, inner: &SemType) -> R<u16> {
        match &binder.kind {
            PatternKind::Name(x) => Ok(self.bind(&x.name, inner.clone(), x.span)),
            PatternKind::Wild => Ok(self.bind("_", inner.clone(), binder.span)),
            PatternKind::Ctor { caps, path, type_args: None, fields: Some(f) } if caps.is_empty() && f.len() == 1 => {
                let TypeKind::Adt(r, _) = &inner.kind else {
                    return Err(mismatch(binder.span, format!("cell holds `{}`, not `{path}`", self.show(inner))));
                };
                let names_type = matches!(self.scope.find_type(self.univ, path), Ok(Found::Item(t)) if t == *r);
                let names_ctor = matches!(self.ctor(path), Ok(Some((t, _))) if t == *r);
                if !names_type && !names_ctor {
                    return Err(mismatch(binder.span, format!("cell holds `{}`, not `{path}`", self.show(inner))));
                }
                match &f[0].kind {
                    PatternKind::Name(x) => Ok(self.bind(&x.name, inner.clone(), x.span)),
                    PatternKind::Wild => Ok(self.bind("_", inner.clone(), f[0].span)),
                    _ => Err(mismatch(f[0].span, "a modify binder names the whole cell content")),
                }
            }
            _ => Err(mismatch(binder.span, "a modify binder is a name or `Type(name)`")),
        }
    }
}

