//! Single forward pass over each instruction tree. The set of available
//! slots is threaded through evaluation order; a slot leaves it on `Move`
//! or `Drop`, and every scope must end with its own bindings gone.

use std::collections::BTreeSet;

use crate::bytecode::*;
use crate::registry::Registry;
use crate::sema::env::{LocalItems, Universe};
use crate::sema::resolve::Site;
use crate::sema::rules::{
    arith_risks, check_attach, check_call_visibility, check_decl_caps, coerce_risk, is_exhaustive, num_kind, num_type,
    CapViolation,
};
use crate::types::{tuple_caps, Cap, Effect, FnRef, ModuleId, Risk, SemType, TypeKind, TypeRef, Visibility};
use crate::validator::{RejectCode, Rejection};

type V<T> = Result<T, Rejection>;

fn rej<T>(code: RejectCode, detail: impl Into<String>) -> V<T> {
    Err(Rejection::new(code, detail))
}

pub fn check_module(m: &BytecodeModule, registry: &dyn Registry) -> V<()> {
    for a in &m.imports {
        if registry.module(a).is_none() {
            return rej(RejectCode::DepMissing, format!("dependency {a} is not deployed"));
        }
    }
    if m.referenced_modules() != m.imports {
        return rej(RejectCode::Type, "import table does not match the referenced modules");
    }
    let univ = Universe::new(registry, LocalItems::from_module(m));
    let cx = ModuleCx { univ: &univ, m };
    cx.names()?;
    cx.types()?;
    for (i, f) in m.functions.iter().enumerate() {
        cx.function(i, f).map_err(|r| Rejection::new(r.code, format!("fn {}: {}", f.name, r.detail)))?;
    }
    let mut last_after = 0;
    for (j, v) in m.vals.iter().enumerate() {
        if (v.after_fns as usize) > m.functions.len() || v.after_fns < last_after {
            return rej(RejectCode::Type, format!("val {}: bad declaration position", v.name));
        }
        last_after = v.after_fns;
        cx.val(j, v).map_err(|r| Rejection::new(r.code, format!("val {}: {}", v.name, r.detail)))?;
    }
    if let Some(i) = &m.init {
        cx.init(i).map_err(|r| Rejection::new(r.code, format!("init: {}", r.detail)))?;
    }
    Ok(())
}

struct ModuleCx<'a, 'r> {
    univ: &'a Universe<'r>,
    m: &'a BytecodeModule,
}

fn unique<'x>(names: impl Iterator<Item = &'x str>, what: &str) -> V<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return rej(RejectCode::Type, format!("duplicate {what} name {n}"));
        }
    }
    Ok(())
}

impl ModuleCx<'_, '_> {
    fn names(&self) -> V<()> {
        unique(self.m.types.iter().map(|t| t.name.as_str()), "type")?;
        unique(self.m.types.iter().flat_map(|t| &t.ctors).map(|c| c.name.as_str()), "constructor")?;
        unique(self.m.caps.iter().map(|c| c.name.as_str()), "capability")?;
        unique(self.m.functions.iter().map(|f| f.name.as_str()), "function")?;
        unique(self.m.vals.iter().map(|v| v.name.as_str()), "val")
    }

    fn types(&self) -> V<()> {
        for (i, t) in self.m.types.iter().enumerate() {
            for c in t.caps.iter() {
                wf_cap(self.univ, c)?;
            }
            for f in t.ctors.iter().flat_map(|c| &c.fields) {
                wf(self.univ, f, t.type_params.len())
                    .map_err(|r| Rejection::new(r.code, format!("type {}: {}", t.name, r.detail)))?;
            }
            match check_decl_caps(self.univ, TypeRef::local(i as u16)) {
                Ok(()) => {}
                Err(CapViolation::Attach(m)) | Err(CapViolation::Struct(m)) => return rej(RejectCode::Cap, m),
            }
        }
        Ok(())
    }

    fn function(&self, i: usize, f: &FunctionDef) -> V<()> {
        let n = f.type_params.len();
        if let Visibility::Protected(p) = f.visibility {
            if p as usize >= n {
                return rej(RejectCode::Type, "protected by a missing type parameter");
            }
        }
        for t in f.params.iter().map(|p| &p.ty).chain(&f.locals).chain([&f.ret]) {
            wf(self.univ, t, n)?;
        }
        if let Some(x) = f.default_for {
            let Some(def) = self.m.types.get(x as usize) else {
                return rej(RejectCode::Type, "default for a missing type");
            };
            if self.m.functions[..i].iter().any(|g| g.default_for == Some(x)) {
                return rej(RejectCode::DefaultDup, format!("type {} already has a default", def.name));
            }
            let vars: Vec<SemType> = (0..def.type_params.len() as u16).map(SemType::var).collect();
            let expected = self.univ.adt(TypeRef::local(x), vars).expect("checked");
            if f.visibility != Visibility::Public
                || !f.params.is_empty()
                || n != def.type_params.len()
                || f.ret != expected
                || f.effect != Effect::Pure
                || !f.risks.is_empty()
            {
                return rej(RejectCode::Type, format!("malformed default for {}", def.name));
            }
        }
        let mut b = Body::new(self.univ, &f.locals, n, Site::Fn(i), f.effect, false);
        for p in &f.params {
            b.bind(&p.pattern, &p.ty)?;
        }
        let ty = b.node(&f.body, None)?;
        b.finish()?;
        if ty != f.ret {
            return rej(RejectCode::Type, "body type differs from the declared return type");
        }
        for r in &b.raised {
            if !f.risks.contains(r) {
                return rej(RejectCode::Risk, format!("undeclared risk {r}"));
            }
        }
        Ok(())
    }

    fn val(&self, j: usize, v: &ValDef) -> V<()> {
        for t in v.locals.iter().chain([&v.ty]) {
            wf(self.univ, t, 0)?;
        }
        let site = Site::Val { index: j, after_fns: v.after_fns as usize };
        let mut b = Body::new(self.univ, &v.locals, 0, site, Effect::Init, true);
        let ty = b.node(&v.init, None)?;
        b.finish()?;
        if ty != v.ty {
            return rej(RejectCode::Type, "initializer type differs from the declared type");
        }
        if !(ty.caps.has_copy() && ty.caps.has_persist()) {
            return rej(RejectCode::Cap, "values need Copy and Persist");
        }
        Ok(())
    }

    fn init(&self, i: &InitDef) -> V<()> {
        for t in i.locals.iter() {
            wf(self.univ, t, 0)?;
        }
        if i.param.ty != SemType::master_id() || !matches!(i.param.pattern, Pat::Bind(_)) {
            return rej(RejectCode::Type, "the init parameter must be a Master ID");
        }
        let mut b = Body::new(self.univ, &i.locals, 0, Site::Init, Effect::Active, false);
        b.bind(&i.param.pattern, &i.param.ty)?;
        b.node(&i.body, None)?;
        b.finish()?;
        for r in &b.raised {
            if !i.risks.contains(r) {
                return rej(RejectCode::Risk, format!("undeclared risk {r}"));
            }
        }
        Ok(())
    }
}

fn wf_cap(univ: &Universe, c: &Cap) -> V<()> {
    if let Cap::User(r) = c {
        if univ.cap_def(*r).is_none() {
            return rej(RejectCode::Type, "reference to a missing capability");
        }
    }
    Ok(())
}

/// Well-formedness of a type mentioning at most `n` type variables.
pub fn wf(univ: &Universe, t: &SemType, n: usize) -> V<()> {
    for c in t.caps.iter() {
        wf_cap(univ, c)?;
    }
    if t.caps.contains(&Cap::Modify) && !matches!(t.kind, TypeKind::Ref(_)) {
        return rej(RejectCode::Type, "Modify on a non-reference type");
    }
    if t.caps.contains(&Cap::Master) && t.kind != TypeKind::Id {
        return rej(RejectCode::Type, "Master on a non-ID type");
    }
    match &t.kind {
        TypeKind::UInt | TypeKind::Int | TypeKind::Unit | TypeKind::Id => Ok(()),
        TypeKind::Context(inner) | TypeKind::Ref(inner) => {
            wf(univ, inner, n)?;
            if matches!(inner.kind, TypeKind::Var(_)) || !inner.caps.has_persist() {
                return rej(RejectCode::Type, "cell contents lack Persist");
            }
            Ok(())
        }
        TypeKind::Adt(r, args) => {
            let Some(def) = univ.type_def(*r) else {
                return rej(RejectCode::Type, "reference to a missing type");
            };
            if def.type_params.len() != args.len() {
                return rej(RejectCode::Type, format!("wrong number of type arguments for {}", def.name));
            }
            args.iter().try_for_each(|a| wf(univ, a, n))
        }
        TypeKind::Var(i) => {
            if (*i as usize) < n && t.caps.is_empty() {
                Ok(())
            } else {
                rej(RejectCode::Type, "type variable out of range")
            }
        }
        TypeKind::Tuple(elems) => {
            elems.iter().try_for_each(|a| wf(univ, a, n))?;
            if t.caps != tuple_caps(elems) {
                return rej(RejectCode::Type, "tuple capabilities differ from their elements'");
            }
            Ok(())
        }
    }
}

struct Body<'a, 'r> {
    univ: &'a Universe<'r>,
    locals: &'a [SemType],
    n_tparams: usize,
    site: Site,
    declared: Effect,
    val_mode: bool,
    in_modify: bool,
    avail: BTreeSet<u16>,
    /// Slots ever bound; a slot is bound at most once per body.
    bound: BTreeSet<u16>,
    raised: BTreeSet<Risk>,
}

impl<'a, 'r> Body<'a, 'r> {
    fn new(univ: &'a Universe<'r>, locals: &'a [SemType], n: usize, site: Site, declared: Effect, val_mode: bool) -> Self {
        Body {
            univ,
            locals,
            n_tparams: n,
            site,
            declared,
            val_mode,
            in_modify: false,
            avail: BTreeSet::new(),
            bound: BTreeSet::new(),
            raised: BTreeSet::new(),
        }
    }

    fn finish(&self) -> V<()> {
        if !self.avail.is_empty() {
            return rej(RejectCode::Linear, format!("slots {:?} are never consumed", self.avail));
        }
        Ok(())
    }

    fn local(&self, s: u16) -> V<&'a SemType> {
        match self.locals.get(s as usize) {
            Some(t) => Ok(t),
            None => rej(RejectCode::Type, format!("slot {s} out of range")),
        }
    }

    fn need(&self, eff: Effect) -> V<()> {
        if (self.in_modify && eff > Effect::Pure) || (self.val_mode && eff > Effect::Init) || eff > self.declared {
            return rej(RejectCode::Effect, format!("{} operation not allowed here", eff.keyword()));
        }
        Ok(())
    }

    /// Introduce the slots of `p` for a value of type `ty`.
    fn bind(&mut self, p: &Pat, ty: &SemType) -> V<()> {
        if !is_exhaustive(self.univ, ty, &[p]) {
            return rej(RejectCode::Type, "refutable binding pattern");
        }
        self.pattern(p, ty)
    }

    fn pattern(&mut self, p: &Pat, ty: &SemType) -> V<()> {
        match p {
            Pat::Bind(s) => {
                if self.local(*s)? != ty {
                    return rej(RejectCode::Type, format!("slot {s} has the wrong type"));
                }
                if !self.bound.insert(*s) {
                    return rej(RejectCode::Linear, format!("slot {s} bound twice"));
                }
                self.avail.insert(*s);
                Ok(())
            }
            Pat::Ctor { ty: r, ctor, fields } => {
                let TypeKind::Adt(r2, args) = &ty.kind else {
                    return rej(RejectCode::Type, "constructor pattern on a non-ADT");
                };
                if r != r2 {
                    return rej(RejectCode::Type, "constructor pattern of another type");
                }
                if r.module != ModuleId::Local && !ty.caps.contains(&Cap::Inspect) {
                    return rej(RejectCode::Cap, "unpacking a foreign type without Inspect");
                }
                let Some(ftys) = self.univ.ctor_fields(*r, *ctor, args) else {
                    return rej(RejectCode::Type, "missing constructor");
                };
                if ftys.len() != fields.len() {
                    return rej(RejectCode::Type, "constructor pattern arity");
                }
                for (f, t) in fields.iter().zip(&ftys) {
                    self.pattern(f, t)?;
                }
                Ok(())
            }
            Pat::Tuple(elems) => {
                let TypeKind::Tuple(tys) = &ty.kind else {
                    return rej(RejectCode::Type, "tuple pattern on a non-tuple");
                };
                if tys.len() != elems.len() {
                    return rej(RejectCode::Type, "tuple pattern arity");
                }
                for (e, t) in elems.iter().zip(tys) {
                    self.pattern(e, t)?;
                }
                Ok(())
            }
        }
    }

    fn scoped_out(&self, p: &Pat) -> V<()> {
        let mut slots = Vec::new();
        p.slots(&mut slots);
        self.slots_out(&slots)
    }

    fn slots_out(&self, slots: &[u16]) -> V<()> {
        if slots.iter().any(|s| self.avail.contains(s)) {
            return rej(RejectCode::Linear, "binding not consumed in its scope");
        }
        Ok(())
    }

    fn default_ok(&mut self, inner: &SemType, default: Option<FnRef>) -> V<()> {
        let expected = match &inner.kind {
            TypeKind::Adt(r, _) => self.univ.default_for(*r, self.site.fn_limit(self.univ.local.fns.len())),
            _ => None,
        };
        if expected != default {
            return rej(RejectCode::Type, "cell default differs from the registered default");
        }
        match default {
            None => {
                self.raised.insert(Risk::EmptyCell);
            }
            Some(d) => {
                let sig = self.univ.fn_sig(d).expect("registered default");
                self.need(sig.effect)?;
                self.raised.extend(sig.risks);
            }
        }
        Ok(())
    }

    fn call(&mut self, c: &CallSite) -> V<(SemType, Vec<SemType>, Vec<Risk>)> {
        if c.func.module == ModuleId::Local && !self.site.fn_visible(c.func.index as usize) {
            return rej(RejectCode::Type, "call to a later or the same function");
        }
        let Some(sig) = self.univ.fn_sig(c.func) else {
            return rej(RejectCode::Type, "call to a missing function");
        };
        if c.type_args.len() != sig.type_params || c.args.len() != sig.params.len() {
            return rej(RejectCode::Type, format!("call to {} has the wrong arity", sig.name));
        }
        for t in &c.type_args {
            wf(self.univ, t, self.n_tparams)?;
        }
        if let Err(v) = check_call_visibility(self.univ, c.func, &sig, &c.type_args) {
            return rej(RejectCode::Cap, format!("{v:?}"));
        }
        self.need(sig.effect)?;
        let mut arg_tys = Vec::new();
        for (a, p) in c.args.iter().zip(&sig.params) {
            let t = self.node(a, None)?;
            if !t.fits(&p.subst(&c.type_args)) {
                return rej(RejectCode::Type, format!("argument to {} has the wrong type", sig.name));
            }
            arg_tys.push(t);
        }
        Ok((sig.ret.subst(&c.type_args), arg_tys, sig.risks))
    }

    fn node(&mut self, n: &Node, cell: Option<&SemType>) -> V<SemType> {
        match n {
            Node::Const(Const::UInt(_)) => Ok(SemType::uint()),
            Node::Const(Const::Int(_)) => Ok(SemType::int()),
            Node::Const(Const::Unit) => Ok(SemType::unit()),
            Node::Move(s) => {
                if !self.avail.remove(s) {
                    return rej(RejectCode::Linear, format!("slot {s} used after it was consumed"));
                }
                Ok(self.local(*s)?.clone())
            }
            Node::Copy(s) => {
                if !self.avail.contains(s) {
                    return rej(RejectCode::Linear, format!("slot {s} used after it was consumed"));
                }
                let t = self.local(*s)?;
                if !t.caps.has_copy() {
                    return rej(RejectCode::Linear, format!("copy of slot {s} without Copy"));
                }
                Ok(t.clone())
            }
            Node::Drop { slots, body } => {
                for s in slots {
                    if !self.avail.remove(s) {
                        return rej(RejectCode::Linear, format!("drop of unavailable slot {s}"));
                    }
                    if !self.local(*s)?.caps.has_drop() {
                        return rej(RejectCode::Linear, format!("drop of slot {s} without Drop"));
                    }
                }
                self.node(body, cell)
            }
            Node::Val(v) => {
                if v.module == ModuleId::Local {
                    let Some(vs) = self.univ.local.vals.get(v.index as usize) else {
                        return rej(RejectCode::Type, "missing val");
                    };
                    if !self.site.val_visible(v.index as usize, vs.after_fns as usize) {
                        return rej(RejectCode::Type, "val referenced before its declaration");
                    }
                }
                match self.univ.val_ty(*v) {
                    Some(t) => Ok(t),
                    None => rej(RejectCode::Type, "missing val"),
                }
            }
            Node::Arith { op, lhs, rhs } => {
                let l = self.node(lhs, None)?;
                let r = self.node(rhs, None)?;
                match (num_kind(&l), num_kind(&r)) {
                    (Some(a), Some(b)) if a == b => {
                        self.raised.extend(arith_risks(*op, a));
                        Ok(num_type(a))
                    }
                    _ => rej(RejectCode::Type, "arithmetic on mismatched operands"),
                }
            }
            Node::Coerce { to, operand } => {
                let t = self.node(operand, None)?;
                match num_kind(&t) {
                    Some(k) if k != *to => {
                        self.raised.insert(coerce_risk(*to));
                        Ok(num_type(*to))
                    }
                    _ => rej(RejectCode::Type, "bad integer conversion"),
                }
            }
            Node::Construct { ty, type_args, ctor, fields } => {
                let Some(def) = self.univ.type_def(*ty) else {
                    return rej(RejectCode::Type, "construct of a missing type");
                };
                if ty.module != ModuleId::Local && !def.open {
                    return rej(RejectCode::Cap, format!("construct of closed type {}", def.name));
                }
                if type_args.len() != def.type_params.len() {
                    return rej(RejectCode::Type, "construct with wrong type arity");
                }
                for t in type_args {
                    wf(self.univ, t, self.n_tparams)?;
                }
                let Some(ftys) = self.univ.ctor_fields(*ty, *ctor, type_args) else {
                    return rej(RejectCode::Type, "missing constructor");
                };
                if ftys.len() != fields.len() {
                    return rej(RejectCode::Type, "construct with wrong field count");
                }
                for (f, e) in fields.iter().zip(&ftys) {
                    if !self.node(f, None)?.fits(e) {
                        return rej(RejectCode::Type, "field of the wrong type");
                    }
                }
                Ok(self.univ.adt(*ty, type_args.clone()).expect("checked"))
            }
            Node::Tuple(elems) => {
                let mut tys = Vec::new();
                for e in elems {
                    tys.push(self.node(e, None)?);
                }
                Ok(SemType::tuple(tys))
            }
            Node::Let { pattern, bound, body } => {
                let t = self.node(bound, None)?;
                self.bind(pattern, &t)?;
                let r = self.node(body, cell)?;
                self.scoped_out(pattern)?;
                Ok(r)
            }
            Node::Match { scrutinee, arms } => {
                let t = self.node(scrutinee, None)?;
                let pats: Vec<&Pat> = arms.iter().map(|a| &a.pattern).collect();
                if arms.is_empty() || !is_exhaustive(self.univ, &t, &pats) {
                    return rej(RejectCode::Type, "non-exhaustive match");
                }
                let start = self.avail.clone();
                let mut result: Option<(SemType, BTreeSet<u16>)> = None;
                for a in arms {
                    self.avail = start.clone();
                    self.pattern(&a.pattern, &t)?;
                    let ty = self.node(&a.body, cell)?;
                    self.scoped_out(&a.pattern)?;
                    match &result {
                        None => result = Some((ty, self.avail.clone())),
                        Some((t0, end)) => {
                            if *t0 != ty {
                                return rej(RejectCode::Type, "match arms of different types");
                            }
                            if *end != self.avail {
                                return rej(RejectCode::Linear, "match arms consume different slots");
                            }
                        }
                    }
                }
                let (ty, end) = result.expect("non-empty");
                self.avail = end;
                Ok(ty)
            }
            Node::Call(c) => {
                let (ret, _, risks) = self.call(c)?;
                self.raised.extend(risks);
                Ok(ret)
            }
            Node::Try { call, success_drops, handlers } => {
                let (ret, arg_tys, risks) = self.call(call)?;
                let after_args = self.avail.clone();
                for s in success_drops {
                    if !after_args.contains(s) || !self.local(*s)?.caps.has_drop() {
                        return rej(RejectCode::Linear, format!("bad success drop of slot {s}"));
                    }
                }
                let end: BTreeSet<u16> = after_args.iter().filter(|s| !success_drops.contains(s)).copied().collect();
                let mut handled = BTreeSet::new();
                for h in handlers {
                    if !risks.contains(&h.risk) || !handled.insert(h.risk.clone()) {
                        return rej(RejectCode::Risk, format!("handler for {} which the callee cannot raise", h.risk));
                    }
                    if h.binders.len() != arg_tys.len() {
                        return rej(RejectCode::Type, "handler binder count");
                    }
                    self.avail = after_args.clone();
                    for (b, t) in h.binders.iter().zip(&arg_tys) {
                        self.pattern(&Pat::Bind(*b), t)?;
                    }
                    let ty = self.node(&h.body, None)?;
                    if ty != ret {
                        return rej(RejectCode::Type, "handler of the wrong type");
                    }
                    self.slots_out(&h.binders)?;
                    if self.avail != end {
                        return rej(RejectCode::Linear, "handler and success path consume different slots");
                    }
                }
                self.avail = end;
                self.raised.extend(risks.into_iter().filter(|r| !handled.contains(r)));
                Ok(ret)
            }
            Node::Modify { reference, binder, default, returns, body } => {
                self.need(Effect::Active)?;
                let rt = self.node(reference, None)?;
                let TypeKind::Ref(inner) = &rt.kind else {
                    return rej(RejectCode::Type, "modify of a non-reference");
                };
                if !rt.caps.contains(&Cap::Modify) {
                    return rej(RejectCode::Cap, "modify through a reference without Modify");
                }
                let inner = (**inner).clone();
                self.default_ok(&inner, *default)?;
                self.pattern(&Pat::Bind(*binder), &inner)?;
                let outer = self.in_modify;
                self.in_modify = true;
                let ty = if *returns {
                    if !all_tails_return(body) {
                        return rej(RejectCode::Type, "modify body tail without a returned value");
                    }
                    self.node(body, Some(&inner))?
                } else {
                    let t = self.node(body, None)?;
                    if !t.fits(&inner) {
                        return rej(RejectCode::Type, "modify writes a value of the wrong type");
                    }
                    SemType::unit()
                };
                self.in_modify = outer;
                self.slots_out(&[*binder])?;
                Ok(ty)
            }
            Node::AndReturn { cell: c, result } => {
                let Some(inner) = cell else {
                    return rej(RejectCode::Type, "`& return` outside a modify tail");
                };
                let t = self.node(c, None)?;
                if !t.fits(inner) {
                    return rej(RejectCode::Type, "modify writes a value of the wrong type");
                }
                self.node(result, None)
            }
            Node::Read { reference, default } => {
                self.need(Effect::Dependent)?;
                let rt = self.node(reference, None)?;
                let TypeKind::Ref(inner) = &rt.kind else {
                    return rej(RejectCode::Type, "read of a non-reference");
                };
                let inner = (**inner).clone();
                if !inner.caps.has_copy() {
                    return rej(RejectCode::Linear, "read of a cell whose content lacks Copy");
                }
                self.default_ok(&inner, *default)?;
                Ok(inner)
            }
            Node::Attach { operand, cap } => {
                let t = self.node(operand, None)?;
                wf_cap(self.univ, cap)?;
                if let Err(v) = check_attach(self.univ, &t, cap) {
                    return rej(RejectCode::Cap, format!("{v:?}"));
                }
                let caps = t.caps.clone().with(*cap);
                Ok(t.with_caps(caps))
            }
            Node::Detach { operand, cap } => {
                let t = self.node(operand, None)?;
                wf_cap(self.univ, cap)?;
                if matches!(t.kind, TypeKind::Tuple(_)) {
                    return rej(RejectCode::Type, "detach on a tuple");
                }
                let caps = t.caps.clone().without(cap);
                Ok(t.with_caps(caps))
            }
            Node::Cycle { init, acc, body, .. } => {
                let t = self.node(init, None)?;
                let outer = std::mem::take(&mut self.avail);
                self.pattern(&Pat::Bind(*acc), &t)?;
                let bt = self.node(body, None)?;
                if !self.avail.is_empty() {
                    return rej(RejectCode::Linear, "loop body leaves slots unconsumed");
                }
                self.avail = outer;
                if bt != t {
                    return rej(RejectCode::Type, "loop body type differs from the accumulator");
                }
                Ok(t)
            }
            Node::Derive { context, id } => {
                let ct = self.node(context, None)?;
                let it = self.node(id, None)?;
                let TypeKind::Context(inner) = &ct.kind else {
                    return rej(RejectCode::Type, "derive from a non-context");
                };
                if it.kind != TypeKind::Id {
                    return rej(RejectCode::Type, "derive with a non-ID");
                }
                Ok(SemType::reference((**inner).clone(), true))
            }
            Node::NewId => {
                self.need(Effect::Init)?;
                Ok(SemType::master_id())
            }
            Node::NewContext { inner } => {
                self.need(Effect::Init)?;
                wf(self.univ, inner, self.n_tparams)?;
                if matches!(inner.kind, TypeKind::Var(_)) || !inner.caps.has_persist() {
                    return rej(RejectCode::Type, "context of a type without Persist");
                }
                Ok(SemType::context(inner.clone()))
            }
        }
    }
}

fn all_tails_return(n: &Node) -> bool {
    match n {
        Node::AndReturn { .. } => true,
        Node::Let { body, .. } | Node::Drop { body, .. } => all_tails_return(body),
        Node::Match { arms, .. } => arms.iter().all(|a| all_tails_return(&a.body)),
        _ => false,
    }
}
