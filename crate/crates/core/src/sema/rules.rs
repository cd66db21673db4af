//! Typing rules shared by the elaborator and the bytecode validator.

use crate::bytecode::{ArithOp, FnSig, NumKind, Pat};
use crate::sema::env::Universe;
use crate::types::{Cap, CapSet, FnRef, ModuleId, Risk, SemType, TypeKind, TypeRef, Visibility};

pub fn arith_risks(op: ArithOp, kind: NumKind) -> Vec<Risk> {
    match (kind, op) {
        (NumKind::UInt, ArithOp::Add) => vec![Risk::NumericOverflow],
        (NumKind::UInt, ArithOp::Sub) => vec![Risk::NumericUnderflow],
        (NumKind::Int, _) => vec![Risk::NumericOverflow, Risk::NumericUnderflow],
    }
}

/// Int to UInt fails below zero, UInt to Int above `i64::MAX`.
pub fn coerce_risk(to: NumKind) -> Risk {
    match to {
        NumKind::UInt => Risk::NumericUnderflow,
        NumKind::Int => Risk::NumericOverflow,
    }
}

pub fn num_kind(t: &SemType) -> Option<NumKind> {
    match t.kind {
        TypeKind::UInt => Some(NumKind::UInt),
        TypeKind::Int => Some(NumKind::Int),
        _ => None,
    }
}

pub fn num_type(k: NumKind) -> SemType {
    match k {
        NumKind::UInt => SemType::uint(),
        NumKind::Int => SemType::int(),
    }
}

/// Why a capability may not be added.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CapViolation {
    /// The module has no right to attach it.
    Attach(String),
    /// A structural capability not supported by some field.
    Struct(String),
}

/// Structural capabilities in `caps` that some constructor field of `r`
/// (instantiated at `args`) lacks.
pub fn unsupported_structural(univ: &Universe, r: TypeRef, args: &[SemType], caps: &CapSet) -> Option<(Cap, String)> {
    let def = univ.type_def(r)?;
    for cap in caps.iter().filter(|c| c.is_structural()) {
        for (ci, ctor) in def.ctors.iter().enumerate() {
            let fields = univ.ctor_fields(r, ci as u16, args)?;
            for (fi, f) in fields.iter().enumerate() {
                if !f.caps.contains(cap) {
                    return Some((
                        *cap,
                        format!(
                            "field {} of constructor `{}` has type `{}`, which lacks {}",
                            fi + 1,
                            ctor.name,
                            univ.show(f),
                            univ.cap_name(cap)
                        ),
                    ));
                }
            }
        }
    }
    None
}

/// May code in the local module add `cap` to a value of type `ty`?
pub fn check_attach(univ: &Universe, ty: &SemType, cap: &Cap) -> Result<(), CapViolation> {
    if ty.caps.contains(cap) {
        return Ok(());
    }
    let name = univ.cap_name(cap);
    let local_adt = match &ty.kind {
        TypeKind::Adt(r, args) if r.module == ModuleId::Local => Some((*r, args)),
        _ => None,
    };
    match cap {
        Cap::Modify | Cap::Master => Err(CapViolation::Attach(format!("{name} can never be attached"))),
        Cap::User(r) => {
            if r.module == ModuleId::Local {
                return Ok(());
            }
            let open = univ.cap_def(*r).map(|d| d.open).unwrap_or(false);
            if open && local_adt.is_some() {
                Ok(())
            } else if open {
                Err(CapViolation::Attach(format!(
                    "open capability {name} may only be attached to types defined in this module, not `{}`",
                    univ.show(ty)
                )))
            } else {
                Err(CapViolation::Attach(format!("capability {name} is defined in another module")))
            }
        }
        _ => {
            let Some((r, args)) = local_adt else {
                return Err(CapViolation::Attach(format!(
                    "{name} may only be attached to types defined in this module, not `{}`",
                    univ.show(ty)
                )));
            };
            let single: CapSet = [*cap].into_iter().collect();
            match unsupported_structural(univ, r, args, &single) {
                Some((_, why)) => Err(CapViolation::Struct(why)),
                None => Ok(()),
            }
        }
    }
}

/// Capabilities written on a local type declaration.
pub fn check_decl_caps(univ: &Universe, r: TypeRef) -> Result<(), CapViolation> {
    let def = univ.type_def(r).expect("local type");
    for cap in def.caps.iter() {
        match cap {
            Cap::Modify | Cap::Master => {
                return Err(CapViolation::Attach(format!(
                    "type `{}` cannot declare {}",
                    def.name,
                    univ.cap_name(cap)
                )))
            }
            Cap::User(c) if c.module != ModuleId::Local => {
                let open = univ.cap_def(*c).map(|d| d.open).unwrap_or(false);
                if !open {
                    return Err(CapViolation::Attach(format!(
                        "type `{}` cannot declare capability {} of another module",
                        def.name,
                        univ.cap_name(cap)
                    )));
                }
            }
            _ => {}
        }
    }
    let vars: Vec<SemType> = (0..def.type_params.len() as u16).map(SemType::var).collect();
    match unsupported_structural(univ, r, &vars, &def.caps) {
        Some((_, why)) => Err(CapViolation::Struct(why)),
        None => Ok(()),
    }
}

#[derive(Clone, Debug)]
enum Sp {
    Wild,
    Ctor(u16, Vec<Sp>),
    Tuple(Vec<Sp>),
}

fn simplify(p: &Pat) -> Sp {
    match p {
        Pat::Bind(_) => Sp::Wild,
        Pat::Ctor { ctor, fields, .. } => Sp::Ctor(*ctor, fields.iter().map(simplify).collect()),
        Pat::Tuple(elems) => Sp::Tuple(elems.iter().map(simplify).collect()),
    }
}

/// Do the patterns together cover every value of `ty`?
pub fn is_exhaustive(univ: &Universe, ty: &SemType, pats: &[&Pat]) -> bool {
    let rows: Vec<Vec<Sp>> = pats.iter().map(|p| vec![simplify(p)]).collect();
    !wild_useful(univ, rows, vec![ty.clone()])
}

/// Is an all-wildcard row useful with respect to `rows`? Standard matrix
/// specialisation over the column types `tys`.
fn wild_useful(univ: &Universe, rows: Vec<Vec<Sp>>, tys: Vec<SemType>) -> bool {
    if tys.is_empty() {
        return rows.is_empty();
    }
    let head = tys[0].clone();
    let rest_tys = tys[1..].to_vec();
    match &head.kind {
        TypeKind::Tuple(elems) => {
            let n = elems.len();
            let rows = rows
                .into_iter()
                .map(|mut r| {
                    let first = r.remove(0);
                    let mut out = match first {
                        Sp::Tuple(e) if e.len() == n => e,
                        _ => vec![Sp::Wild; n],
                    };
                    out.extend(r);
                    out
                })
                .collect();
            let mut t = elems.clone();
            t.extend(rest_tys);
            wild_useful(univ, rows, t)
        }
        TypeKind::Adt(r, args) if univ.type_def(*r).is_some() => {
            let n_ctors = univ.type_def(*r).map(|d| d.ctors.len()).unwrap_or(0);
            let mut seen = vec![false; n_ctors];
            for row in &rows {
                if let Sp::Ctor(c, _) = &row[0] {
                    if let Some(s) = seen.get_mut(*c as usize) {
                        *s = true;
                    }
                }
            }
            if seen.iter().all(|s| *s) {
                (0..n_ctors as u16).any(|c| {
                    let fields = univ.ctor_fields(*r, c, args).unwrap_or_default();
                    let arity = fields.len();
                    let spec: Vec<Vec<Sp>> = rows
                        .iter()
                        .filter_map(|row| {
                            let mut out = match &row[0] {
                                Sp::Ctor(k, subs) if *k == c => subs.clone(),
                                Sp::Ctor(..) => return None,
                                _ => vec![Sp::Wild; arity],
                            };
                            out.resize(arity, Sp::Wild);
                            out.extend(row[1..].iter().cloned());
                            Some(out)
                        })
                        .collect();
                    let mut t = fields;
                    t.extend(rest_tys.iter().cloned());
                    wild_useful(univ, spec, t)
                })
            } else {
                wild_useful(univ, default_rows(rows), rest_tys)
            }
        }
        _ => wild_useful(univ, default_rows(rows), rest_tys),
    }
}

fn default_rows(rows: Vec<Vec<Sp>>) -> Vec<Vec<Sp>> {
    rows.into_iter().filter(|r| matches!(r[0], Sp::Wild)).map(|r| r[1..].to_vec()).collect()
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum VisViolation {
    Private(String),
    Protected(String),
}

/// May the local module call `f` with these type arguments?
pub fn check_call_visibility(univ: &Universe, f: FnRef, sig: &FnSig, type_args: &[SemType]) -> Result<(), VisViolation> {
    match sig.visibility {
        Visibility::Public => Ok(()),
        Visibility::Private if f.module == ModuleId::Local => Ok(()),
        Visibility::Private => Err(VisViolation::Private(format!("`{}` is private to its module", univ.fn_name(f)))),
        Visibility::Protected(i) => match type_args.get(i as usize).map(|t| &t.kind) {
            Some(TypeKind::Adt(r, _)) if r.module == ModuleId::Local => Ok(()),
            Some(_) => Err(VisViolation::Protected(format!(
                "`{}` is protected by its type parameter {}; the caller must define `{}`",
                univ.fn_name(f),
                i + 1,
                univ.show(&type_args[i as usize])
            ))),
            None => Err(VisViolation::Protected(format!("`{}` is protected by a missing type argument", univ.fn_name(f)))),
        },
    }
}
