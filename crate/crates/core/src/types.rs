//! Semantic types shared by the elaborator, the bytecode, the validator and
//! the interpreter.
//!
//! Every type carries a [`CapSet`]. Two types with the same shape but
//! different capabilities are different types; the only implicit conversion
//! is width subsumption (a value may be passed where fewer capabilities are
//! required), see [`SemType::fits`].

use std::collections::BTreeSet;
use std::fmt;

/// 32-byte content address of a deployed module.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ModuleAddress(pub [u8; 32]);

impl ModuleAddress {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(ModuleAddress(arr))
    }

    /// First eight hex digits, for human output.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for ModuleAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.short())
    }
}

impl fmt::Display for ModuleAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Which module an item lives in. `Local` is the module being compiled or
/// executed; it is resolved to a concrete address only when code runs.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ModuleId {
    Local,
    Addr(ModuleAddress),
}

impl ModuleId {
    pub fn absolute(self, this: ModuleAddress) -> ModuleAddress {
        match self {
            ModuleId::Local => this,
            ModuleId::Addr(a) => a,
        }
    }

    pub fn resolve(self, this: ModuleAddress) -> ModuleId {
        ModuleId::Addr(self.absolute(this))
    }
}

macro_rules! item_ref {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
        pub struct $name {
            pub module: ModuleId,
            pub index: u16,
        }

        impl $name {
            pub fn local(index: u16) -> Self {
                $name { module: ModuleId::Local, index }
            }

            pub fn resolve(self, this: ModuleAddress) -> Self {
                $name { module: self.module.resolve(this), index: self.index }
            }

            /// Address of the module the item lives in when `Local` means `this`.
            pub fn module_address(self, this: ModuleAddress) -> ModuleAddress {
                self.module.absolute(this)
            }
        }
    };
}

item_ref!(TypeRef);
item_ref!(FnRef);
item_ref!(ValRef);
item_ref!(CapRef);

/// A capability. Builtins come first in the ordering so that canonical
/// encodings list them before user-defined ones.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Cap {
    Drop,
    Copy,
    Persist,
    Modify,
    Inspect,
    Master,
    User(CapRef),
}

impl Cap {
    pub fn builtin(name: &str) -> Option<Cap> {
        Some(match name {
            "Drop" => Cap::Drop,
            "Copy" => Cap::Copy,
            "Persist" => Cap::Persist,
            "Modify" => Cap::Modify,
            "Inspect" => Cap::Inspect,
            "Master" => Cap::Master,
            _ => return None,
        })
    }

    pub fn builtin_name(&self) -> Option<&'static str> {
        Some(match self {
            Cap::Drop => "Drop",
            Cap::Copy => "Copy",
            Cap::Persist => "Persist",
            Cap::Modify => "Modify",
            Cap::Inspect => "Inspect",
            Cap::Master => "Master",
            Cap::User(_) => return None,
        })
    }

    /// Copy, Drop and Persist describe what may be done with the bits of a
    /// value, so a composite can only have them if all of its parts do.
    pub fn is_structural(&self) -> bool {
        matches!(self, Cap::Drop | Cap::Copy | Cap::Persist)
    }

    pub fn resolve(self, this: ModuleAddress) -> Cap {
        match self {
            Cap::User(r) => Cap::User(r.resolve(this)),
            c => c,
        }
    }
}

/// Set of capabilities with order-independent equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct CapSet(BTreeSet<Cap>);

impl CapSet {
    pub fn new() -> Self {
        CapSet(BTreeSet::new())
    }

    /// Copy, Drop and Persist: what every primitive carries.
    pub fn structural() -> Self {
        [Cap::Copy, Cap::Drop, Cap::Persist].into_iter().collect()
    }

    pub fn contains(&self, cap: &Cap) -> bool {
        self.0.contains(cap)
    }

    pub fn has_copy(&self) -> bool {
        self.contains(&Cap::Copy)
    }

    pub fn has_drop(&self) -> bool {
        self.contains(&Cap::Drop)
    }

    pub fn has_persist(&self) -> bool {
        self.contains(&Cap::Persist)
    }

    pub fn insert(&mut self, cap: Cap) -> bool {
        self.0.insert(cap)
    }

    pub fn remove(&mut self, cap: &Cap) -> bool {
        self.0.remove(cap)
    }

    pub fn with(mut self, cap: Cap) -> Self {
        self.0.insert(cap);
        self
    }

    pub fn without(mut self, cap: &Cap) -> Self {
        self.0.remove(cap);
        self
    }

    pub fn is_superset(&self, other: &CapSet) -> bool {
        self.0.is_superset(&other.0)
    }

    pub fn intersection(&self, other: &CapSet) -> CapSet {
        CapSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn union(&self, other: &CapSet) -> CapSet {
        CapSet(self.0.union(&other.0).copied().collect())
    }

    pub fn structural_part(&self) -> CapSet {
        CapSet(self.0.iter().filter(|c| c.is_structural()).copied().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cap> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn resolve(&self, this: ModuleAddress) -> CapSet {
        self.0.iter().map(|c| c.resolve(this)).collect()
    }
}

impl FromIterator<Cap> for CapSet {
    fn from_iter<I: IntoIterator<Item = Cap>>(iter: I) -> Self {
        CapSet(iter.into_iter().collect())
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TypeKind {
    UInt,
    Int,
    Unit,
    Id,
    Context(Box<SemType>),
    Ref(Box<SemType>),
    Adt(TypeRef, Vec<SemType>),
    /// Type parameter of the enclosing declaration, by position.
    Var(u16),
    Tuple(Vec<SemType>),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct SemType {
    pub kind: TypeKind,
    pub caps: CapSet,
}

impl SemType {
    pub fn new(kind: TypeKind, caps: CapSet) -> Self {
        SemType { kind, caps }
    }

    pub fn uint() -> Self {
        SemType::new(TypeKind::UInt, CapSet::structural())
    }

    pub fn int() -> Self {
        SemType::new(TypeKind::Int, CapSet::structural())
    }

    pub fn unit() -> Self {
        SemType::new(TypeKind::Unit, CapSet::structural())
    }

    pub fn id() -> Self {
        SemType::new(TypeKind::Id, CapSet::structural())
    }

    pub fn master_id() -> Self {
        SemType::new(TypeKind::Id, CapSet::structural().with(Cap::Master))
    }

    pub fn context(inner: SemType) -> Self {
        SemType::new(TypeKind::Context(Box::new(inner)), CapSet::structural())
    }

    pub fn reference(inner: SemType, modify: bool) -> Self {
        let mut caps = CapSet::structural();
        if modify {
            caps.insert(Cap::Modify);
        }
        SemType::new(TypeKind::Ref(Box::new(inner)), caps)
    }

    pub fn var(index: u16) -> Self {
        SemType::new(TypeKind::Var(index), CapSet::new())
    }

    /// Tuples have no declared capabilities; they carry the structural
    /// capabilities common to all elements.
    pub fn tuple(elems: Vec<SemType>) -> Self {
        let caps = tuple_caps(&elems);
        SemType::new(TypeKind::Tuple(elems), caps)
    }

    pub fn with_caps(mut self, caps: CapSet) -> Self {
        self.caps = caps;
        self
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, TypeKind::UInt | TypeKind::Int)
    }

    /// Width subsumption: same shape (nested positions compared exactly),
    /// and at least the expected capabilities at the top level.
    pub fn fits(&self, expected: &SemType) -> bool {
        self.kind == expected.kind && self.caps.is_superset(&expected.caps)
    }

    /// Replace type variables by `args`. Out-of-range variables are kept.
    pub fn subst(&self, args: &[SemType]) -> SemType {
        match &self.kind {
            TypeKind::Var(i) => match args.get(*i as usize) {
                Some(t) => t.clone(),
                None => self.clone(),
            },
            TypeKind::Context(inner) => {
                SemType::new(TypeKind::Context(Box::new(inner.subst(args))), self.caps.clone())
            }
            TypeKind::Ref(inner) => {
                SemType::new(TypeKind::Ref(Box::new(inner.subst(args))), self.caps.clone())
            }
            TypeKind::Adt(r, targs) => SemType::new(
                TypeKind::Adt(*r, targs.iter().map(|t| t.subst(args)).collect()),
                self.caps.clone(),
            ),
            TypeKind::Tuple(elems) => SemType::tuple(elems.iter().map(|t| t.subst(args)).collect()),
            _ => self.clone(),
        }
    }

    /// Replace `ModuleId::Local` everywhere by the concrete address.
    pub fn resolve(&self, this: ModuleAddress) -> SemType {
        let kind = match &self.kind {
            TypeKind::Context(inner) => TypeKind::Context(Box::new(inner.resolve(this))),
            TypeKind::Ref(inner) => TypeKind::Ref(Box::new(inner.resolve(this))),
            TypeKind::Adt(r, targs) => {
                TypeKind::Adt(r.resolve(this), targs.iter().map(|t| t.resolve(this)).collect())
            }
            TypeKind::Tuple(elems) => TypeKind::Tuple(elems.iter().map(|t| t.resolve(this)).collect()),
            k => k.clone(),
        };
        SemType::new(kind, self.caps.resolve(this))
    }

    pub fn has_vars(&self) -> bool {
        match &self.kind {
            TypeKind::Var(_) => true,
            TypeKind::Context(i) | TypeKind::Ref(i) => i.has_vars(),
            TypeKind::Adt(_, args) | TypeKind::Tuple(args) => args.iter().any(|t| t.has_vars()),
            _ => false,
        }
    }

    /// Largest type-variable index mentioned, if any.
    pub fn max_var(&self) -> Option<u16> {
        match &self.kind {
            TypeKind::Var(i) => Some(*i),
            TypeKind::Context(i) | TypeKind::Ref(i) => i.max_var(),
            TypeKind::Adt(_, args) | TypeKind::Tuple(args) => {
                args.iter().filter_map(|t| t.max_var()).max()
            }
            _ => None,
        }
    }
}

pub fn tuple_caps(elems: &[SemType]) -> CapSet {
    let mut caps = CapSet::structural();
    for e in elems {
        caps = caps.intersection(&e.caps);
    }
    caps.structural_part()
}

/// Effect lattice, ordered pure < init < dependent < active.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Effect {
    Pure,
    Init,
    Dependent,
    Active,
}

impl Effect {
    pub fn keyword(self) -> &'static str {
        match self {
            Effect::Pure => "pure",
            Effect::Init => "init",
            Effect::Dependent => "dependent",
            Effect::Active => "active",
        }
    }

    pub fn from_u8(b: u8) -> Option<Effect> {
        Some(match b {
            0 => Effect::Pure,
            1 => Effect::Init,
            2 => Effect::Dependent,
            3 => Effect::Active,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Visibility {
    Public,
    Private,
    /// Protected by the function's type parameter at this index.
    Protected(u16),
}

/// A declared error outcome.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Risk {
    NumericOverflow,
    NumericUnderflow,
    EmptyCell,
    Custom(ModuleId, String),
}

impl Risk {
    pub fn builtin(name: &str) -> Option<Risk> {
        Some(match name {
            "NumericOverflow" => Risk::NumericOverflow,
            "NumericUnderflow" => Risk::NumericUnderflow,
            "EmptyCell" => Risk::EmptyCell,
            _ => return None,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Risk::NumericOverflow => "NumericOverflow",
            Risk::NumericUnderflow => "NumericUnderflow",
            Risk::EmptyCell => "EmptyCell",
            Risk::Custom(_, n) => n,
        }
    }

    pub fn resolve(&self, this: ModuleAddress) -> Risk {
        match self {
            Risk::Custom(m, n) => Risk::Custom(m.resolve(this), n.clone()),
            r => r.clone(),
        }
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capset_equality_ignores_insertion_order() {
        let a: CapSet = [Cap::Drop, Cap::Persist].into_iter().collect();
        let b: CapSet = [Cap::Persist, Cap::Drop].into_iter().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn fits_is_width_subsumption_at_top_level_only() {
        let token = TypeRef::local(0);
        let inner = SemType::new(TypeKind::Adt(token, vec![]), [Cap::Drop].into_iter().collect());
        let rich = SemType::reference(inner.clone(), true);
        let poor = SemType::reference(inner.clone(), false);
        assert!(rich.fits(&poor));
        assert!(!poor.fits(&rich));
        let other_inner = inner.clone().with_caps(CapSet::new());
        assert!(!SemType::reference(other_inner, true).fits(&poor));
    }

    #[test]
    fn subst_replaces_vars() {
        let t = SemType::new(TypeKind::Adt(TypeRef::local(0), vec![SemType::var(0)]), CapSet::new());
        let s = t.subst(&[SemType::uint()]);
        assert_eq!(s.kind, TypeKind::Adt(TypeRef::local(0), vec![SemType::uint()]));
        assert!(!s.has_vars());
    }

    #[test]
    fn tuple_caps_are_intersection() {
        let linear = SemType::new(TypeKind::Adt(TypeRef::local(0), vec![]), [Cap::Drop].into_iter().collect());
        let t = SemType::tuple(vec![SemType::uint(), linear]);
        assert!(t.caps.has_drop());
        assert!(!t.caps.has_copy());
    }
}
