//! Surface syntax tree.
//!
//! Applications are kept unresolved: `Token[T](x)` and `merge(a, b)` are both
//! [`ExprKind::Apply`]; whether a name is a constructor or a function is
//! decided during name resolution.

use std::fmt;

use crate::types::Effect;

/// Source position. Spans never take part in structural equality, so a
/// re-parsed tree compares equal to the original.
#[derive(Clone, Copy, Default, Debug)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Ident { name: name.into(), span }
    }
}

/// Dotted name such as `Context.new` or `MyFixSupplyToken.defaultStore`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Path {
    pub segments: Vec<Ident>,
}

impl Path {
    pub fn single(ident: Ident) -> Self {
        Path { segments: vec![ident] }
    }

    pub fn span(&self) -> Span {
        self.segments.first().map(|s| s.span).unwrap_or_default()
    }

    pub fn last(&self) -> &Ident {
        self.segments.last().expect("paths are non-empty")
    }

    pub fn is_single(&self) -> bool {
        self.segments.len() == 1
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(&s.name)?;
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Import {
    pub path: Path,
    /// `import Token.*` brings every name into scope unqualified.
    pub glob: bool,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AstModule {
    pub name: Ident,
    pub imports: Vec<Import>,
    pub decls: Vec<Decl>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Decl {
    Type(TypeDecl),
    Capability(CapabilityDecl),
    Fun(FunDecl),
    Val(ValDecl),
    Init(InitDecl),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TypeDecl {
    pub public: bool,
    pub open: bool,
    pub caps: Vec<Path>,
    pub name: Ident,
    pub type_params: Vec<Ident>,
    pub ctors: Vec<CtorDecl>,
    /// Declared as `type Name(Fields)`: one constructor named like the type.
    pub shorthand: bool,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CtorDecl {
    pub name: Ident,
    pub fields: Vec<TypeExpr>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CapabilityDecl {
    pub open: bool,
    pub name: Ident,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum VisibilityAst {
    Public,
    Private,
    Protected(Ident),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FunDecl {
    pub risks: Vec<Path>,
    pub visibility: Option<VisibilityAst>,
    pub effect: Option<Effect>,
    pub default_for: Option<Ident>,
    pub name: Ident,
    pub type_params: Vec<Ident>,
    pub params: Vec<Param>,
    pub body: Expr,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Param {
    Typed { name: Ident, ty: TypeExpr },
    Pattern(Pattern),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValDecl {
    pub name: Ident,
    pub value: Expr,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InitDecl {
    pub risks: Vec<Path>,
    pub param: Param,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TypeExpr {
    pub caps: Vec<Path>,
    pub kind: TypeExprKind,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TypeExprKind {
    Named { path: Path, args: Vec<TypeExpr> },
    Tuple(Vec<TypeExpr>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Pattern {
    pub kind: PatternKind,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatternKind {
    Wild,
    /// A bare name: a binder, or a nullary constructor if one is in scope.
    Name(Ident),
    Ctor {
        caps: Vec<Path>,
        path: Path,
        type_args: Option<Vec<TypeExpr>>,
        fields: Option<Vec<Pattern>>,
    },
    Tuple(Vec<Pattern>),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinOp {
    Add,
    Sub,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Literal {
    UInt(u64),
    Int(i64),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ExprKind {
    Lit(Literal),
    Unit,
    /// Bare (possibly qualified) name without brackets or arguments.
    Name(Path),
    /// Constructor or function application; at least one of the two lists
    /// is present.
    Apply { path: Path, type_args: Option<Vec<TypeExpr>>, args: Option<Vec<Expr>> },
    Tuple(Vec<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Let { pattern: Pattern, bound: Box<Expr>, body: Box<Expr> },
    Case { scrutinee: Box<Expr>, arms: Vec<Arm> },
    Modify { reference: Box<Expr>, binder: Pattern, body: Box<Expr> },
    AndReturn { cell: Box<Expr>, result: Box<Expr> },
    Attach { expr: Box<Expr>, cap: Path },
    Detach { expr: Box<Expr>, cap: Path },
    Cycle { bound: u64, init: Box<Expr>, acc: Ident, body: Box<Expr> },
    Try { call: Box<Expr>, handlers: Vec<Handler> },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Arm {
    pub pattern: Pattern,
    pub body: Expr,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Handler {
    pub risk: Path,
    pub binders: Vec<Ident>,
    pub body: Expr,
}
