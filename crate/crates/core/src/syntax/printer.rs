//! Pretty printer. The output re-parses to a structurally identical tree;
//! grouping parentheses are inserted wherever a greedy construct would
//! otherwise swallow the tokens that follow it.

use std::fmt::Write;

use super::ast::*;

pub fn pretty_print(m: &AstModule) -> String {
    let mut p = Printer { out: String::new(), indent: 0 };
    p.module(m);
    p.out
}

pub fn print_type(t: &TypeExpr) -> String {
    let mut p = Printer { out: String::new(), indent: 0 };
    p.type_expr(t);
    p.out
}

pub fn print_expr(e: &Expr) -> String {
    let mut p = Printer { out: String::new(), indent: 0 };
    p.expr(e, Ctx::Top);
    p.out
}

/// Syntactic position an expression is printed in.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    /// Delimited on the right by a keyword or closing token.
    Top,
    /// Left operand of `+`/`-`, or the cell of `& return`.
    ArithLhs,
    /// Right operand of `+`/`-`, or operand of a postfix operator.
    Operand,
    /// Arm body followed by another `|` arm.
    OpenArm,
}

struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn nl(&mut self) {
        self.out.push('\n');
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn path(&mut self, p: &Path) {
        let _ = write!(self.out, "{p}");
    }

    fn list<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Self, &T)) {
        for (i, it) in items.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            f(self, it);
        }
    }

    fn caps(&mut self, caps: &[Path]) {
        for c in caps {
            self.path(c);
            self.out.push(' ');
        }
    }

    fn module(&mut self, m: &AstModule) {
        for imp in &m.imports {
            self.out.push_str("import ");
            self.path(&imp.path);
            if imp.glob {
                self.out.push_str(".*");
            }
            self.out.push('\n');
        }
        let _ = write!(self.out, "module {} {{", m.name.name);
        self.indent += 1;
        for d in &m.decls {
            self.nl();
            self.decl(d);
        }
        self.indent -= 1;
        self.out.push_str("\n}\n");
    }

    fn risks(&mut self, risks: &[Path]) {
        for r in risks {
            self.out.push_str("risk ");
            self.path(r);
            self.nl();
        }
    }

    fn decl(&mut self, d: &Decl) {
        match d {
            Decl::Type(t) => {
                if t.public {
                    self.out.push_str("public ");
                }
                if t.open {
                    self.out.push_str("open ");
                }
                self.out.push_str("type ");
                self.caps(&t.caps);
                self.out.push_str(&t.name.name);
                if !t.type_params.is_empty() {
                    self.out.push('[');
                    self.list(&t.type_params, |p, i| p.out.push_str(&i.name));
                    self.out.push(']');
                }
                if t.shorthand {
                    self.out.push('(');
                    self.list(&t.ctors[0].fields, |p, f| p.type_expr(f));
                    self.out.push(')');
                } else if !t.ctors.is_empty() {
                    self.out.push_str(" { ");
                    self.list(&t.ctors, |p, c| {
                        p.out.push_str(&c.name.name);
                        if !c.fields.is_empty() {
                            p.out.push('(');
                            p.list(&c.fields, |p, f| p.type_expr(f));
                            p.out.push(')');
                        }
                    });
                    self.out.push_str(" }");
                }
            }
            Decl::Capability(c) => {
                if c.open {
                    self.out.push_str("open ");
                }
                let _ = write!(self.out, "capability {}", c.name.name);
            }
            Decl::Val(v) => {
                let _ = write!(self.out, "public val {} = ", v.name.name);
                self.expr(&v.value, Ctx::Top);
            }
            Decl::Init(i) => {
                self.risks(&i.risks);
                self.out.push_str("init(");
                self.param(&i.param);
                self.out.push_str(") => ");
                self.body(&i.body);
            }
            Decl::Fun(f) => {
                self.risks(&f.risks);
                match &f.visibility {
                    Some(VisibilityAst::Public) => self.out.push_str("public "),
                    Some(VisibilityAst::Private) => self.out.push_str("private "),
                    Some(VisibilityAst::Protected(t)) => {
                        let _ = write!(self.out, "protected[{}] ", t.name);
                    }
                    None => {}
                }
                if let Some(e) = f.effect {
                    let _ = write!(self.out, "{} ", e.keyword());
                }
                if let Some(t) = &f.default_for {
                    let _ = write!(self.out, "default[{}] ", t.name);
                }
                self.out.push_str(&f.name.name);
                if !f.type_params.is_empty() {
                    self.out.push('[');
                    self.list(&f.type_params, |p, i| p.out.push_str(&i.name));
                    self.out.push(']');
                }
                self.out.push('(');
                self.list(&f.params, |p, prm| p.param(prm));
                self.out.push_str(") => ");
                self.body(&f.body);
            }
        }
    }

    fn body(&mut self, e: &Expr) {
        self.indent += 1;
        self.nl();
        self.expr(e, Ctx::Top);
        self.indent -= 1;
    }

    fn param(&mut self, p: &Param) {
        match p {
            Param::Typed { name, ty } => {
                let _ = write!(self.out, "{}: ", name.name);
                self.type_expr(ty);
            }
            Param::Pattern(p) => self.pattern(p),
        }
    }

    fn type_expr(&mut self, t: &TypeExpr) {
        self.caps(&t.caps);
        match &t.kind {
            TypeExprKind::Named { path, args } => {
                self.path(path);
                if !args.is_empty() {
                    self.out.push('[');
                    self.list(args, |p, a| p.type_expr(a));
                    self.out.push(']');
                }
            }
            TypeExprKind::Tuple(elems) => {
                self.out.push('(');
                self.list(elems, |p, a| p.type_expr(a));
                self.out.push(')');
            }
        }
    }

    fn pattern(&mut self, p: &Pattern) {
        match &p.kind {
            PatternKind::Wild => self.out.push('_'),
            PatternKind::Name(i) => self.out.push_str(&i.name),
            PatternKind::Tuple(elems) => {
                self.out.push('(');
                self.list(elems, |p, e| p.pattern(e));
                self.out.push(')');
            }
            PatternKind::Ctor { caps, path, type_args, fields } => {
                self.caps(caps);
                self.path(path);
                if let Some(args) = type_args {
                    self.out.push('[');
                    self.list(args, |p, a| p.type_expr(a));
                    self.out.push(']');
                }
                if let Some(fields) = fields {
                    self.out.push('(');
                    self.list(fields, |p, f| p.pattern(f));
                    self.out.push(')');
                }
            }
        }
    }

    fn expr(&mut self, e: &Expr, ctx: Ctx) {
        let greedy = matches!(
            e.kind,
            ExprKind::Let { .. } | ExprKind::Case { .. } | ExprKind::Modify { .. } | ExprKind::Cycle { .. }
        );
        let and_return = matches!(e.kind, ExprKind::AndReturn { .. });
        let binary = matches!(e.kind, ExprKind::Binary { .. });
        let wrap = match ctx {
            Ctx::Top => false,
            Ctx::OpenArm => greedy || and_return,
            Ctx::ArithLhs => greedy || and_return,
            Ctx::Operand => greedy || and_return || binary,
        };
        if wrap {
            self.out.push('(');
            self.expr(e, Ctx::Top);
            self.out.push(')');
            return;
        }
        match &e.kind {
            ExprKind::Lit(Literal::UInt(v)) => {
                let _ = write!(self.out, "{v}");
            }
            ExprKind::Lit(Literal::Int(v)) => {
                let _ = write!(self.out, "{v}i");
            }
            ExprKind::Unit => self.out.push_str("()"),
            ExprKind::Name(p) => self.path(p),
            ExprKind::Apply { path, type_args, args } => {
                self.path(path);
                if let Some(ta) = type_args {
                    self.out.push('[');
                    self.list(ta, |p, a| p.type_expr(a));
                    self.out.push(']');
                }
                if let Some(args) = args {
                    self.out.push('(');
                    self.list(args, |p, a| p.expr(a, Ctx::Top));
                    self.out.push(')');
                }
            }
            ExprKind::Tuple(elems) => {
                self.out.push('(');
                self.list(elems, |p, a| p.expr(a, Ctx::Top));
                self.out.push(')');
            }
            ExprKind::Binary { op, lhs, rhs } => {
                self.expr(lhs, Ctx::ArithLhs);
                self.out.push_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                });
                self.expr(rhs, Ctx::Operand);
            }
            ExprKind::AndReturn { cell, result } => {
                self.expr(cell, Ctx::ArithLhs);
                self.out.push_str(" & return ");
                self.expr(result, Ctx::Top);
            }
            ExprKind::Attach { expr, cap } | ExprKind::Detach { expr, cap } => {
                self.expr(expr, Ctx::Operand);
                let op = if matches!(e.kind, ExprKind::Attach { .. }) { "attach" } else { "detach" };
                let _ = write!(self.out, ".{op}[{cap}]");
            }
            ExprKind::Let { pattern, bound, body } => {
                self.out.push_str("let ");
                self.pattern(pattern);
                self.out.push_str(" = ");
                self.expr(bound, Ctx::Top);
                self.out.push_str(" in");
                self.nl();
                self.expr(body, Ctx::Top);
            }
            ExprKind::Case { scrutinee, arms } => {
                self.out.push_str("case ");
                self.expr(scrutinee, Ctx::Top);
                self.out.push_str(" of");
                self.indent += 1;
                for (i, arm) in arms.iter().enumerate() {
                    self.nl();
                    self.out.push_str("| ");
                    self.pattern(&arm.pattern);
                    self.out.push_str(" => ");
                    let ctx = if i + 1 < arms.len() { Ctx::OpenArm } else { Ctx::Top };
                    self.expr(&arm.body, ctx);
                }
                self.indent -= 1;
            }
            ExprKind::Modify { reference, binder, body } => {
                self.out.push_str("modify ");
                self.expr(reference, Ctx::Top);
                self.out.push_str(" with ");
                self.pattern(binder);
                self.out.push_str(" =>");
                self.indent += 1;
                self.nl();
                self.expr(body, Ctx::Top);
                self.indent -= 1;
            }
            ExprKind::Cycle { bound, init, acc, body } => {
                let _ = write!(self.out, "cycle {bound} from ");
                self.expr(init, Ctx::Top);
                let _ = write!(self.out, " as {} => ", acc.name);
                self.expr(body, Ctx::Top);
            }
            ExprKind::Try { call, handlers } => {
                self.out.push_str("try ");
                self.expr(call, Ctx::Operand);
                self.out.push_str(" catch {");
                self.indent += 1;
                for (i, h) in handlers.iter().enumerate() {
                    self.nl();
                    self.path(&h.risk);
                    self.out.push('(');
                    self.list(&h.binders, |p, b| p.out.push_str(&b.name));
                    self.out.push_str(") => ");
                    self.expr(&h.body, Ctx::Top);
                    if i + 1 < handlers.len() {
                        self.out.push(',');
                    }
                }
                self.indent -= 1;
                self.nl();
                self.out.push('}');
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{lexer::tokenize, parser::parse_module};

    fn parse(src: &str) -> AstModule {
        parse_module(&tokenize(src).unwrap()).unwrap()
    }

    #[test]
    fn empty_module_prints_exactly() {
        assert_eq!(pretty_print(&parse("module M {}")), "module M {\n}\n");
    }

    #[test]
    fn nested_case_in_open_arm_is_grouped() {
        let src = "module M { f(x: UInt) => case x of a => (case a of b => b | c => c) | d => d }";
        let m = parse(src);
        let printed = pretty_print(&m);
        assert_eq!(parse(&printed), m);
    }

    #[test]
    fn arithmetic_grouping_survives() {
        let src = "module M { f(a: UInt, b: UInt) => a - (b - (let c = 1 in c)) }";
        let m = parse(src);
        assert_eq!(parse(&pretty_print(&m)), m);
    }
}
