use thiserror::Error;

use super::ast::*;
use super::lexer::{Keyword, Punct, Token, TokenKind, TokenStream};
use crate::types::Effect;

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("{position}: expected {expected}, found {found}")]
pub struct ParseError {
    pub position: Span,
    pub expected: String,
    pub found: String,
}

type PResult<T> = Result<T, ParseError>;

pub fn parse_module(tokens: &TokenStream) -> PResult<AstModule> {
    let mut p = Parser { toks: &tokens.tokens, pos: 0, end: tokens.end };
    let m = p.module()?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(t, "end of input"));
    }
    Ok(m)
}

/// Parse a standalone type expression such as `Token[MyToken]`.
pub fn parse_type(tokens: &TokenStream) -> PResult<TypeExpr> {
    let mut p = Parser { toks: &tokens.tokens, pos: 0, end: tokens.end };
    let t = p.type_expr()?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(t, "end of input"));
    }
    Ok(t)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    end: Span,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&'a TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn peek_nth(&self, n: usize) -> Option<&'a TokenKind> {
        self.toks.get(self.pos + n).map(|t| &t.kind)
    }

    fn span(&self) -> Span {
        self.peek().map(|t| t.span()).unwrap_or(self.end)
    }

    fn error_at(&self, t: &Token, expected: &str) -> ParseError {
        ParseError { position: t.span(), expected: expected.to_string(), found: format!("`{}`", t.lexeme) }
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error_at(t, expected),
            None => ParseError { position: self.end, expected: expected.to_string(), found: "end of input".into() },
        }
    }

    fn is_punct(&self, p: Punct) -> bool {
        self.peek_kind() == Some(&TokenKind::Punct(p))
    }

    fn is_kw(&self, k: Keyword) -> bool {
        self.peek_kind() == Some(&TokenKind::Keyword(k))
    }

    fn is_ident(&self) -> bool {
        self.peek_kind() == Some(&TokenKind::Ident)
    }

    fn eat_punct(&mut self, p: Punct) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: Keyword) -> bool {
        if self.is_kw(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: Punct) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&format!("`{}`", p.as_str())))
        }
    }

    fn expect_kw(&mut self, k: Keyword) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            Err(self.error(&format!("`{}`", k.as_str())))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                self.pos += 1;
                Ok(Ident::new(t.lexeme.clone(), t.span()))
            }
            _ => Err(self.error("identifier")),
        }
    }

    /// `a.b.c`, stopping before `.attach[` / `.detach[` postfix operators.
    fn path(&mut self) -> PResult<Path> {
        let mut segments = vec![self.ident()?];
        while self.is_punct(Punct::Dot) && self.peek_nth(1) == Some(&TokenKind::Ident) {
            let name = &self.toks[self.pos + 1].lexeme;
            if (name == "attach" || name == "detach")
                && self.peek_nth(2) == Some(&TokenKind::Punct(Punct::LBracket))
            {
                break;
            }
            self.pos += 1;
            segments.push(self.ident()?);
        }
        Ok(Path { segments })
    }

    fn comma_list<T>(&mut self, close: Punct, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.eat_punct(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_punct(Punct::Comma) {
                continue;
            }
            self.expect_punct(close)?;
            return Ok(out);
        }
    }

    fn module(&mut self) -> PResult<AstModule> {
        let mut imports = Vec::new();
        while self.is_kw(Keyword::Import) {
            imports.push(self.import()?);
        }
        self.expect_kw(Keyword::Module)?;
        let name = self.ident()?;
        self.expect_punct(Punct::LBrace)?;
        let mut decls = Vec::new();
        loop {
            if self.eat_punct(Punct::RBrace) {
                break;
            }
            if self.is_kw(Keyword::Import) {
                imports.push(self.import()?);
                continue;
            }
            decls.push(self.decl()?);
        }
        Ok(AstModule { name, imports, decls })
    }

    fn import(&mut self) -> PResult<Import> {
        self.expect_kw(Keyword::Import)?;
        let mut segments = vec![self.ident()?];
        let mut glob = false;
        while self.eat_punct(Punct::Dot) {
            if self.eat_punct(Punct::Star) {
                glob = true;
                break;
            }
            segments.push(self.ident()?);
        }
        Ok(Import { path: Path { segments }, glob })
    }

    fn decl(&mut self) -> PResult<Decl> {
        let start = self.span();
        let mut risks = Vec::new();
        while self.eat_kw(Keyword::Risk) {
            risks.push(self.path()?);
        }
        let no_risks = |p: &Self, risks: &Vec<Path>| -> PResult<()> {
            if risks.is_empty() {
                Ok(())
            } else {
                Err(p.error("function declaration after `risk`"))
            }
        };

        if self.is_kw(Keyword::Open) {
            no_risks(self, &risks)?;
            self.pos += 1;
            if self.is_kw(Keyword::Type) {
                return Ok(Decl::Type(self.type_decl(false, true)?));
            }
            if self.eat_kw(Keyword::Capability) {
                return Ok(Decl::Capability(CapabilityDecl { open: true, name: self.ident()? }));
            }
            return Err(self.error("`type` or `capability`"));
        }
        if self.is_kw(Keyword::Type) {
            no_risks(self, &risks)?;
            return Ok(Decl::Type(self.type_decl(false, false)?));
        }
        if self.eat_kw(Keyword::Capability) {
            no_risks(self, &risks)?;
            return Ok(Decl::Capability(CapabilityDecl { open: false, name: self.ident()? }));
        }
        if self.is_kw(Keyword::Public) {
            match self.peek_nth(1) {
                Some(TokenKind::Keyword(Keyword::Val)) => {
                    no_risks(self, &risks)?;
                    self.pos += 2;
                    let name = self.ident()?;
                    self.expect_punct(Punct::Eq)?;
                    let value = self.expr()?;
                    return Ok(Decl::Val(ValDecl { name, value }));
                }
                Some(TokenKind::Keyword(Keyword::Type)) => {
                    no_risks(self, &risks)?;
                    self.pos += 1;
                    return Ok(Decl::Type(self.type_decl(true, false)?));
                }
                Some(TokenKind::Keyword(Keyword::Open)) => {
                    no_risks(self, &risks)?;
                    self.pos += 2;
                    return Ok(Decl::Type(self.type_decl(true, true)?));
                }
                _ => {}
            }
        }
        if self.is_kw(Keyword::Init) && self.peek_nth(1) == Some(&TokenKind::Punct(Punct::LParen)) {
            self.pos += 1;
            self.expect_punct(Punct::LParen)?;
            let param = self.param()?;
            self.expect_punct(Punct::RParen)?;
            self.expect_punct(Punct::FatArrow)?;
            let body = self.expr()?;
            return Ok(Decl::Init(InitDecl { risks, param, body, span: start }));
        }
        Ok(Decl::Fun(self.fun_decl(risks)?))
    }

    fn type_decl(&mut self, public: bool, open: bool) -> PResult<TypeDecl> {
        self.expect_kw(Keyword::Type)?;
        let mut names = vec![self.path()?];
        while self.is_ident() {
            names.push(self.path()?);
        }
        let last = names.pop().expect("at least one name");
        if !last.is_single() {
            return Err(ParseError {
                position: last.span(),
                expected: "type name".into(),
                found: format!("`{last}`"),
            });
        }
        let name = last.segments.into_iter().next().expect("single");
        let caps = names;
        let mut type_params = Vec::new();
        if self.eat_punct(Punct::LBracket) {
            type_params = self.comma_list(Punct::RBracket, |p| p.ident())?;
        }
        let mut ctors = Vec::new();
        let mut shorthand = false;
        if self.eat_punct(Punct::LParen) {
            let fields = self.comma_list(Punct::RParen, |p| p.type_expr())?;
            ctors.push(CtorDecl { name: name.clone(), fields });
            shorthand = true;
        } else if self.eat_punct(Punct::LBrace) {
            ctors = self.comma_list(Punct::RBrace, |p| {
                let name = p.ident()?;
                let fields =
                    if p.eat_punct(Punct::LParen) { p.comma_list(Punct::RParen, |p| p.type_expr())? } else { vec![] };
                Ok(CtorDecl { name, fields })
            })?;
            if ctors.is_empty() {
                return Err(self.error("at least one constructor"));
            }
        }
        Ok(TypeDecl { public, open, caps, name, type_params, ctors, shorthand })
    }

    fn fun_decl(&mut self, risks: Vec<Path>) -> PResult<FunDecl> {
        let visibility = if self.eat_kw(Keyword::Public) {
            Some(VisibilityAst::Public)
        } else if self.eat_kw(Keyword::Private) {
            Some(VisibilityAst::Private)
        } else if self.eat_kw(Keyword::Protected) {
            self.expect_punct(Punct::LBracket)?;
            let t = self.ident()?;
            self.expect_punct(Punct::RBracket)?;
            Some(VisibilityAst::Protected(t))
        } else {
            None
        };
        let effect = match self.peek_kind() {
            Some(TokenKind::Keyword(Keyword::Pure)) => Some(Effect::Pure),
            Some(TokenKind::Keyword(Keyword::Init)) => Some(Effect::Init),
            Some(TokenKind::Keyword(Keyword::Dependent)) => Some(Effect::Dependent),
            Some(TokenKind::Keyword(Keyword::Active)) => Some(Effect::Active),
            _ => None,
        };
        if effect.is_some() {
            self.pos += 1;
        }
        let default_for = if self.eat_kw(Keyword::Default) {
            self.expect_punct(Punct::LBracket)?;
            let t = self.ident()?;
            self.expect_punct(Punct::RBracket)?;
            Some(t)
        } else {
            None
        };
        let name = self.ident().map_err(|_| self.error("declaration"))?;
        let mut type_params = Vec::new();
        if self.eat_punct(Punct::LBracket) {
            type_params = self.comma_list(Punct::RBracket, |p| p.ident())?;
        }
        self.expect_punct(Punct::LParen)?;
        let params = self.comma_list(Punct::RParen, |p| p.param())?;
        self.expect_punct(Punct::FatArrow)?;
        let body = self.expr()?;
        Ok(FunDecl { risks, visibility, effect, default_for, name, type_params, params, body })
    }

    fn param(&mut self) -> PResult<Param> {
        if self.is_ident() && self.peek_nth(1) == Some(&TokenKind::Punct(Punct::Colon)) {
            let name = self.ident()?;
            self.pos += 1;
            let ty = self.type_expr()?;
            return Ok(Param::Typed { name, ty });
        }
        Ok(Param::Pattern(self.pattern()?))
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        let span = self.span();
        if self.eat_punct(Punct::LParen) {
            let elems = self.comma_list(Punct::RParen, |p| p.type_expr())?;
            return Ok(TypeExpr { caps: vec![], kind: TypeExprKind::Tuple(elems), span });
        }
        let mut names = vec![self.path()?];
        while self.is_ident() {
            names.push(self.path()?);
        }
        let path = names.pop().expect("at least one name");
        let mut args = Vec::new();
        if self.eat_punct(Punct::LBracket) {
            args = self.comma_list(Punct::RBracket, |p| p.type_expr())?;
        }
        Ok(TypeExpr { caps: names, kind: TypeExprKind::Named { path, args }, span })
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        let span = self.span();
        if self.eat_punct(Punct::LParen) {
            let mut elems = self.comma_list(Punct::RParen, |p| p.pattern())?;
            return match elems.len() {
                0 => Err(ParseError { position: span, expected: "pattern".into(), found: "`()`".into() }),
                1 => Ok(elems.pop().expect("one")),
                _ => Ok(Pattern { kind: PatternKind::Tuple(elems), span }),
            };
        }
        let mut names = vec![self.path()?];
        while self.is_ident() {
            names.push(self.path()?);
        }
        let path = names.pop().expect("at least one name");
        let type_args = if self.eat_punct(Punct::LBracket) {
            Some(self.comma_list(Punct::RBracket, |p| p.type_expr())?)
        } else {
            None
        };
        let fields =
            if self.eat_punct(Punct::LParen) { Some(self.comma_list(Punct::RParen, |p| p.pattern())?) } else { None };
        if names.is_empty() && type_args.is_none() && fields.is_none() && path.is_single() {
            let ident = path.segments.into_iter().next().expect("single");
            if ident.name == "_" {
                return Ok(Pattern { kind: PatternKind::Wild, span });
            }
            return Ok(Pattern { kind: PatternKind::Name(ident), span });
        }
        Ok(Pattern { kind: PatternKind::Ctor { caps: names, path, type_args, fields }, span })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.arith()?;
        if self.is_punct(Punct::Amp) {
            let span = lhs.span;
            self.pos += 1;
            self.expect_kw(Keyword::Return)?;
            let result = self.expr()?;
            return Ok(Expr { kind: ExprKind::AndReturn { cell: Box::new(lhs), result: Box::new(result) }, span });
        }
        Ok(lhs)
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut lhs = self.postfix()?;
        loop {
            let op = if self.is_punct(Punct::Plus) {
                BinOp::Add
            } else if self.is_punct(Punct::Minus) {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.postfix()?;
            let span = lhs.span;
            lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span };
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct(Punct::Dot) && self.peek_nth(1) == Some(&TokenKind::Ident) {
                let which = self.toks[self.pos + 1].lexeme.as_str();
                if (which == "attach" || which == "detach")
                    && self.peek_nth(2) == Some(&TokenKind::Punct(Punct::LBracket))
                {
                    let attach = which == "attach";
                    self.pos += 3;
                    let cap = self.path()?;
                    self.expect_punct(Punct::RBracket)?;
                    let span = e.span;
                    let expr = Box::new(e);
                    e = Expr {
                        kind: if attach { ExprKind::Attach { expr, cap } } else { ExprKind::Detach { expr, cap } },
                        span,
                    };
                    continue;
                }
            }
            return Ok(e);
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let Some(tok) = self.peek() else {
            return Err(self.error("expression"));
        };
        match &tok.kind {
            TokenKind::UInt(v) => {
                self.pos += 1;
                Ok(Expr { kind: ExprKind::Lit(Literal::UInt(*v)), span })
            }
            TokenKind::Int(v) => {
                self.pos += 1;
                Ok(Expr { kind: ExprKind::Lit(Literal::Int(*v)), span })
            }
            TokenKind::Punct(Punct::LParen) => {
                self.pos += 1;
                let mut elems = self.comma_list(Punct::RParen, |p| p.expr())?;
                Ok(match elems.len() {
                    0 => Expr { kind: ExprKind::Unit, span },
                    1 => elems.pop().expect("one"),
                    _ => Expr { kind: ExprKind::Tuple(elems), span },
                })
            }
            TokenKind::Punct(Punct::LBrace) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(Punct::RBrace)?;
                Ok(e)
            }
            TokenKind::Keyword(Keyword::Let) => {
                self.pos += 1;
                let pattern = self.pattern()?;
                self.expect_punct(Punct::Eq)?;
                let bound = self.expr()?;
                self.expect_kw(Keyword::In)?;
                let body = self.expr()?;
                Ok(Expr { kind: ExprKind::Let { pattern, bound: Box::new(bound), body: Box::new(body) }, span })
            }
            TokenKind::Keyword(Keyword::Case) => {
                self.pos += 1;
                let scrutinee = self.expr()?;
                self.expect_kw(Keyword::Of)?;
                self.eat_punct(Punct::Bar);
                let mut arms = vec![self.arm()?];
                while self.eat_punct(Punct::Bar) {
                    arms.push(self.arm()?);
                }
                Ok(Expr { kind: ExprKind::Case { scrutinee: Box::new(scrutinee), arms }, span })
            }
            TokenKind::Keyword(Keyword::Modify) => {
                self.pos += 1;
                let reference = self.expr()?;
                self.expect_kw(Keyword::With)?;
                let binder = self.pattern()?;
                self.expect_punct(Punct::FatArrow)?;
                let body = self.expr()?;
                Ok(Expr { kind: ExprKind::Modify { reference: Box::new(reference), binder, body: Box::new(body) }, span })
            }
            TokenKind::Keyword(Keyword::Cycle) => {
                self.pos += 1;
                let bound = match self.peek_kind() {
                    Some(TokenKind::UInt(v)) => {
                        let v = *v;
                        self.pos += 1;
                        v
                    }
                    _ => return Err(self.error("uint literal loop bound")),
                };
                self.expect_kw(Keyword::From)?;
                let init = self.expr()?;
                self.expect_kw(Keyword::As)?;
                let acc = self.ident()?;
                self.expect_punct(Punct::FatArrow)?;
                let body = self.expr()?;
                Ok(Expr { kind: ExprKind::Cycle { bound, init: Box::new(init), acc, body: Box::new(body) }, span })
            }
            TokenKind::Keyword(Keyword::Try) => {
                self.pos += 1;
                let call = self.postfix()?;
                if !matches!(call.kind, ExprKind::Apply { args: Some(_), .. }) {
                    return Err(ParseError {
                        position: call.span,
                        expected: "function call after `try`".into(),
                        found: "expression".into(),
                    });
                }
                self.expect_kw(Keyword::Catch)?;
                self.expect_punct(Punct::LBrace)?;
                let mut handlers = Vec::new();
                loop {
                    if self.eat_punct(Punct::RBrace) {
                        break;
                    }
                    let risk = self.path()?;
                    self.expect_punct(Punct::LParen)?;
                    let binders = self.comma_list(Punct::RParen, |p| p.ident())?;
                    self.expect_punct(Punct::FatArrow)?;
                    let body = self.expr()?;
                    handlers.push(Handler { risk, binders, body });
                    self.eat_punct(Punct::Comma);
                }
                if handlers.is_empty() {
                    return Err(ParseError { position: span, expected: "catch handler".into(), found: "`}`".into() });
                }
                Ok(Expr { kind: ExprKind::Try { call: Box::new(call), handlers }, span })
            }
            TokenKind::Ident => {
                let path = self.path()?;
                let type_args = if self.eat_punct(Punct::LBracket) {
                    Some(self.comma_list(Punct::RBracket, |p| p.type_expr())?)
                } else {
                    None
                };
                let args =
                    if self.eat_punct(Punct::LParen) { Some(self.comma_list(Punct::RParen, |p| p.expr())?) } else { None };
                if type_args.is_none() && args.is_none() {
                    Ok(Expr { kind: ExprKind::Name(path), span })
                } else {
                    Ok(Expr { kind: ExprKind::Apply { path, type_args, args }, span })
                }
            }
            _ => Err(self.error("expression")),
        }
    }

    fn arm(&mut self) -> PResult<Arm> {
        let pattern = self.pattern()?;
        self.expect_punct(Punct::FatArrow)?;
        let body = self.expr()?;
        Ok(Arm { pattern, body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::lexer::tokenize;

    fn parse(src: &str) -> PResult<AstModule> {
        parse_module(&tokenize(src).unwrap())
    }

    #[test]
    fn empty_module() {
        let m = parse("module M {}").unwrap();
        assert_eq!(m.name.name, "M");
        assert!(m.decls.is_empty());
    }

    #[test]
    fn truncated_input_errors_at_eof() {
        let e = parse("module M { type X(").unwrap_err();
        assert_eq!(e.found, "end of input");
    }

    #[test]
    fn type_decl_caps_and_shorthand() {
        let m = parse("module M { type Drop Persist Token[T](UInt) }").unwrap();
        let Decl::Type(t) = &m.decls[0] else { panic!() };
        assert_eq!(t.caps.len(), 2);
        assert_eq!(t.name.name, "Token");
        assert!(t.shorthand);
        assert_eq!(t.ctors.len(), 1);
        assert_eq!(t.ctors[0].name.name, "Token");
    }

    #[test]
    fn multi_ctor_braces() {
        let m = parse("module M { type Drop Opt[T] { None, Some(T) } }").unwrap();
        let Decl::Type(t) = &m.decls[0] else { panic!() };
        assert_eq!(t.ctors.len(), 2);
        assert!(!t.shorthand);
    }

    #[test]
    fn risks_attach_to_next_function() {
        let m = parse("module M { risk A risk B public f() => 0 }").unwrap();
        let Decl::Fun(f) = &m.decls[0] else { panic!() };
        assert_eq!(f.risks.len(), 2);
    }

    #[test]
    fn chained_detach() {
        let m = parse("module M { f(x: UInt) => x.detach[A].detach[B] }").unwrap();
        let Decl::Fun(f) = &m.decls[0] else { panic!() };
        let ExprKind::Detach { expr, .. } = &f.body.kind else { panic!() };
        assert!(matches!(expr.kind, ExprKind::Detach { .. }));
    }

    #[test]
    fn and_return_inside_case() {
        let m = parse("module M { f(r: UInt) => modify r with Token(t) => case g(t) of (a, b) => a & return b }")
            .unwrap();
        let Decl::Fun(f) = &m.decls[0] else { panic!() };
        let ExprKind::Modify { body, .. } = &f.body.kind else { panic!() };
        let ExprKind::Case { arms, .. } = &body.kind else { panic!() };
        assert!(matches!(arms[0].body.kind, ExprKind::AndReturn { .. }));
    }

    #[test]
    fn init_decl_versus_init_effect() {
        let m = parse("module M { init(d: Master ID) => 0  init f() => 0 }").unwrap();
        assert!(matches!(m.decls[0], Decl::Init(_)));
        let Decl::Fun(f) = &m.decls[1] else { panic!() };
        assert_eq!(f.effect, Some(Effect::Init));
    }

    #[test]
    fn try_catch_handlers() {
        let m = parse("module M { f(a: UInt) => try g(a) catch { NumericOverflow(x) => x, EmptyCell(y) => y } }").unwrap();
        let Decl::Fun(f) = &m.decls[0] else { panic!() };
        let ExprKind::Try { handlers, .. } = &f.body.kind else { panic!() };
        assert_eq!(handlers.len(), 2);
    }

    #[test]
    fn cycle_requires_literal_bound() {
        assert!(parse("module M { f(a: UInt) => cycle 3 from a as acc => acc + 1 }").is_ok());
        assert!(parse("module M { f(a: UInt) => cycle a from a as acc => acc }").is_err());
    }

    #[test]
    fn qualified_builtin_call() {
        let m = parse("module M { public val v = Store[X](Context.new[Token[X]]()) }").unwrap();
        let Decl::Val(v) = &m.decls[0] else { panic!() };
        let ExprKind::Apply { args: Some(args), .. } = &v.value.kind else { panic!() };
        let ExprKind::Apply { path, .. } = &args[0].kind else { panic!() };
        assert_eq!(path.to_string(), "Context.new");
    }
}
