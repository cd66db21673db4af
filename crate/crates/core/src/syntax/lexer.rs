use std::fmt;

use thiserror::Error;

use super::ast::Span;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Keyword {
    Module,
    Import,
    Type,
    Capability,
    Open,
    Risk,
    Public,
    Private,
    Protected,
    Pure,
    Init,
    Dependent,
    Active,
    Default,
    Val,
    Let,
    In,
    Case,
    Of,
    Modify,
    With,
    Return,
    Try,
    Catch,
    Cycle,
    From,
    As,
}

const KEYWORDS: &[(&str, Keyword)] = &[
    ("module", Keyword::Module),
    ("import", Keyword::Import),
    ("type", Keyword::Type),
    ("capability", Keyword::Capability),
    ("open", Keyword::Open),
    ("risk", Keyword::Risk),
    ("public", Keyword::Public),
    ("private", Keyword::Private),
    ("protected", Keyword::Protected),
    ("pure", Keyword::Pure),
    ("init", Keyword::Init),
    ("dependent", Keyword::Dependent),
    ("active", Keyword::Active),
    ("default", Keyword::Default),
    ("val", Keyword::Val),
    ("let", Keyword::Let),
    ("in", Keyword::In),
    ("case", Keyword::Case),
    ("of", Keyword::Of),
    ("modify", Keyword::Modify),
    ("with", Keyword::With),
    ("return", Keyword::Return),
    ("try", Keyword::Try),
    ("catch", Keyword::Catch),
    ("cycle", Keyword::Cycle),
    ("from", Keyword::From),
    ("as", Keyword::As),
];

impl Keyword {
    pub fn lookup(word: &str) -> Option<Keyword> {
        KEYWORDS.iter().find(|(w, _)| *w == word).map(|(_, k)| *k)
    }

    pub fn as_str(self) -> &'static str {
        KEYWORDS.iter().find(|(_, k)| *k == self).map(|(w, _)| *w).unwrap_or("?")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Punct {
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Dot,
    Eq,
    FatArrow,
    Amp,
    Plus,
    Minus,
    Bar,
    Star,
}

impl Punct {
    pub fn as_str(self) -> &'static str {
        match self {
            Punct::LBrace => "{",
            Punct::RBrace => "}",
            Punct::LParen => "(",
            Punct::RParen => ")",
            Punct::LBracket => "[",
            Punct::RBracket => "]",
            Punct::Comma => ",",
            Punct::Colon => ":",
            Punct::Dot => ".",
            Punct::Eq => "=",
            Punct::FatArrow => "=>",
            Punct::Amp => "&",
            Punct::Plus => "+",
            Punct::Minus => "-",
            Punct::Bar => "|",
            Punct::Star => "*",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident,
    /// Unsigned literal, e.g. `100000000`.
    UInt(u64),
    /// Signed literal, written with an `i` suffix, e.g. `42i`.
    Int(i64),
    Punct(Punct),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "keyword `{}`", k.as_str()),
            TokenKind::Ident => f.write_str("identifier"),
            TokenKind::UInt(_) => f.write_str("uint literal"),
            TokenKind::Int(_) => f.write_str("int literal"),
            TokenKind::Punct(p) => write!(f, "`{}`", p.as_str()),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: u32,
    pub col: u32,
    /// Byte offset of the lexeme in the source.
    pub offset: usize,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    /// Position just past the last character, used for end-of-input errors.
    pub end: Span,
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("{line}:{col}: {message}")]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Tokenize raw bytes; invalid UTF-8 is reported as a lexical error.
pub fn tokenize_bytes(bytes: &[u8]) -> Result<TokenStream, LexError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => tokenize(s),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or("");
            let (line, col) = position_after(valid);
            Err(LexError { line, col, message: "invalid UTF-8".into() })
        }
    }
}

fn position_after(s: &str) -> (u32, u32) {
    let mut line = 1;
    let mut col = 1;
    for c in s.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

pub fn tokenize(source: &str) -> Result<TokenStream, LexError> {
    let mut tokens = Vec::new();
    let chars: Vec<(usize, char)> = source.char_indices().collect();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    let err = |line, col, message: &str| LexError { line, col, message: message.to_string() };

    while i < chars.len() {
        let (offset, c) = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1).map(|p| p.1) == Some('/') {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }

        let start_line = line;
        let start_col = col;
        let start = i;

        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let end = chars.get(i).map(|p| p.0).unwrap_or(source.len());
            let word = &source[offset..end];
            let kind = match Keyword::lookup(word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident,
            };
            col += (i - start) as u32;
            tokens.push(Token { kind, lexeme: word.to_string(), line: start_line, col: start_col, offset });
            continue;
        }

        if c.is_ascii_digit() {
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                i += 1;
            }
            let digits_end = chars.get(i).map(|p| p.0).unwrap_or(source.len());
            let digits = &source[offset..digits_end];
            let signed = chars.get(i).map(|p| p.1) == Some('i');
            if signed {
                i += 1;
            }
            if let Some(&(_, next)) = chars.get(i) {
                if next.is_ascii_alphanumeric() || next == '_' {
                    return Err(err(start_line, start_col, "malformed numeric literal"));
                }
            }
            let end = chars.get(i).map(|p| p.0).unwrap_or(source.len());
            let kind = if signed {
                match digits.parse::<i64>() {
                    Ok(v) => TokenKind::Int(v),
                    Err(_) => return Err(err(start_line, start_col, "int literal out of range")),
                }
            } else {
                match digits.parse::<u64>() {
                    Ok(v) => TokenKind::UInt(v),
                    Err(_) => return Err(err(start_line, start_col, "uint literal out of range")),
                }
            };
            col += (i - start) as u32;
            tokens.push(Token {
                kind,
                lexeme: source[offset..end].to_string(),
                line: start_line,
                col: start_col,
                offset,
            });
            continue;
        }

        let next = chars.get(i + 1).map(|p| p.1);
        let (punct, len) = match (c, next) {
            ('=', Some('>')) => (Punct::FatArrow, 2),
            ('{', _) => (Punct::LBrace, 1),
            ('}', _) => (Punct::RBrace, 1),
            ('(', _) => (Punct::LParen, 1),
            (')', _) => (Punct::RParen, 1),
            ('[', _) => (Punct::LBracket, 1),
            (']', _) => (Punct::RBracket, 1),
            (',', _) => (Punct::Comma, 1),
            (':', _) => (Punct::Colon, 1),
            ('.', _) => (Punct::Dot, 1),
            ('=', _) => (Punct::Eq, 1),
            ('&', _) => (Punct::Amp, 1),
            ('+', _) => (Punct::Plus, 1),
            ('-', _) => (Punct::Minus, 1),
            ('|', _) => (Punct::Bar, 1),
            ('*', _) => (Punct::Star, 1),
            _ => return Err(err(start_line, start_col, &format!("illegal character {c:?}"))),
        };
        i += len;
        col += len as u32;
        tokens.push(Token {
            kind: TokenKind::Punct(punct),
            lexeme: punct.as_str().to_string(),
            line: start_line,
            col: start_col,
            offset,
        });
    }

    Ok(TokenStream { tokens, end: Span::new(line, col) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().tokens.into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn module_header() {
        let ts = tokenize("module Token {").unwrap();
        assert_eq!(ts.tokens.len(), 3);
        assert_eq!(ts.tokens[0].kind, TokenKind::Keyword(Keyword::Module));
        assert_eq!(ts.tokens[1].kind, TokenKind::Ident);
        assert_eq!(ts.tokens[1].lexeme, "Token");
        assert_eq!(ts.tokens[2].kind, TokenKind::Punct(Punct::LBrace));
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().tokens.is_empty());
    }

    #[test]
    fn large_uint_literal() {
        assert_eq!(kinds("100000000"), vec![TokenKind::UInt(100000000)]);
        assert_eq!(kinds("18446744073709551615"), vec![TokenKind::UInt(u64::MAX)]);
        assert!(tokenize("18446744073709551616").is_err());
    }

    #[test]
    fn int_literal_suffix() {
        assert_eq!(kinds("42i"), vec![TokenKind::Int(42)]);
        assert!(tokenize("42x").is_err());
    }

    #[test]
    fn fat_arrow_and_minus() {
        assert_eq!(
            kinds("a-b => c"),
            vec![
                TokenKind::Ident,
                TokenKind::Punct(Punct::Minus),
                TokenKind::Ident,
                TokenKind::Punct(Punct::FatArrow),
                TokenKind::Ident
            ]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(kinds("a // b c\nd"), vec![TokenKind::Ident, TokenKind::Ident]);
    }

    #[test]
    fn illegal_character_has_position() {
        let e = tokenize("module M {\n  $").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
    }

    #[test]
    fn invalid_utf8_is_an_error() {
        assert!(tokenize_bytes(&[b'a', 0xff, b'b']).is_err());
    }

    #[test]
    fn positions_non_decreasing() {
        let ts = tokenize("module M {\n type X(UInt)\n}").unwrap();
        for w in ts.tokens.windows(2) {
            assert!((w[0].line, w[0].col) < (w[1].line, w[1].col));
        }
    }
}
