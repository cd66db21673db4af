//! Lexing, parsing and pretty printing of Mandala source.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::AstModule;
pub use lexer::{tokenize, tokenize_bytes, LexError, Token, TokenKind, TokenStream};
pub use parser::{parse_module, parse_type, ParseError};
pub use printer::pretty_print;

use thiserror::Error;

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum SyntaxError {
    #[error("lex error at {0}")]
    Lex(#[from] LexError),
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
}

impl SyntaxError {
    pub fn position(&self) -> (u32, u32) {
        match self {
            SyntaxError::Lex(e) => (e.line, e.col),
            SyntaxError::Parse(e) => (e.position.line, e.position.col),
        }
    }
}

/// Tokenize and parse in one step.
pub fn parse_source(source: &str) -> Result<AstModule, SyntaxError> {
    Ok(parse_module(&tokenize(source)?)?)
}
