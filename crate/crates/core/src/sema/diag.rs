use std::fmt;

use crate::syntax::ast::Span;

/// Stable diagnostic codes. Tests key on these strings.
pub mod codes {
    pub const NAME_UNKNOWN: &str = "E-NAME-UNKNOWN";
    pub const NAME_AMBIG: &str = "E-NAME-AMBIG";
    pub const NAME_DUP: &str = "E-NAME-DUP";
    pub const IMPORT_MISSING: &str = "E-IMPORT-MISSING";
    pub const REC_FORWARD: &str = "E-REC-FORWARD";
    pub const TYPE_MISMATCH: &str = "E-TYPE-MISMATCH";
    pub const MATCH_NONEXH: &str = "E-MATCH-NONEXH";
    pub const GENERIC_AMBIG: &str = "E-GENERIC-AMBIG";
    pub const CTOR_CLOSED: &str = "E-CTOR-CLOSED";
    pub const PERSIST: &str = "E-PERSIST";
    pub const LIN_COPY: &str = "E-LIN-COPY";
    pub const LIN_DROP: &str = "E-LIN-DROP";
    pub const INSPECT: &str = "E-INSPECT";
    pub const CAP_ATTACH: &str = "E-CAP-ATTACH";
    pub const CAP_STRUCT: &str = "E-CAP-STRUCT";
    pub const CAP_MODIFY: &str = "E-CAP-MODIFY";
    pub const VIS_PROTECTED: &str = "E-VIS-PROTECTED";
    pub const VIS_PRIVATE: &str = "E-VIS-PRIVATE";
    pub const EFF_ESCALATE: &str = "E-EFF-ESCALATE";
    pub const EFF_MODIFY_IMPURE: &str = "E-EFF-MODIFY-IMPURE";
    pub const VAL_EFFECT: &str = "E-VAL-EFFECT";
    pub const VAL_CAPS: &str = "E-VAL-CAPS";
    pub const RISK_UNDECLARED: &str = "E-RISK-UNDECLARED";
    pub const RISK_UNKNOWN: &str = "E-RISK-UNKNOWN";
    pub const SYNTAX: &str = "E-SYNTAX";
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Diagnostic {
    pub code: &'static str,
    pub span: Span,
    pub message: String,
    pub related: Vec<Span>,
}

impl Diagnostic {
    pub fn new(code: &'static str, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { code, span, message: message.into(), related: Vec::new() }
    }

    pub fn with_related(mut self, span: Span) -> Self {
        self.related.push(span);
        self
    }

    /// `CODE file:line:col message`
    pub fn render(&self, file: &str) -> String {
        format!("{} {}:{}:{} {}", self.code, file, self.span.line, self.span.col, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{} {}", self.code, self.span.line, self.span.col, self.message)
    }
}

pub type Diags = Vec<Diagnostic>;
