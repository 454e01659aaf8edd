//! MiniC: a small statically typed imperative language (Int and Bool only) with a
//! canonical printer and a deterministic interpreter. The interpreter is the
//! equivalence oracle for every source transformation in this crate.

pub mod ast;
pub mod equiv;
pub mod gen;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod scope;

pub use ast::*;
pub use interp::{interpret, RunOutcome, RuntimeFault, Value, DEFAULT_FUEL};
pub use lexer::{lex, LexError, Token, TokenKind};
pub use parser::{parse, ParseError};
pub use printer::{expr_text, print_source};
pub use equiv::{check_equivalent, compare_on, Divergence};
pub use scope::{resolve_scopes, Access, DeclInfo, DeclKind, SemanticError, SymbolTable};

/// Source text with an optional originating path, used for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceText {
    pub text: String,
    pub origin: Option<std::path::PathBuf>,
}

impl SourceText {
    pub fn new(text: impl Into<String>) -> Self {
        SourceText {
            text: text.into(),
            origin: None,
        }
    }

    pub fn from_path(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(SourceText {
            text: std::fs::read_to_string(path)?,
            origin: Some(path.to_path_buf()),
        })
    }

    pub fn parse(&self) -> Result<SourceUnit, ParseError> {
        parse(&self.text)
    }

    /// `origin:line:col: message`, or `line:col: message` when the origin is unknown.
    pub fn diagnostic(&self, err: &ParseError) -> String {
        match &self.origin {
            Some(p) => format!("{}:{err}", p.display()),
            None => err.to_string(),
        }
    }
}

/// Parses and fully resolves a source string.
pub fn load(src: &str) -> Result<(SourceUnit, SymbolTable), String> {
    let unit = parse(src).map_err(|e| e.to_string())?;
    let table = resolve_scopes(&unit).map_err(|e| e.to_string())?;
    Ok((unit, table))
}
