//! The problem-file language: charts, coframes, algebroids, realizations
//! and tasks. See `docs/dsl.md` for the grammar.

pub mod ast;
pub mod lexer;
mod lower;
mod parser;
mod pretty;

use thiserror::Error;

pub use lower::{lower, surrogate, LowerOptions, Problem, RealizationEntry};
pub use parser::{parse, parse_expr};

/// A positioned error: `line:col: message`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Parse and lower in one step.
pub fn load(src: &str, opts: LowerOptions) -> Result<Problem, Diagnostic> {
    lower(&parse(src)?, opts)
}
