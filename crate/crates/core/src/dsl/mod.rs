//! The propagation-mechanism language: parser, canonical printer, shape
//! checker, compiler onto the autodiff graph, and the built-in corpus.
//!
//! ```text
//! mechanism gcn {
//!   consts {
//!     K = 1;
//!   }
//!   params {
//!     W[k]: matrix(h, h) = glorot;
//!   }
//!   graph {
//!     Ahat = sym_norm(c = 1);
//!   }
//!   init {
//!     Z = X;
//!   }
//!   step k in 1..K {
//!     Z = spmm(Ahat, Z) @ W[k];
//!   }
//!   out {
//!     Y = Z;
//!   }
//! }
//! ```
//!
//! `X` (the hidden input), `X_raw` (the first linear layer's output) and `A`
//! (the raw adjacency) are always in scope.

mod ast;
mod check;
mod compile;
mod corpus;
mod eval;
mod lexer;
mod parser;
mod printer;

use thiserror::Error;

pub use ast::{
    BinOp, ConstDef, Dim, Expr, ExprKind, Func, GraphCtor, GraphDef, InitSpec, ParamDecl,
    ParamShape, PropProgram, Span, StepBlock, Stmt,
};
pub use check::{check_shapes, Annotation, TypedProgram};
pub use compile::{compile, compile_into, CompiledMechanism, MechanismNodes};
pub use corpus::{builtin, BUILTIN_NAMES, SEED_NAMES};
pub use parser::{parse, MAX_K};
pub use printer::print;

use crate::autodiff::Shape;

/// Concrete sizes bound to the symbolic dimensions `n`, `f`, `h`, `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n: usize,
    pub f: usize,
    pub h: usize,
    pub c: usize,
}

/// Pipeline stage an error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Shape,
    Compile,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at {span}: {message}")]
    Syntax { span: Span, message: String },
    #[error("unknown keyword `{word}` at {span}")]
    UnknownKeyword { word: String, span: Span },
    #[error("missing required constant K")]
    MissingK,
    #[error("K = {value} at {span} must be an integer in 1..={max}")]
    KOutOfRange { value: f64, max: usize, span: Span },
    #[error("shape mismatch in {op} at {span}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
        span: Span,
    },
    #[error("undeclared identifier `{name}` at {span}")]
    UndeclaredIdentifier { name: String, span: Span },
    #[error("invalid program at {span}: {message}")]
    Invalid { span: Span, message: String },
    #[error("compile error: {0}")]
    Compile(String),
    #[error("unknown builtin mechanism {0:?}")]
    UnknownBuiltin(String),
}

impl DslError {
    pub(crate) fn syntax(span: Span, message: impl Into<String>) -> DslError {
        DslError::Syntax {
            span,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(span: Span, message: impl Into<String>) -> DslError {
        DslError::Invalid {
            span,
            message: message.into(),
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            DslError::Syntax { .. }
            | DslError::UnknownKeyword { .. }
            | DslError::MissingK
            | DslError::KOutOfRange { .. } => Stage::Parse,
            DslError::ShapeMismatch { .. }
            | DslError::UndeclaredIdentifier { .. }
            | DslError::Invalid { .. } => Stage::Shape,
            DslError::Compile(_) | DslError::UnknownBuiltin(_) => Stage::Compile,
        }
    }
}

/// Parses and shape-checks in one call.
pub fn parse_and_check(text: &str, dims: Dims) -> Result<TypedProgram, DslError> {
    check_shapes(&parse(text)?, dims)
}
