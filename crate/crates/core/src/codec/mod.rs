//! Code representation of workflows.
//!
//! A workflow becomes straight-line keyword calls, one per node, in
//! topological order:
//!
//! ```text
//! model_4, clip_4, vae_4 = CheckpointLoaderSimple(ckpt_name="""v1-5.safetensors""")
//! conditioning_6 = CLIPTextEncode(text="""a cat""", clip=clip_4)
//! _ = PreviewImage(images=image_8)
//! ```
//!
//! Variables are named after the source schema's output slots with the
//! node id as suffix, so ids survive a round trip. Nodes without outputs
//! bind `_`; when parsed back they get fresh ids above every suffix in the
//! script. [`emit_element_list`] renders the same graph as plain sentences.

mod elements;
mod emit;
pub(crate) mod lexer;
mod parse;

use indexmap::IndexMap;
use thiserror::Error;

use crate::graph::{Literal, NodeId, ValidationReport};

pub use elements::{emit_element_list, read_element_list};
pub use emit::{emit_code, lower};
pub use lexer::{format_literal, parse_literal};
pub use parse::parse_code;

pub const DISCARD: &str = "_";

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Literal(Literal),
    Var(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    /// Bound names; [`DISCARD`] marks an unused slot.
    pub targets: Vec<String>,
    pub class_name: String,
    pub args: IndexMap<String, Arg>,
    pub node_id: NodeId,
    /// 1-based source line of the statement.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodeScript {
    pub statements: Vec<Statement>,
}

impl CodeScript {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Number of arguments that reference a variable.
    pub fn var_arg_count(&self) -> usize {
        self.statements
            .iter()
            .map(|s| s.args.values().filter(|a| matches!(a, Arg::Var(_))).count())
            .sum()
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("line {line}, column {col}: positional argument; every argument needs a keyword")]
    PositionalArgument { line: usize, col: usize },
    #[error("line {line}, column {col}: nested call; bind the inner call to a variable first")]
    NestedCall { line: usize, col: usize },
    #[error("line {line}: variable {name:?} is used before it is bound")]
    UnboundVariable { line: usize, name: String },
    #[error("line {line}: variable {name:?} is bound twice")]
    DuplicateBinding { line: usize, name: String },
    #[error("line {line}: keyword {name:?} given twice")]
    DuplicateArgument { line: usize, name: String },
    #[error("line {line}: unknown node class {class:?}")]
    UnknownClass { line: usize, class: String },
    #[error("line {line}: {class} has {expected} output(s) but {found} target(s) are bound")]
    TargetCount {
        line: usize,
        class: String,
        expected: usize,
        found: usize,
    },
    #[error("class name {0:?} cannot be written as a call")]
    UnrepresentableClass(String),
    #[error("workflow is invalid:\n{0}")]
    InvalidGraph(ValidationReport),
    #[error("element list line {line}: {message}")]
    ElementList { line: usize, message: String },
}

impl CodecError {
    /// 1-based source line, when the error has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            CodecError::Syntax { line, .. }
            | CodecError::PositionalArgument { line, .. }
            | CodecError::NestedCall { line, .. }
            | CodecError::UnboundVariable { line, .. }
            | CodecError::DuplicateBinding { line, .. }
            | CodecError::DuplicateArgument { line, .. }
            | CodecError::UnknownClass { line, .. }
            | CodecError::TargetCount { line, .. }
            | CodecError::ElementList { line, .. } => Some(*line),
            CodecError::UnrepresentableClass(_) | CodecError::InvalidGraph(_) => None,
        }
    }
}

pub(crate) fn is_var_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub(crate) fn is_class_ident(name: &str) -> bool {
    let mut chars = name.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Numeric id carried by a `stem_<id>` variable name.
pub(crate) fn id_suffix(name: &str) -> Option<NodeId> {
    let (_, digits) = name.rsplit_once('_')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok().and_then(NodeId::new)
}
