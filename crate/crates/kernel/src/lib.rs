//! Parser, typechecker and evaluator for the modeling language used by
//! generated contract models.

pub mod checker;
pub mod diag;
pub mod eval;
pub mod library;
pub mod program;
pub mod syntax;
pub mod types;
pub mod value;

pub use diag::{Diagnostic, Location, SourceMap, Span};
pub use program::Program;
pub use eval::{Chooser, EvalError, Evaluator, Transition};
pub use value::Value;
pub use checker::{analyze, BuiltinChecker, Checker, ExternalChecker};
