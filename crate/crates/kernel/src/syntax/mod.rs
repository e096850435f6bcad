//! Concrete syntax: tokens, the AST, the parser and the pretty printer.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use parser::{parse_decls, parse_expr, parse_module, parse_type, ParseError};
pub use printer::{print_decl, print_expr, print_module, print_op, print_type, quote};
