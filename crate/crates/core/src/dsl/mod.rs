//! Vector fields written in a small arithmetic language, with exact
//! evaluation and symbolic Jacobians.

mod expr;
mod field;
mod parser;

pub use expr::{BinaryOp, DomainFault, DomainViolation, Expr, UnaryOp};
pub use field::{EvalError, VectorField};
pub use parser::{parse_components, parse_expr, ParseError};
