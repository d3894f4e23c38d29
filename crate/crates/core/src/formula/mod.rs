//! The formula language: parsing, printing, normalization and reference
//! extraction.

mod ast;
mod parser;
mod printer;

pub use ast::{BinaryOp, CellRef, Expr, Function, RangeRef, RefNode, UnaryOp};
pub use parser::{parse_formula, FormulaError, FormulaErrorKind};
pub use printer::{normalize_r1c1, print_formula};

use std::collections::BTreeSet;

use crate::address::CellAddress;

/// Cells read by `expr`, ranges expanded, sorted row-major.
///
/// References are stored resolved, so the hosting cell does not affect the
/// result; a self-reference is returned like any other.
pub fn referenced_cells(expr: &Expr) -> BTreeSet<CellAddress> {
    expr.referenced_cells()
}
