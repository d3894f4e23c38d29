//! Canonical A1 printing and relative R1C1 normalization.
//!
//! Both share one layout routine; they differ only in how references are
//! spelled. Parentheses are emitted only where precedence requires them.

use std::fmt::Write;

use super::ast::{CellRef, Expr, RangeRef};
use crate::address::{column_name, CellAddress};

const UNARY_PREC: u8 = 5;
const ATOM_PREC: u8 = 6;

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, _, _) => op.precedence(),
        Expr::Unary(..) => UNARY_PREC,
        _ => ATOM_PREC,
    }
}

fn write_number(out: &mut String, n: f64) {
    // `{}` on f64 yields the shortest text that parses back to the same bits.
    if n < 0.0 {
        let _ = write!(out, "({n})");
    } else {
        let _ = write!(out, "{n}");
    }
}

fn write_expr(out: &mut String, e: &Expr, refs: &dyn Fn(&mut String, &RefText)) {
    match e {
        Expr::Number(n) => write_number(out, *n),
        Expr::Text(t) => {
            out.push('"');
            out.push_str(&t.replace('"', "\"\""));
            out.push('"');
        }
        Expr::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        Expr::Ref(r) => refs(out, &RefText::Cell(*r)),
        Expr::Range(r) => refs(out, &RefText::Range(*r)),
        Expr::Unary(_, inner) => {
            out.push('-');
            write_child(out, inner, expr_prec(inner) < ATOM_PREC, refs);
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            // Comparisons do not chain, so a nested comparison on either side
            // needs parentheses. Everything else is left-associative.
            let left_parens = if op.is_comparison() {
                expr_prec(lhs) <= p
            } else {
                expr_prec(lhs) < p
            };
            write_child(out, lhs, left_parens, refs);
            out.push_str(op.symbol());
            write_child(out, rhs, expr_prec(rhs) <= p, refs);
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_expr(out, arg, refs);
            }
            out.push(')');
        }
    }
}

fn write_child(out: &mut String, e: &Expr, parens: bool, refs: &dyn Fn(&mut String, &RefText)) {
    if parens {
        out.push('(');
        write_expr(out, e, refs);
        out.push(')');
    } else {
        write_expr(out, e, refs);
    }
}

enum RefText {
    Cell(CellRef),
    Range(RangeRef),
}

fn a1(out: &mut String, r: &CellRef) {
    if r.col_absolute {
        out.push('$');
    }
    out.push_str(&column_name(r.addr.col()));
    if r.row_absolute {
        out.push('$');
    }
    let _ = write!(out, "{}", r.addr.row());
}

fn r1c1(out: &mut String, r: &CellRef, origin: CellAddress) {
    out.push('R');
    Component::of(r.addr.row() as i64, r.row_absolute, origin.row() as i64).write(out);
    out.push('C');
    Component::of(r.addr.col() as i64, r.col_absolute, origin.col() as i64).write(out);
}

/// Canonical A1 text, including the leading `=`.
pub fn print_formula(expr: &Expr) -> String {
    let mut out = String::from("=");
    write_expr(&mut out, expr, &|out, r| match r {
        RefText::Cell(c) => a1(out, c),
        RefText::Range(range) => {
            a1(out, &range.start());
            out.push(':');
            a1(out, &range.end());
        }
    });
    out
}

/// Relative R1C1 text of a formula hosted at `origin`.
///
/// Two cells are copy-equivalent exactly when their normalized texts are
/// equal.
pub fn normalize_r1c1(expr: &Expr, origin: CellAddress) -> String {
    let mut out = String::from("=");
    write_expr(&mut out, expr, &|out, r| match r {
        RefText::Cell(c) => r1c1(out, c, origin),
        RefText::Range(range) => r1c1_range(out, range, origin),
    });
    out
}

/// One row or column component of a reference, in R1C1 terms.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Component {
    Absolute(i64),
    Relative(i64),
}

impl Component {
    fn of(index: i64, absolute: bool, origin: i64) -> Self {
        if absolute {
            Component::Absolute(index)
        } else {
            Component::Relative(index - origin)
        }
    }

    fn write(self, out: &mut String) {
        match self {
            Component::Absolute(n) => {
                let _ = write!(out, "{n}");
            }
            Component::Relative(0) => {}
            Component::Relative(d) => {
                let _ = write!(out, "[{d}]");
            }
        }
    }
}

/// Rows and columns are each written as an ordered pair: absolute before
/// relative, then ascending. Filling a range whose corners mix absolute and
/// relative parts can move the relative corner past the absolute one, which
/// swaps the stored corners; this order does not depend on that.
fn r1c1_range(out: &mut String, range: &RangeRef, origin: CellAddress) {
    let (s, e) = (range.start(), range.end());
    let pair = |a: Component, b: Component| if a <= b { (a, b) } else { (b, a) };
    let (r1, r2) = pair(
        Component::of(s.addr.row() as i64, s.row_absolute, origin.row() as i64),
        Component::of(e.addr.row() as i64, e.row_absolute, origin.row() as i64),
    );
    let (c1, c2) = pair(
        Component::of(s.addr.col() as i64, s.col_absolute, origin.col() as i64),
        Component::of(e.addr.col() as i64, e.col_absolute, origin.col() as i64),
    );
    for (i, (r, c)) in [(r1, c1), (r2, c2)].into_iter().enumerate() {
        if i == 1 {
            out.push(':');
        }
        out.push('R');
        r.write(out);
        out.push('C');
        c.write(out);
    }
}
