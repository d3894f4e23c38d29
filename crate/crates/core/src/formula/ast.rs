use std::collections::BTreeSet;
use std::fmt;

use crate::address::CellAddress;

/// A single-cell reference with its `$` markers.
///
/// Coordinates are stored resolved (A1 semantics); the absolute flags only
/// matter when the formula is copied or normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub addr: CellAddress,
    pub col_absolute: bool,
    pub row_absolute: bool,
}

impl CellRef {
    pub fn relative(addr: CellAddress) -> Self {
        Self {
            addr,
            col_absolute: false,
            row_absolute: false,
        }
    }

    pub fn absolute(addr: CellAddress) -> Self {
        Self {
            addr,
            col_absolute: true,
            row_absolute: true,
        }
    }

    /// Moves the relative components by the given delta, as filling a
    /// formula would. `None` when the result leaves the sheet.
    pub fn translate(self, dcol: i64, drow: i64) -> Option<CellRef> {
        let dc = if self.col_absolute { 0 } else { dcol };
        let dr = if self.row_absolute { 0 } else { drow };
        Some(CellRef {
            addr: self.addr.offset(dc, dr)?,
            ..self
        })
    }
}

/// A rectangular range. Always normalized so `start` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RangeRef {
    start: CellRef,
    end: CellRef,
}

impl RangeRef {
    /// Builds a range, swapping columns and rows independently so that the
    /// start is top-left. Absolute markers travel with their component.
    pub fn new(a: CellRef, b: CellRef) -> Self {
        let (c1, c1_abs, c2, c2_abs) = if a.addr.col() <= b.addr.col() {
            (a.addr.col(), a.col_absolute, b.addr.col(), b.col_absolute)
        } else {
            (b.addr.col(), b.col_absolute, a.addr.col(), a.col_absolute)
        };
        let (r1, r1_abs, r2, r2_abs) = if a.addr.row() <= b.addr.row() {
            (a.addr.row(), a.row_absolute, b.addr.row(), b.row_absolute)
        } else {
            (b.addr.row(), b.row_absolute, a.addr.row(), a.row_absolute)
        };
        let start = CellRef {
            addr: CellAddress::new(c1, r1).expect("in bounds"),
            col_absolute: c1_abs,
            row_absolute: r1_abs,
        };
        let end = CellRef {
            addr: CellAddress::new(c2, r2).expect("in bounds"),
            col_absolute: c2_abs,
            row_absolute: r2_abs,
        };
        Self { start, end }
    }

    pub fn start(&self) -> CellRef {
        self.start
    }

    pub fn end(&self) -> CellRef {
        self.end
    }

    pub fn contains(&self, addr: CellAddress) -> bool {
        (self.start.addr.col()..=self.end.addr.col()).contains(&addr.col())
            && (self.start.addr.row()..=self.end.addr.row()).contains(&addr.row())
    }

    pub fn len(&self) -> usize {
        let cols = (self.end.addr.col() - self.start.addr.col()) as usize + 1;
        let rows = (self.end.addr.row() - self.start.addr.row()) as usize + 1;
        cols * rows
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Member cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellAddress> + '_ {
        let (c1, c2) = (self.start.addr.col(), self.end.addr.col());
        (self.start.addr.row()..=self.end.addr.row()).flat_map(move |row| {
            (c1..=c2).map(move |col| CellAddress::new(col, row).expect("in bounds"))
        })
    }

    pub fn translate(self, dcol: i64, drow: i64) -> Option<RangeRef> {
        Some(RangeRef::new(
            self.start.translate(dcol, drow)?,
            self.end.translate(dcol, drow)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    /// Binding strength: comparison 1, additive 2, multiplicative 3, power 4.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq
            | BinaryOp::Ne
            | BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge => 1,
            BinaryOp::Add | BinaryOp::Sub => 2,
            BinaryOp::Mul | BinaryOp::Div => 3,
            BinaryOp::Pow => 4,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Sum,
    Average,
    Min,
    Max,
    Count,
    If,
    Abs,
    Round,
}

impl Function {
    pub const ALL: [Function; 8] = [
        Function::Sum,
        Function::Average,
        Function::Min,
        Function::Max,
        Function::Count,
        Function::If,
        Function::Abs,
        Function::Round,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Sum => "SUM",
            Function::Average => "AVERAGE",
            Function::Min => "MIN",
            Function::Max => "MAX",
            Function::Count => "COUNT",
            Function::If => "IF",
            Function::Abs => "ABS",
            Function::Round => "ROUND",
        }
    }

    pub fn lookup(name: &str) -> Option<Function> {
        Function::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn is_aggregate(self) -> bool {
        matches!(
            self,
            Function::Sum | Function::Average | Function::Min | Function::Max | Function::Count
        )
    }

    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            Function::If => n == 3,
            Function::Round => n == 2,
            Function::Abs => n == 1,
            _ => n >= 1,
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parsed formula tree.
///
/// Number literals produced by the parser are never negative; a leading
/// minus always parses as [`Expr::Unary`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Bool(bool),
    Ref(CellRef),
    Range(RangeRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(inner))
    }

    /// Every referenced cell, ranges expanded, deduplicated, row-major order.
    pub fn referenced_cells(&self) -> BTreeSet<CellAddress> {
        let mut out = BTreeSet::new();
        self.visit_refs(&mut |r| match r {
            RefNode::Cell(c) => {
                out.insert(c.addr);
            }
            RefNode::Range(range) => out.extend(range.cells()),
        });
        out
    }

    /// Calls `f` on every reference node in evaluation (left-to-right) order.
    pub fn visit_refs(&self, f: &mut impl FnMut(RefNode)) {
        match self {
            Expr::Number(_) | Expr::Text(_) | Expr::Bool(_) => {}
            Expr::Ref(c) => f(RefNode::Cell(*c)),
            Expr::Range(r) => f(RefNode::Range(*r)),
            Expr::Unary(_, e) => e.visit_refs(f),
            Expr::Binary(_, a, b) => {
                a.visit_refs(f);
                b.visit_refs(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_refs(f)),
        }
    }

    /// Fill semantics: shifts every relative reference component.
    /// `None` if any shifted reference leaves the sheet.
    pub fn translate(&self, dcol: i64, drow: i64) -> Option<Expr> {
        Some(match self {
            Expr::Number(_) | Expr::Text(_) | Expr::Bool(_) => self.clone(),
            Expr::Ref(c) => Expr::Ref(c.translate(dcol, drow)?),
            Expr::Range(r) => Expr::Range(r.translate(dcol, drow)?),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.translate(dcol, drow)?)),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.translate(dcol, drow)?),
                Box::new(b.translate(dcol, drow)?),
            ),
            Expr::Call(func, args) => Expr::Call(
                *func,
                args.iter()
                    .map(|a| a.translate(dcol, drow))
                    .collect::<Option<Vec<_>>>()?,
            ),
        })
    }

    pub fn contains_aggregate(&self) -> bool {
        match self {
            Expr::Call(func, args) => {
                func.is_aggregate() || args.iter().any(Expr::contains_aggregate)
            }
            Expr::Unary(_, e) => e.contains_aggregate(),
            Expr::Binary(_, a, b) => a.contains_aggregate() || b.contains_aggregate(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RefNode {
    Cell(CellRef),
    Range(RangeRef),
}
