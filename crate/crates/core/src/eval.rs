//! Workbook evaluation.
//!
//! Coercions: Blank is 0 and booleans are 1/0 in arithmetic, text in
//! arithmetic is `#VALUE`. Aggregates skip text, blanks and booleans found
//! in ranges (a bare reference argument counts as a one-cell range).
//! `AVERAGE` of nothing is `#DIV0`. `IF` accepts booleans or numbers
//! (nonzero is true) and is eager: an error in either branch propagates.
//! `ROUND` rounds half away from zero. Comparisons are numeric, or
//! case-insensitive between two texts; text against anything else is
//! `#VALUE`. A formula that yields Blank stores 0.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::address::CellAddress;
use crate::formula::{BinaryOp, Expr, Function, RangeRef, UnaryOp};
use crate::graph::{DependencyGraph, TieBreak};
use crate::value::{ErrorKind, Value};
use crate::workbook::{CellContent, Workbook};

static BLANK: Value = Value::Blank;

/// Result of an evaluation: a value for every graph node plus metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueMap {
    values: BTreeMap<CellAddress, Value>,
    order: Vec<CellAddress>,
    cycles: BTreeSet<CellAddress>,
}

impl ValueMap {
    /// The value at `addr`; Blank for cells outside the graph.
    pub fn get(&self, addr: CellAddress) -> &Value {
        self.values.get(&addr).unwrap_or(&BLANK)
    }

    pub fn values(&self) -> &BTreeMap<CellAddress, Value> {
        &self.values
    }

    /// The topological order that was used.
    pub fn order(&self) -> &[CellAddress] {
        &self.order
    }

    pub fn cycles(&self) -> &BTreeSet<CellAddress> {
        &self.cycles
    }
}

#[derive(Debug, Clone)]
enum Step {
    Override,
    Literal(Value),
    Formula(Expr),
}

/// A precomputed evaluation plan for a fixed set of overridden cells and
/// formula rewrites; [`Evaluator::run`] can then be called with many
/// different override values.
#[derive(Debug, Clone)]
pub struct Evaluator {
    steps: Vec<(CellAddress, Step)>,
    cycles: BTreeSet<CellAddress>,
}

impl Evaluator {
    pub fn new(
        wb: &Workbook,
        overridden: &BTreeSet<CellAddress>,
        rewrites: &BTreeMap<CellAddress, Expr>,
        tie: TieBreak,
    ) -> Self {
        let exprs: BTreeMap<CellAddress, &Expr> = wb
            .formulas()
            .filter(|(a, _)| !overridden.contains(a))
            .map(|(a, f)| (a, rewrites.get(&a).unwrap_or(f.expr())))
            .collect();
        let graph = DependencyGraph::from_formulas(
            wb.cells().map(|(a, _)| a).chain(overridden.iter().copied()),
            exprs.iter().map(|(a, e)| (*a, *e)),
        );
        let topo = graph.topo_order_with(tie);
        let steps = topo
            .order
            .iter()
            .map(|&addr| {
                let step = if overridden.contains(&addr) {
                    Step::Override
                } else if let Some(expr) = exprs.get(&addr) {
                    Step::Formula((*expr).clone())
                } else {
                    match wb.get(addr) {
                        CellContent::Literal(v) => Step::Literal(v.clone()),
                        _ => Step::Literal(Value::Blank),
                    }
                };
                (addr, step)
            })
            .collect();
        Evaluator {
            steps,
            cycles: topo.cycles,
        }
    }

    /// Drops every step that cannot influence `targets`.
    pub fn restricted_to(mut self, targets: &BTreeSet<CellAddress>) -> Self {
        let mut needed: BTreeSet<CellAddress> = targets.clone();
        let mut queue: VecDeque<CellAddress> = targets.iter().copied().collect();
        let by_addr: BTreeMap<CellAddress, &Step> =
            self.steps.iter().map(|(a, s)| (*a, s)).collect();
        while let Some(c) = queue.pop_front() {
            if let Some(Step::Formula(expr)) = by_addr.get(&c) {
                for p in expr.referenced_cells() {
                    if needed.insert(p) {
                        queue.push_back(p);
                    }
                }
            }
        }
        self.steps.retain(|(a, _)| needed.contains(a));
        self.cycles.retain(|a| needed.contains(a));
        self
    }

    pub fn run(&self, overrides: &BTreeMap<CellAddress, Value>) -> ValueMap {
        let mut values: BTreeMap<CellAddress, Value> = self
            .cycles
            .iter()
            .map(|a| (*a, Value::Error(ErrorKind::Cycle)))
            .collect();
        for (addr, step) in &self.steps {
            let v = match step {
                Step::Override => overrides.get(addr).cloned().unwrap_or(Value::Blank),
                Step::Literal(v) => v.clone(),
                Step::Formula(expr) => match eval_expr(expr, &values) {
                    Value::Blank => Value::Number(0.0),
                    v => v,
                },
            };
            values.insert(*addr, v);
        }
        ValueMap {
            values,
            order: self.steps.iter().map(|(a, _)| *a).collect(),
            cycles: self.cycles.clone(),
        }
    }
}

/// Evaluates the whole workbook; overridden cells take the given value
/// whatever their content.
pub fn evaluate(wb: &Workbook, overrides: &BTreeMap<CellAddress, Value>) -> ValueMap {
    evaluate_with(wb, overrides, &BTreeMap::new())
}

/// Like [`evaluate`], with some formulas replaced for this run only.
pub fn evaluate_with(
    wb: &Workbook,
    overrides: &BTreeMap<CellAddress, Value>,
    rewrites: &BTreeMap<CellAddress, Expr>,
) -> ValueMap {
    let keys = overrides.keys().copied().collect();
    Evaluator::new(wb, &keys, rewrites, TieBreak::Ascending).run(overrides)
}

fn lookup(values: &BTreeMap<CellAddress, Value>, addr: CellAddress) -> &Value {
    values.get(&addr).unwrap_or(&BLANK)
}

fn to_number(v: &Value) -> Result<f64, ErrorKind> {
    match v {
        Value::Number(n) => Ok(*n),
        Value::Boolean(b) => Ok(if *b { 1.0 } else { 0.0 }),
        Value::Blank => Ok(0.0),
        Value::Text(_) => Err(ErrorKind::Value),
        Value::Error(kind) => Err(*kind),
    }
}

/// Evaluates one expression against already-computed cell values.
pub fn eval_expr(expr: &Expr, values: &BTreeMap<CellAddress, Value>) -> Value {
    match expr {
        Expr::Number(n) => Value::Number(*n),
        Expr::Text(t) => Value::Text(t.clone()),
        Expr::Bool(b) => Value::Boolean(*b),
        Expr::Ref(r) => lookup(values, r.addr).clone(),
        Expr::Range(_) => Value::Error(ErrorKind::Value),
        Expr::Unary(UnaryOp::Neg, inner) => match to_number(&eval_expr(inner, values)) {
            Ok(n) => Value::number(-n),
            Err(kind) => Value::Error(kind),
        },
        Expr::Binary(op, lhs, rhs) => {
            let l = eval_expr(lhs, values);
            let r = eval_expr(rhs, values);
            if op.is_comparison() {
                compare(*op, &l, &r)
            } else {
                arithmetic(*op, &l, &r)
            }
        }
        Expr::Call(func, args) => call(*func, args, values),
    }
}

fn arithmetic(op: BinaryOp, l: &Value, r: &Value) -> Value {
    let (a, b) = match (to_number(l), to_number(r)) {
        (Err(kind), _) | (_, Err(kind)) => return Value::Error(kind),
        (Ok(a), Ok(b)) => (a, b),
    };
    match op {
        BinaryOp::Add => Value::number(a + b),
        BinaryOp::Sub => Value::number(a - b),
        BinaryOp::Mul => Value::number(a * b),
        BinaryOp::Div if b == 0.0 => Value::Error(ErrorKind::Div0),
        BinaryOp::Div => Value::number(a / b),
        BinaryOp::Pow if a == 0.0 && b < 0.0 => Value::Error(ErrorKind::Div0),
        BinaryOp::Pow => Value::number(a.powf(b)),
        _ => unreachable!("comparison handled by caller"),
    }
}

fn compare(op: BinaryOp, l: &Value, r: &Value) -> Value {
    if let Value::Error(kind) = l {
        return Value::Error(*kind);
    }
    if let Value::Error(kind) = r {
        return Value::Error(*kind);
    }
    let ord = match (l, r) {
        (Value::Text(a), Value::Text(b)) => a.to_lowercase().cmp(&b.to_lowercase()),
        (Value::Text(_), _) | (_, Value::Text(_)) => return Value::Error(ErrorKind::Value),
        _ => {
            let a = to_number(l).expect("numeric");
            let b = to_number(r).expect("numeric");
            a.partial_cmp(&b).expect("finite")
        }
    };
    let result = match op {
        BinaryOp::Eq => ord == Ordering::Equal,
        BinaryOp::Ne => ord != Ordering::Equal,
        BinaryOp::Lt => ord == Ordering::Less,
        BinaryOp::Le => ord != Ordering::Greater,
        BinaryOp::Gt => ord == Ordering::Greater,
        BinaryOp::Ge => ord != Ordering::Less,
        _ => unreachable!("arithmetic handled by caller"),
    };
    Value::Boolean(result)
}

/// Numbers an aggregate sees, in argument order.
fn collect_numbers(
    func: Function,
    args: &[Expr],
    values: &BTreeMap<CellAddress, Value>,
) -> Result<Vec<f64>, ErrorKind> {
    let mut out = Vec::new();
    let from_range = |range: RangeRef, out: &mut Vec<f64>| -> Result<(), ErrorKind> {
        for cell in range.cells() {
            match lookup(values, cell) {
                Value::Number(n) => out.push(*n),
                Value::Error(kind) => return Err(*kind),
                Value::Text(_) | Value::Blank | Value::Boolean(_) => {}
            }
        }
        Ok(())
    };
    for arg in args {
        match arg {
            Expr::Range(range) => from_range(*range, &mut out)?,
            Expr::Ref(r) => from_range(RangeRef::new(*r, *r), &mut out)?,
            other => match eval_expr(other, values) {
                Value::Error(kind) => return Err(kind),
                Value::Text(_) if func == Function::Count => {}
                v => out.push(to_number(&v)?),
            },
        }
    }
    Ok(out)
}

fn call(func: Function, args: &[Expr], values: &BTreeMap<CellAddress, Value>) -> Value {
    if func.is_aggregate() {
        let nums = match collect_numbers(func, args, values) {
            Ok(nums) => nums,
            Err(kind) => return Value::Error(kind),
        };
        return match func {
            Function::Sum => Value::number(nums.iter().fold(0.0, |acc, n| acc + n)),
            Function::Count => Value::Number(nums.len() as f64),
            Function::Average if nums.is_empty() => Value::Error(ErrorKind::Div0),
            Function::Average => {
                Value::number(nums.iter().fold(0.0, |acc, n| acc + n) / nums.len() as f64)
            }
            Function::Min => Value::Number(nums.iter().copied().reduce(f64::min).unwrap_or(0.0)),
            Function::Max => Value::Number(nums.iter().copied().reduce(f64::max).unwrap_or(0.0)),
            _ => unreachable!(),
        };
    }
    let evaluated: Vec<Value> = args.iter().map(|a| eval_expr(a, values)).collect();
    match func {
        Function::If => {
            let cond = match &evaluated[0] {
                Value::Error(kind) => return Value::Error(*kind),
                Value::Text(_) => return Value::Error(ErrorKind::Value),
                v => to_number(v).expect("numeric") != 0.0,
            };
            if let Some(kind) = evaluated[1].error().or(evaluated[2].error()) {
                return Value::Error(kind);
            }
            if cond {
                evaluated[1].clone()
            } else {
                evaluated[2].clone()
            }
        }
        Function::Abs => match to_number(&evaluated[0]) {
            Ok(n) => Value::Number(n.abs()),
            Err(kind) => Value::Error(kind),
        },
        Function::Round => match (to_number(&evaluated[0]), to_number(&evaluated[1])) {
            (Err(kind), _) | (_, Err(kind)) => Value::Error(kind),
            (Ok(x), Ok(digits)) => Value::number(round_half_away(x, digits)),
        },
        _ => unreachable!("aggregates handled above"),
    }
}

/// `ROUND` semantics; `digits` is truncated toward zero.
pub fn round_half_away(x: f64, digits: f64) -> f64 {
    let d = digits.trunc().clamp(-308.0, 308.0) as i32;
    if d >= 0 {
        let f = 10f64.powi(d);
        let scaled = x * f;
        if !scaled.is_finite() {
            return x;
        }
        scaled.round() / f
    } else {
        let f = 10f64.powi(-d);
        (x / f).round() * f
    }
}
