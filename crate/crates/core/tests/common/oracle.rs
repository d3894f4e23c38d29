//! A deliberately naive interpreter: every cell is evaluated by recursion on
//! demand, with memoization, and no dependency graph or ordering.

use std::collections::{BTreeMap, BTreeSet};

use sheetfrag::formula::{BinaryOp, Expr, Function, UnaryOp};
use sheetfrag::{CellAddress, CellContent, ErrorKind, Value, Workbook};

pub fn evaluate_all(wb: &Workbook) -> BTreeMap<CellAddress, Value> {
    let mut naive = Naive {
        wb,
        memo: BTreeMap::new(),
        active: BTreeSet::new(),
    };
    wb.formulas().map(|(a, _)| (a, naive.cell(a))).collect()
}

struct Naive<'a> {
    wb: &'a Workbook,
    memo: BTreeMap<CellAddress, Value>,
    active: BTreeSet<CellAddress>,
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(x)
    } else {
        Value::Error(ErrorKind::Value)
    }
}

fn num(v: &Value) -> Result<f64, ErrorKind> {
    match v {
        Value::Number(n) => Ok(*n),
        Value::Boolean(true) => Ok(1.0),
        Value::Boolean(false) | Value::Blank => Ok(0.0),
        Value::Text(_) => Err(ErrorKind::Value),
        Value::Error(k) => Err(*k),
    }
}

impl Naive<'_> {
    fn cell(&mut self, addr: CellAddress) -> Value {
        let formula = match self.wb.get(addr) {
            CellContent::Literal(v) => return v.clone(),
            CellContent::Blank => return Value::Blank,
            CellContent::Formula(f) => f.expr().clone(),
        };
        if let Some(v) = self.memo.get(&addr) {
            return v.clone();
        }
        if !self.active.insert(addr) {
            return Value::Error(ErrorKind::Cycle);
        }
        let v = match self.expr(&formula) {
            Value::Blank => Value::Number(0.0),
            v => v,
        };
        self.active.remove(&addr);
        self.memo.insert(addr, v.clone());
        v
    }

    fn expr(&mut self, e: &Expr) -> Value {
        match e {
            Expr::Number(n) => Value::Number(*n),
            Expr::Text(t) => Value::Text(t.clone()),
            Expr::Bool(b) => Value::Boolean(*b),
            Expr::Ref(r) => self.cell(r.addr),
            Expr::Range(_) => Value::Error(ErrorKind::Value),
            Expr::Unary(UnaryOp::Neg, inner) => match num(&self.expr(inner)) {
                Ok(x) => finite(-x),
                Err(k) => Value::Error(k),
            },
            Expr::Binary(op, l, r) => {
                let l = self.expr(l);
                let r = self.expr(r);
                binary(*op, &l, &r)
            }
            Expr::Call(f, args) => self.call(*f, args),
        }
    }

    fn call(&mut self, f: Function, args: &[Expr]) -> Value {
        match f {
            Function::Sum | Function::Average | Function::Min | Function::Max | Function::Count => {
                let mut xs = Vec::new();
                for arg in args {
                    let cells: Vec<CellAddress> = match arg {
                        Expr::Range(r) => r.cells().collect(),
                        Expr::Ref(r) => vec![r.addr],
                        other => {
                            match self.expr(other) {
                                Value::Error(k) => return Value::Error(k),
                                Value::Text(_) if f == Function::Count => {}
                                v => match num(&v) {
                                    Ok(x) => xs.push(x),
                                    Err(k) => return Value::Error(k),
                                },
                            }
                            continue;
                        }
                    };
                    for c in cells {
                        match self.cell(c) {
                            Value::Number(x) => xs.push(x),
                            Value::Error(k) => return Value::Error(k),
                            _ => {}
                        }
                    }
                }
                let mut total = 0.0;
                for x in &xs {
                    total += x;
                }
                match f {
                    Function::Sum => finite(total),
                    Function::Count => Value::Number(xs.len() as f64),
                    Function::Average if xs.is_empty() => Value::Error(ErrorKind::Div0),
                    Function::Average => finite(total / xs.len() as f64),
                    _ if xs.is_empty() => Value::Number(0.0),
                    Function::Min => Value::Number(xs.iter().copied().fold(f64::INFINITY, f64::min)),
                    _ => Value::Number(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                }
            }
            Function::If => {
                let vs: Vec<Value> = args.iter().map(|a| self.expr(a)).collect();
                let cond = match &vs[0] {
                    Value::Error(k) => return Value::Error(*k),
                    Value::Text(_) => return Value::Error(ErrorKind::Value),
                    v => num(v).unwrap() != 0.0,
                };
                for v in &vs[1..] {
                    if let Value::Error(k) = v {
                        return Value::Error(*k);
                    }
                }
                if cond {
                    vs[1].clone()
                } else {
                    vs[2].clone()
                }
            }
            Function::Abs => match num(&self.expr(&args[0])) {
                Ok(x) => Value::Number(x.abs()),
                Err(k) => Value::Error(k),
            },
            Function::Round => {
                let x = num(&self.expr(&args[0]));
                let d = num(&self.expr(&args[1]));
                match (x, d) {
                    (Err(k), _) | (_, Err(k)) => Value::Error(k),
                    (Ok(x), Ok(d)) => finite(round(x, d)),
                }
            }
        }
    }
}

fn round(x: f64, digits: f64) -> f64 {
    let d = digits.trunc().clamp(-308.0, 308.0) as i32;
    if d >= 0 {
        let scale = 10f64.powi(d);
        let y = x * scale;
        if y.is_finite() {
            y.round() / scale
        } else {
            x
        }
    } else {
        let scale = 10f64.powi(-d);
        (x / scale).round() * scale
    }
}

fn binary(op: BinaryOp, l: &Value, r: &Value) -> Value {
    use BinaryOp::*;
    if matches!(op, Eq | Ne | Lt | Le | Gt | Ge) {
        if let Value::Error(k) = l {
            return Value::Error(*k);
        }
        if let Value::Error(k) = r {
            return Value::Error(*k);
        }
        let ord = match (l, r) {
            (Value::Text(a), Value::Text(b)) => a.to_lowercase().cmp(&b.to_lowercase()),
            (Value::Text(_), _) | (_, Value::Text(_)) => return Value::Error(ErrorKind::Value),
            _ => num(l).unwrap().partial_cmp(&num(r).unwrap()).unwrap(),
        };
        use std::cmp::Ordering::*;
        let b = match op {
            Eq => ord == Equal,
            Ne => ord != Equal,
            Lt => ord == Less,
            Le => ord != Greater,
            Gt => ord == Greater,
            _ => ord != Less,
        };
        return Value::Boolean(b);
    }
    let (x, y) = match (num(l), num(r)) {
        (Err(k), _) | (_, Err(k)) => return Value::Error(k),
        (Ok(x), Ok(y)) => (x, y),
    };
    match op {
        Add => finite(x + y),
        Sub => finite(x - y),
        Mul => finite(x * y),
        Div if y == 0.0 => Value::Error(ErrorKind::Div0),
        Div => finite(x / y),
        Pow if x == 0.0 && y < 0.0 => Value::Error(ErrorKind::Div0),
        _ => finite(x.powf(y)),
    }
}
