//! Seeded generator for the monthly-sales workbook family, optionally with
//! one injected fault.
//!
//! Layout for `rows = n` (the canonical fixture has `n = 12`):
//!
//! | cells            | content                                   |
//! |------------------|-------------------------------------------|
//! | row 1            | text headers                              |
//! | A2..A(n+1)       | month labels                              |
//! | B, C, D          | units, price, cost rate (inputs)          |
//! | E                | `=B*C` gross                              |
//! | F                | `=E*D` cost                               |
//! | G                | `=E-F` margin                             |
//! | H                | `=G*(1-$B$tax)` net                       |
//! | B(n+3)           | tax rate                                  |
//! | B(n+4)           | markup                                    |
//! | B..E(n+5)        | `=SUM(H)`, `=B*$B$markup`, `=C-B`, `=D/12` |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::address::CellAddress;
use crate::formula::{parse_formula, print_formula, BinaryOp, Expr, RangeRef};
use crate::rng::SplitMix64;
use crate::value::Value;
use crate::workbook::{CellContent, Formula, Workbook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    OperatorSwap,
    RangeOffByOne,
    ReferenceShift,
    ConstantPerturb,
    #[default]
    None,
}

impl FaultKind {
    pub const INJECTED: [FaultKind; 4] = [
        FaultKind::OperatorSwap,
        FaultKind::RangeOffByOne,
        FaultKind::ReferenceShift,
        FaultKind::ConstantPerturb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultKind::OperatorSwap => "operator-swap",
            FaultKind::RangeOffByOne => "range-off-by-one",
            FaultKind::ReferenceShift => "reference-shift",
            FaultKind::ConstantPerturb => "constant-perturb",
            FaultKind::None => "none",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultKind::INJECTED
            .into_iter()
            .chain([FaultKind::None])
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown fault kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub rows: u32,
    pub seed: u64,
    pub fault: FaultKind,
    /// Draw the input columns and parameters from the seed instead of using
    /// the canonical constants.
    #[serde(default)]
    pub random_inputs: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            rows: 12,
            seed: 0,
            fault: FaultKind::None,
            random_inputs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub cell: CellAddress,
    pub kind: FaultKind,
    pub original: String,
    pub mutated: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub workbook: Workbook,
    pub ground_truth: Option<GroundTruth>,
}

/// Row holding the tax-rate parameter for a sheet with `rows` data rows.
pub fn tax_row(rows: u32) -> u32 {
    rows + 3
}

pub fn markup_row(rows: u32) -> u32 {
    rows + 4
}

pub fn summary_row(rows: u32) -> u32 {
    rows + 5
}

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

fn at(col: u16, row: u32) -> CellAddress {
    CellAddress::new(col, row).expect("corpus layout in bounds")
}

/// The canonical 12-row fixture without faults.
pub fn fixture() -> Workbook {
    generate_corpus(&CorpusSpec::default()).workbook
}

pub fn generate_corpus(spec: &CorpusSpec) -> Corpus {
    assert!(spec.rows >= 2, "corpus needs at least two data rows");
    assert!(spec.rows + 5 <= crate::address::MAX_ROW, "too many rows");
    let mut rng = SplitMix64::new(spec.seed);
    let n = spec.rows;
    let last = n + 1;
    let tax = tax_row(n);
    let markup = markup_row(n);
    let summary = summary_row(n);

    let mut wb = Workbook::new("Monthly sales");
    let text = |s: &str| CellContent::Literal(Value::Text(s.to_string()));
    let num = |x: f64| CellContent::Literal(Value::Number(x));
    for (i, header) in ["Month", "Units", "Price", "Cost rate", "Gross", "Cost", "Margin", "Net"]
        .iter()
        .enumerate()
    {
        wb.set(at(i as u16 + 1, 1), text(header));
    }

    for row in 2..=last {
        let label = MONTHS
            .get((row - 2) as usize)
            .map(|m| m.to_string())
            .unwrap_or_else(|| format!("M{}", row - 1));
        wb.set(at(1, row), text(&label));
        let (units, price, cost_rate) = if spec.random_inputs {
            (
                (rng.below(500) + 1) as f64,
                (rng.below(400) + 1) as f64 / 4.0,
                rng.below(50) as f64 / 100.0,
            )
        } else {
            (100.0, 10.0, 0.1)
        };
        wb.set(at(2, row), num(units));
        wb.set(at(3, row), num(price));
        wb.set(at(4, row), num(cost_rate));
        let formulas = [
            format!("=B{row}*C{row}"),
            format!("=E{row}*D{row}"),
            format!("=E{row}-F{row}"),
            format!("=G{row}*(1-$B${tax})"),
        ];
        for (i, f) in formulas.iter().enumerate() {
            wb.set_formula(at(5 + i as u16, row), f).expect("generated formula parses");
        }
    }

    let (tax_rate, markup_rate) = if spec.random_inputs {
        (rng.below(50) as f64 / 100.0, 1.0 + rng.below(50) as f64 / 100.0)
    } else {
        (0.2, 1.05)
    };
    wb.set(at(1, tax), text("Tax rate"));
    wb.set(at(2, tax), num(tax_rate));
    wb.set(at(1, markup), text("Markup"));
    wb.set(at(2, markup), num(markup_rate));
    wb.set(at(1, summary), text("Totals"));
    let summary_formulas = [
        format!("=SUM(H2:H{last})"),
        format!("=B{summary}*$B${markup}"),
        format!("=C{summary}-B{summary}"),
        format!("=D{summary}/12"),
    ];
    for (i, f) in summary_formulas.iter().enumerate() {
        wb.set_formula(at(2 + i as u16, summary), f).expect("generated formula parses");
    }

    let ground_truth = match spec.fault {
        FaultKind::None => None,
        kind => inject(&mut wb, kind, &mut rng),
    };
    Corpus {
        workbook: wb,
        ground_truth,
    }
}

/// Pre-order walk handing out mutable nodes.
fn walk_mut(expr: &mut Expr, f: &mut impl FnMut(&mut Expr)) {
    f(expr);
    match expr {
        Expr::Unary(_, e) => walk_mut(e, f),
        Expr::Binary(_, a, b) => {
            walk_mut(a, f);
            walk_mut(b, f);
        }
        Expr::Call(_, args) => args.iter_mut().for_each(|a| walk_mut(a, f)),
        _ => {}
    }
}

fn count_sites(expr: &Expr, kind: FaultKind) -> usize {
    let mut copy = expr.clone();
    let mut n = 0;
    walk_mut(&mut copy, &mut |node| {
        if site_matches(node, kind) {
            n += 1;
        }
    });
    n
}

fn site_matches(node: &Expr, kind: FaultKind) -> bool {
    match kind {
        FaultKind::OperatorSwap => matches!(
            node,
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div, _, _)
        ),
        FaultKind::RangeOffByOne => match node {
            Expr::Call(func, args) if func.is_aggregate() => args
                .iter()
                .any(|a| matches!(a, Expr::Range(r) if r.len() >= 2)),
            _ => false,
        },
        FaultKind::ReferenceShift => match node {
            Expr::Ref(r) => !r.col_absolute,
            Expr::Range(r) => !r.start().col_absolute || !r.end().col_absolute,
            _ => false,
        },
        FaultKind::ConstantPerturb => matches!(node, Expr::Number(n) if *n != 0.0),
        FaultKind::None => false,
    }
}

fn mutate_site(node: &mut Expr, kind: FaultKind) {
    match (kind, node) {
        (FaultKind::OperatorSwap, Expr::Binary(op, _, _)) => {
            *op = match *op {
                BinaryOp::Add => BinaryOp::Sub,
                BinaryOp::Sub => BinaryOp::Add,
                BinaryOp::Mul => BinaryOp::Div,
                BinaryOp::Div => BinaryOp::Mul,
                other => other,
            };
        }
        (FaultKind::RangeOffByOne, Expr::Call(_, args)) => {
            let range = args
                .iter_mut()
                .rev()
                .find_map(|a| match a {
                    Expr::Range(r) if r.len() >= 2 => Some(r),
                    _ => None,
                })
                .expect("eligible range");
            let (start, mut end) = (range.start(), range.end());
            if end.addr.row() > start.addr.row() {
                end.addr = end.addr.offset(0, -1).expect("in bounds");
            } else {
                end.addr = end.addr.offset(-1, 0).expect("in bounds");
            }
            *range = RangeRef::new(start, end);
        }
        (FaultKind::ReferenceShift, node @ (Expr::Ref(_) | Expr::Range(_))) => {
            let leftmost = match node {
                Expr::Ref(r) => r.addr.col(),
                Expr::Range(r) => r.start().addr.col().min(r.end().addr.col()),
                _ => unreachable!(),
            };
            let dcol = if leftmost > 1 { -1 } else { 1 };
            *node = node.translate(dcol, 0).expect("shift stays in bounds");
        }
        (FaultKind::ConstantPerturb, Expr::Number(n)) => *n *= 1.1,
        _ => unreachable!("site mismatch"),
    }
}

fn inject(wb: &mut Workbook, kind: FaultKind, rng: &mut SplitMix64) -> Option<GroundTruth> {
    let eligible: Vec<(CellAddress, Formula)> = wb
        .formulas()
        .filter(|(_, f)| count_sites(f.expr(), kind) > 0)
        .map(|(a, f)| (a, f.clone()))
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let (cell, formula) = &eligible[rng.below(eligible.len())];
    let sites = count_sites(formula.expr(), kind);
    let target = rng.below(sites);
    let mut expr = formula.expr().clone();
    let mut seen = 0;
    walk_mut(&mut expr, &mut |node| {
        if site_matches(node, kind) {
            if seen == target {
                mutate_site(node, kind);
            }
            seen += 1;
        }
    });
    let mutated = print_formula(&expr);
    debug_assert!(parse_formula(&mutated).is_ok());
    wb.set(*cell, CellContent::Formula(Formula::from_expr(expr)));
    Some(GroundTruth {
        cell: *cell,
        kind,
        original: formula.text().to_string(),
        mutated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address::parse_address;
    use crate::eval::evaluate;
    use std::collections::BTreeMap;

    fn a(s: &str) -> CellAddress {
        parse_address(s).unwrap()
    }

    #[test]
    fn canonical_fixture_values() {
        let wb = fixture();
        assert_eq!(wb.formula(a("H2")).unwrap().text(), "=G2*(1-$B$15)");
        assert_eq!(wb.formula(a("B17")).unwrap().text(), "=SUM(H2:H13)");
        assert_eq!(wb.formula(a("E17")).unwrap().text(), "=D17/12");
        let vm = evaluate(&wb, &BTreeMap::new());
        assert_eq!(vm.get(a("E2")), &Value::Number(1000.0));
        assert_eq!(vm.get(a("H2")), &Value::Number(720.0));
        assert_eq!(vm.get(a("B17")), &Value::Number(8640.0));
        assert_eq!(vm.get(a("E17")), &Value::Number(36.0));
        assert_eq!(wb.formulas().count(), 52);
    }

    #[test]
    fn deterministic() {
        for kind in FaultKind::INJECTED {
            let spec = CorpusSpec {
                seed: 99,
                fault: kind,
                random_inputs: true,
                ..Default::default()
            };
            let x = generate_corpus(&spec);
            let y = generate_corpus(&spec);
            assert_eq!(x.workbook, y.workbook);
            assert_eq!(x.ground_truth, y.ground_truth);
            assert!(x.ground_truth.is_some());
        }
    }

    #[test]
    fn range_off_by_one_targets_the_sum() {
        let c = generate_corpus(&CorpusSpec {
            fault: FaultKind::RangeOffByOne,
            seed: 5,
            ..Default::default()
        });
        let truth = c.ground_truth.unwrap();
        assert_eq!(truth.cell, a("B17"));
        assert_eq!(truth.mutated, "=SUM(H2:H12)");
    }

    #[test]
    fn single_cell_mutation() {
        for seed in 0..40 {
            let c = generate_corpus(&CorpusSpec {
                fault: FaultKind::OperatorSwap,
                seed,
                ..Default::default()
            });
            let base = fixture();
            let truth = c.ground_truth.unwrap();
            let changed: Vec<CellAddress> = base
                .cells()
                .filter(|(addr, content)| c.workbook.get(*addr) != *content)
                .map(|(addr, _)| addr)
                .collect();
            assert_eq!(changed, vec![truth.cell]);
            assert_ne!(truth.original, truth.mutated);
        }
    }

    #[test]
    fn fault_kind_names() {
        for kind in FaultKind::INJECTED.into_iter().chain([FaultKind::None]) {
            assert_eq!(kind.name().parse::<FaultKind>().unwrap(), kind);
            assert_eq!(serde_json::to_string(&kind).unwrap(), format!("\"{}\"", kind.name()));
        }
    }
}
