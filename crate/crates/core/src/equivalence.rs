//! Copy-equivalence classes, rectangular copy blocks and the
//! range-completeness check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Serialize, Serializer};

use crate::address::{column_name, CellAddress};
use crate::formula::{normalize_r1c1, print_formula, Expr, RangeRef};
use crate::workbook::Workbook;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquivalenceClass {
    pub normalized: String,
    /// Sorted row-major, never empty.
    pub members: Vec<CellAddress>,
}

impl EquivalenceClass {
    pub fn first(&self) -> CellAddress {
        self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Rows `r1..=r2` (at least two) by columns `c1..=c2`; each column is one
/// class over the whole row span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyBlock {
    pub rows: (u32, u32),
    pub cols: (u16, u16),
    /// Normalized text per column, left to right.
    pub classes: Vec<String>,
}

impl CopyBlock {
    pub fn height(&self) -> u32 {
        self.rows.1 - self.rows.0 + 1
    }

    pub fn contains(&self, addr: CellAddress) -> bool {
        (self.rows.0..=self.rows.1).contains(&addr.row())
            && (self.cols.0..=self.cols.1).contains(&addr.col())
    }

    pub fn row_cells(&self, row: u32) -> impl Iterator<Item = CellAddress> {
        (self.cols.0..=self.cols.1).map(move |c| CellAddress::new(c, row).expect("in bounds"))
    }
}

impl Serialize for CopyBlock {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc<'a> {
            rows: [u32; 2],
            cols: [String; 2],
            classes: &'a [String],
        }
        Doc {
            rows: [self.rows.0, self.rows.1],
            cols: [column_name(self.cols.0), column_name(self.cols.1)],
            classes: &self.classes,
        }
        .serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeSmell {
    pub aggregate: CellAddress,
    pub range: RangeRef,
    pub omitted: BTreeSet<CellAddress>,
    pub block: CopyBlock,
}

impl Serialize for RangeSmell {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc<'a> {
            aggregate: CellAddress,
            range: String,
            omitted: &'a BTreeSet<CellAddress>,
            block: &'a CopyBlock,
        }
        Doc {
            aggregate: self.aggregate,
            range: range_text(&self.range),
            omitted: &self.omitted,
            block: &self.block,
        }
        .serialize(serializer)
    }
}

/// A1 text of a range without the leading `=`.
pub fn range_text(range: &RangeRef) -> String {
    print_formula(&Expr::Range(*range))[1..].to_string()
}

/// Partition of the formula cells by normalized text, sorted by first
/// member.
pub fn compute_classes(wb: &Workbook) -> Vec<EquivalenceClass> {
    let mut by_text: BTreeMap<String, Vec<CellAddress>> = BTreeMap::new();
    for (addr, f) in wb.formulas() {
        by_text
            .entry(normalize_r1c1(f.expr(), addr))
            .or_default()
            .push(addr);
    }
    let mut classes: Vec<EquivalenceClass> = by_text
        .into_iter()
        .map(|(normalized, members)| EquivalenceClass {
            normalized,
            members,
        })
        .collect();
    classes.sort_by_key(|c| c.first());
    classes
}

/// Maximal vertical runs of at least two cells per column, with runs of
/// adjacent columns merged when their row extents are identical.
pub fn detect_blocks(classes: &[EquivalenceClass]) -> Vec<CopyBlock> {
    // (col, row) -> class index
    let mut grid: BTreeMap<(u16, u32), usize> = BTreeMap::new();
    for (i, class) in classes.iter().enumerate() {
        for m in &class.members {
            grid.insert((m.col(), m.row()), i);
        }
    }

    // Runs keyed by extent, then column.
    let mut runs: BTreeMap<(u32, u32), BTreeMap<u16, usize>> = BTreeMap::new();
    let mut current: Option<(u16, u32, u32, usize)> = None;
    let mut flush = |run: Option<(u16, u32, u32, usize)>| {
        if let Some((col, r1, r2, class)) = run {
            if r2 > r1 {
                runs.entry((r1, r2)).or_default().insert(col, class);
            }
        }
    };
    for (&(col, row), &class) in &grid {
        current = match current {
            Some((c, r1, r2, k)) if c == col && r2 + 1 == row && k == class => {
                Some((c, r1, row, k))
            }
            other => {
                flush(other);
                Some((col, row, row, class))
            }
        };
    }
    flush(current);

    let mut blocks = Vec::new();
    for ((r1, r2), cols) in runs {
        let mut pending: Option<CopyBlock> = None;
        for (col, class) in cols {
            let text = classes[class].normalized.clone();
            match &mut pending {
                Some(b) if b.cols.1 + 1 == col => {
                    b.cols.1 = col;
                    b.classes.push(text);
                }
                _ => {
                    blocks.extend(pending.take());
                    pending = Some(CopyBlock {
                        rows: (r1, r2),
                        cols: (col, col),
                        classes: vec![text],
                    });
                }
            }
        }
        blocks.extend(pending);
    }
    blocks.sort_by_key(|b| (b.rows.0, b.cols.0));
    blocks
}

/// Aggregate ranges that cover at least two but not all rows of a block
/// column they overlap. Omitted cells are reported for every overlapped
/// column.
pub fn check_range_completeness(wb: &Workbook, blocks: &[CopyBlock]) -> Vec<RangeSmell> {
    let mut smells = Vec::new();
    for (addr, f) in wb.formulas() {
        let mut ranges = Vec::new();
        aggregate_ranges(f.expr(), &mut ranges);
        for range in ranges {
            for block in blocks {
                let (c1, c2) = (
                    range.start().addr.col().max(block.cols.0),
                    range.end().addr.col().min(block.cols.1),
                );
                let (r1, r2) = (
                    range.start().addr.row().max(block.rows.0),
                    range.end().addr.row().min(block.rows.1),
                );
                if c1 > c2 || r1 > r2 {
                    continue;
                }
                let covered = r2 - r1 + 1;
                if covered < 2 || covered == block.height() {
                    continue;
                }
                let omitted: BTreeSet<CellAddress> = (block.rows.0..=block.rows.1)
                    .filter(|r| !(r1..=r2).contains(r))
                    .flat_map(|r| (c1..=c2).map(move |c| CellAddress::new(c, r).expect("in bounds")))
                    .collect();
                smells.push(RangeSmell {
                    aggregate: addr,
                    range,
                    omitted,
                    block: block.clone(),
                });
            }
        }
    }
    smells
}

/// Range arguments of every aggregate call in `expr`, outermost first.
fn aggregate_ranges(expr: &Expr, out: &mut Vec<RangeRef>) {
    match expr {
        Expr::Call(func, args) => {
            for arg in args {
                if let (true, Expr::Range(r)) = (func.is_aggregate(), arg) {
                    out.push(*r);
                } else {
                    aggregate_ranges(arg, out);
                }
            }
        }
        Expr::Unary(_, e) => aggregate_ranges(e, out),
        Expr::Binary(_, a, b) => {
            aggregate_ranges(a, out);
            aggregate_ranges(b, out);
        }
        _ => {}
    }
}
