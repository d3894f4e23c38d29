//! Fragment extraction.
//!
//! * S1 keeps one representative row of a copy block.
//! * S2 keeps one aggregate cell with its class ranges narrowed to `k`
//!   representatives.
//! * S3 walks backward from a suspicious cell, stopping at a depth limit,
//!   at large copy-equivalence classes and at a breadth limit.
//!
//! Fragment ids encode the strategy and its parameters, so an id alone is
//! enough to rebuild the fragment against any workbook version.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::address::{parse_address, CellAddress};
use crate::analysis::Analysis;
use crate::equivalence::CopyBlock;
use crate::formula::{normalize_r1c1, print_formula, CellRef, Expr, RangeRef};
use crate::graph::DependencyGraph;
use crate::workbook::CellContent;

pub const S2_WARNING: &str =
    "range errors such as an omitted cell cannot be detected in this fragment";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FragmentError {
    #[error("copy block {0} has fewer than two rows")]
    DegenerateBlock(String),
    #[error("no copy block {0}")]
    UnknownBlock(String),
    #[error("no copy-equivalent precedent class for {0}")]
    NoQualifyingClass(CellAddress),
    #[error("cell {0} does not hold a formula")]
    NotAFormula(CellAddress),
    #[error("cell {0} lies on a reference cycle")]
    Cyclic(CellAddress),
    #[error("invalid fragment configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown fragment id `{0}`")]
    UnknownFragment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    S1,
    S2,
    S3,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::S1 => "s1",
            Strategy::S2 => "s2",
            Strategy::S3 => "s3",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Strategy::S1),
            "s2" => Ok(Strategy::S2),
            "s3" => Ok(Strategy::S3),
            _ => Err(format!("unknown strategy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentativeChoice {
    #[default]
    First,
    Middle,
}

impl RepresentativeChoice {
    fn name(self) -> &'static str {
        match self {
            RepresentativeChoice::First => "first",
            RepresentativeChoice::Middle => "middle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct FragmentConfig {
    pub min_complexity: usize,
    pub max_complexity: usize,
    pub depth_limit: usize,
    pub breadth_limit: usize,
    pub representatives: usize,
    pub class_stop_threshold: usize,
    pub representative_choice: RepresentativeChoice,
}

impl Default for FragmentConfig {
    fn default() -> Self {
        Self {
            min_complexity: 2,
            max_complexity: 10,
            depth_limit: 3,
            breadth_limit: 16,
            representatives: 2,
            class_stop_threshold: 3,
            representative_choice: RepresentativeChoice::First,
        }
    }
}

impl FragmentConfig {
    pub fn validate(&self) -> Result<(), FragmentError> {
        let bad = |m: &str| Err(FragmentError::InvalidConfig(m.to_string()));
        if self.min_complexity == 0
            || self.max_complexity == 0
            || self.depth_limit == 0
            || self.breadth_limit == 0
            || self.class_stop_threshold == 0
        {
            return bad("limits must be positive");
        }
        if self.representatives < 2 {
            return bad("representatives must be at least 2");
        }
        if self.min_complexity > self.max_complexity {
            return bad("minComplexity exceeds maxComplexity");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: String,
    pub strategy: Strategy,
    pub cells: BTreeSet<CellAddress>,
    pub border_inputs: BTreeSet<CellAddress>,
    pub outputs: BTreeSet<CellAddress>,
    pub rewrites: BTreeMap<CellAddress, Expr>,
    pub score: usize,
    pub provenance: String,
    pub warnings: Vec<String>,
}

impl Fragment {
    /// The expression a member cell computes inside this fragment.
    pub fn expr_of<'a>(&'a self, analysis: &'a Analysis, cell: CellAddress) -> Option<&'a Expr> {
        self.rewrites
            .get(&cell)
            .or_else(|| analysis.workbook().formula(cell).map(|f| f.expr()))
    }

    /// Precedents of `cell` as seen inside the fragment.
    pub fn precedents_of(&self, analysis: &Analysis, cell: CellAddress) -> BTreeSet<CellAddress> {
        self.expr_of(analysis, cell)
            .map(Expr::referenced_cells)
            .unwrap_or_default()
    }

    /// Every cell that is part of the fragment or feeds it.
    pub fn footprint(&self) -> BTreeSet<CellAddress> {
        self.cells.union(&self.border_inputs).copied().collect()
    }

    fn dedupe_key(&self) -> (BTreeSet<CellAddress>, BTreeSet<CellAddress>, Vec<(CellAddress, String)>) {
        (
            self.cells.clone(),
            self.border_inputs.clone(),
            self.rewrites
                .iter()
                .map(|(a, e)| (*a, print_formula(e)))
                .collect(),
        )
    }
}

impl Serialize for Fragment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Doc<'a> {
            id: &'a str,
            strategy: Strategy,
            cells: &'a BTreeSet<CellAddress>,
            border_inputs: &'a BTreeSet<CellAddress>,
            outputs: &'a BTreeSet<CellAddress>,
            rewrites: BTreeMap<CellAddress, String>,
            score: usize,
            provenance: &'a str,
            warnings: &'a [String],
        }
        Doc {
            id: &self.id,
            strategy: self.strategy,
            cells: &self.cells,
            border_inputs: &self.border_inputs,
            outputs: &self.outputs,
            rewrites: self
                .rewrites
                .iter()
                .map(|(a, e)| (*a, print_formula(e)))
                .collect(),
            score: self.score,
            provenance: &self.provenance,
            warnings: &self.warnings,
        }
        .serialize(serializer)
    }
}

/// Number of distinct normalized formulas among the fragment's cells, with
/// rewrites standing in for the original formulas.
pub fn score_fragment(analysis: &Analysis, f: &Fragment) -> usize {
    f.cells
        .iter()
        .filter_map(|&c| f.expr_of(analysis, c).map(|e| normalize_r1c1(e, c)))
        .collect::<BTreeSet<_>>()
        .len()
}

fn block_name(block: &CopyBlock) -> String {
    let tl = CellAddress::new(block.cols.0, block.rows.0).expect("in bounds");
    let br = CellAddress::new(block.cols.1, block.rows.1).expect("in bounds");
    format!("{tl}-{br}")
}

fn finish(analysis: &Analysis, mut f: Fragment) -> Fragment {
    f.score = score_fragment(analysis, &f);
    f
}

/// Strategy S1.
pub fn extract_representative_row(
    analysis: &Analysis,
    block: &CopyBlock,
    choice: RepresentativeChoice,
) -> Result<Fragment, FragmentError> {
    let (r1, r2) = block.rows;
    if r2 <= r1 {
        return Err(FragmentError::DegenerateBlock(block_name(block)));
    }
    let row = match choice {
        RepresentativeChoice::First => r1,
        RepresentativeChoice::Middle => r1 + (r2 - r1) / 2,
    };
    let cells: BTreeSet<CellAddress> = block
        .row_cells(row)
        .filter(|c| analysis.is_formula(*c))
        .collect();
    if let Some(c) = cells.iter().find(|c| analysis.cycles().contains(c)) {
        return Err(FragmentError::Cyclic(*c));
    }
    let mut border = BTreeSet::new();
    let mut outputs = BTreeSet::new();
    for &c in &cells {
        border.extend(analysis.graph().precedents(c).filter(|p| !cells.contains(p)));
        if !analysis.graph().dependents(c).any(|d| cells.contains(&d)) {
            outputs.insert(c);
        }
    }
    let name = block_name(block);
    Ok(finish(
        analysis,
        Fragment {
            id: format!("s1-{name}-{}", choice.name()),
            strategy: Strategy::S1,
            cells,
            border_inputs: border,
            outputs,
            rewrites: BTreeMap::new(),
            score: 0,
            provenance: format!(
                "representative row {row} of copy block {} ({} rows, {} choice)",
                name.replace('-', ":"),
                block.height(),
                choice.name()
            ),
            warnings: Vec::new(),
        },
    ))
}

/// Strategy S2.
pub fn extract_aggregation(
    analysis: &Analysis,
    agg: CellAddress,
    k: usize,
) -> Result<Fragment, FragmentError> {
    let formula = analysis
        .workbook()
        .formula(agg)
        .ok_or(FragmentError::NotAFormula(agg))?;
    if analysis.cycles().contains(&agg) {
        return Err(FragmentError::Cyclic(agg));
    }
    let mut rewritten = formula.expr().clone();
    let mut narrowed_any = false;
    narrow_aggregates(analysis, &mut rewritten, k, &mut narrowed_any);
    if !narrowed_any {
        return Err(FragmentError::NoQualifyingClass(agg));
    }
    let border = rewritten.referenced_cells();
    let rewrite_text = print_formula(&rewritten);
    Ok(finish(
        analysis,
        Fragment {
            id: format!("s2-{agg}-k{k}"),
            strategy: Strategy::S2,
            cells: BTreeSet::from([agg]),
            border_inputs: border,
            outputs: BTreeSet::from([agg]),
            rewrites: BTreeMap::from([(agg, rewritten)]),
            score: 0,
            provenance: format!(
                "aggregate {agg} {} over {k} representatives as {rewrite_text}",
                formula.text()
            ),
            warnings: vec![S2_WARNING.to_string()],
        },
    ))
}

/// Narrows every aggregate call in `expr` in place. A class qualifies when
/// the call reads at least two of its members; only its first `k` members
/// (by address) are kept.
fn narrow_aggregates(analysis: &Analysis, expr: &mut Expr, k: usize, narrowed: &mut bool) {
    match expr {
        Expr::Call(func, args) => {
            for arg in args.iter_mut() {
                narrow_aggregates(analysis, arg, k, narrowed);
            }
            if !func.is_aggregate() {
                return;
            }
            let mut read: BTreeMap<usize, BTreeSet<CellAddress>> = BTreeMap::new();
            for arg in args.iter() {
                let cells: Vec<CellAddress> = match arg {
                    Expr::Range(r) => r.cells().collect(),
                    Expr::Ref(r) => vec![r.addr],
                    _ => continue,
                };
                for c in cells {
                    if let Some(id) = analysis.class_id(c) {
                        read.entry(id).or_default().insert(c);
                    }
                }
            }
            let dropped: BTreeSet<CellAddress> = read
                .values()
                .filter(|members| members.len() >= 2)
                .flat_map(|members| members.iter().skip(k).copied())
                .collect();
            if read.values().any(|m| m.len() >= 2) {
                *narrowed = true;
            }
            if dropped.is_empty() {
                return;
            }
            let old = std::mem::take(args);
            for arg in old {
                match arg {
                    Expr::Range(r) if r.cells().any(|c| dropped.contains(&c)) => {
                        let kept: Vec<CellAddress> =
                            r.cells().filter(|c| !dropped.contains(c)).collect();
                        args.extend(cover(&r, &kept));
                    }
                    Expr::Ref(r) if dropped.contains(&r.addr) => {}
                    other => args.push(other),
                }
            }
        }
        Expr::Unary(_, e) => narrow_aggregates(analysis, e, k, narrowed),
        Expr::Binary(_, a, b) => {
            narrow_aggregates(analysis, a, k, narrowed);
            narrow_aggregates(analysis, b, k, narrowed);
        }
        _ => {}
    }
}

/// Arguments reading exactly `kept`: one range when the cells form a
/// rectangle, otherwise one reference per cell. Absolute markers of the
/// original range are preserved on the matching components.
fn cover(original: &RangeRef, kept: &[CellAddress]) -> Vec<Expr> {
    let Some(first) = kept.first() else {
        return Vec::new();
    };
    let (mut c1, mut c2, mut r1, mut r2) = (first.col(), first.col(), first.row(), first.row());
    for c in kept {
        c1 = c1.min(c.col());
        c2 = c2.max(c.col());
        r1 = r1.min(c.row());
        r2 = r2.max(c.row());
    }
    let area = (c2 - c1 + 1) as usize * (r2 - r1 + 1) as usize;
    let (s, e) = (original.start(), original.end());
    let with_flags = |addr: CellAddress, like: CellRef| CellRef {
        addr,
        col_absolute: like.col_absolute,
        row_absolute: like.row_absolute,
    };
    if area == kept.len() {
        let start = with_flags(CellAddress::new(c1, r1).expect("in bounds"), s);
        let end = with_flags(CellAddress::new(c2, r2).expect("in bounds"), e);
        if kept.len() == 1 {
            vec![Expr::Ref(start)]
        } else {
            vec![Expr::Range(RangeRef::new(start, end))]
        }
    } else {
        kept.iter().map(|&a| Expr::Ref(with_flags(a, s))).collect()
    }
}

/// Strategy S3.
pub fn extract_path_limited(
    analysis: &Analysis,
    suspicious: CellAddress,
    cfg: &FragmentConfig,
) -> Result<Fragment, FragmentError> {
    if !analysis.is_formula(suspicious) {
        return Err(FragmentError::NotAFormula(suspicious));
    }
    if analysis.cycles().contains(&suspicious) {
        return Err(FragmentError::Cyclic(suspicious));
    }
    let graph = analysis.graph();
    let mut cells = BTreeSet::from([suspicious]);
    let mut border = BTreeSet::new();
    let mut frontier = BTreeSet::from([suspicious]);
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let candidates: BTreeSet<CellAddress> = frontier
            .iter()
            .flat_map(|&c| graph.precedents(c))
            .filter(|p| !cells.contains(p) && !border.contains(p))
            .collect();
        let mut next = BTreeSet::new();
        for p in candidates {
            let stop = !analysis.is_formula(p)
                || analysis.cycles().contains(&p)
                || depth >= cfg.depth_limit
                || analysis
                    .class_of(p)
                    .is_some_and(|c| c.len() >= cfg.class_stop_threshold)
                || cells.len() + 1 > cfg.breadth_limit;
            if stop {
                border.insert(p);
            } else {
                cells.insert(p);
                next.insert(p);
            }
        }
        frontier = next;
    }
    Ok(finish(
        analysis,
        Fragment {
            id: format!(
                "s3-{suspicious}-d{}-b{}-c{}",
                cfg.depth_limit, cfg.breadth_limit, cfg.class_stop_threshold
            ),
            strategy: Strategy::S3,
            outputs: BTreeSet::from([suspicious]),
            provenance: format!(
                "backward from {suspicious}: depth {}, breadth {}, class stop {}; {} cells, {} border inputs",
                cfg.depth_limit,
                cfg.breadth_limit,
                cfg.class_stop_threshold,
                cells.len(),
                border.len()
            ),
            cells,
            border_inputs: border,
            rewrites: BTreeMap::new(),
            score: 0,
            warnings: Vec::new(),
        },
    ))
}

/// Which cells to run S3 from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Targets {
    /// Every sink formula cell.
    #[default]
    Auto,
    Cells(BTreeSet<CellAddress>),
}

/// Candidate fragments from all strategies, filtered by score, deduplicated
/// and ordered by (score, id).
pub fn enumerate_fragments(
    analysis: &Analysis,
    targets: &Targets,
    cfg: &FragmentConfig,
) -> Vec<Fragment> {
    let mut all = Vec::new();
    for block in analysis.blocks() {
        all.extend(extract_representative_row(analysis, block, cfg.representative_choice).ok());
    }
    for (addr, f) in analysis.workbook().formulas() {
        if f.expr().contains_aggregate() {
            all.extend(extract_aggregation(analysis, addr, cfg.representatives).ok());
        }
    }
    let targets = match targets {
        Targets::Auto => analysis.sinks(),
        Targets::Cells(cells) => cells.clone(),
    };
    for t in targets {
        all.extend(extract_path_limited(analysis, t, cfg).ok());
    }
    all.retain(|f| (cfg.min_complexity..=cfg.max_complexity).contains(&f.score));
    all.sort_by(|a, b| (a.score, &a.id).cmp(&(b.score, &b.id)));
    let mut seen = BTreeSet::new();
    all.retain(|f| seen.insert(f.dedupe_key()));
    all
}

/// The parameters encoded in a fragment id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Row {
        top_left: CellAddress,
        bottom_right: CellAddress,
        choice: RepresentativeChoice,
    },
    Aggregate {
        cell: CellAddress,
        k: usize,
    },
    PathLimited {
        cell: CellAddress,
        depth: usize,
        breadth: usize,
        class_stop: usize,
    },
}

impl Recipe {
    /// Parses a canonical fragment id; `s2-b17-k2` is rejected in favour of
    /// `s2-B17-k2`.
    pub fn parse(id: &str) -> Result<Recipe, FragmentError> {
        let unknown = || FragmentError::UnknownFragment(id.to_string());
        let addr = |s: &str| parse_address(s).map_err(|_| unknown());
        let num = |s: &str, prefix: char| -> Result<usize, FragmentError> {
            s.strip_prefix(prefix)
                .and_then(|n| n.parse().ok())
                .filter(|n| *n > 0)
                .ok_or_else(unknown)
        };
        let parts: Vec<&str> = id.split('-').collect();
        let recipe = match parts.as_slice() {
            ["s1", tl, br, choice] => Recipe::Row {
                top_left: addr(tl)?,
                bottom_right: addr(br)?,
                choice: match *choice {
                    "first" => RepresentativeChoice::First,
                    "middle" => RepresentativeChoice::Middle,
                    _ => return Err(unknown()),
                },
            },
            ["s2", cell, k] => Recipe::Aggregate {
                cell: addr(cell)?,
                k: num(k, 'k').ok().filter(|k| *k >= 2).ok_or_else(unknown)?,
            },
            ["s3", cell, d, b, c] => Recipe::PathLimited {
                cell: addr(cell)?,
                depth: num(d, 'd')?,
                breadth: num(b, 'b')?,
                class_stop: num(c, 'c')?,
            },
            _ => return Err(unknown()),
        };
        if recipe.id() != id {
            return Err(unknown());
        }
        Ok(recipe)
    }

    pub fn id(&self) -> String {
        match *self {
            Recipe::Row {
                top_left,
                bottom_right,
                choice,
            } => format!("s1-{top_left}-{bottom_right}-{}", choice.name()),
            Recipe::Aggregate { cell, k } => format!("s2-{cell}-k{k}"),
            Recipe::PathLimited {
                cell,
                depth,
                breadth,
                class_stop,
            } => format!("s3-{cell}-d{depth}-b{breadth}-c{class_stop}"),
        }
    }

    pub fn build(&self, analysis: &Analysis) -> Result<Fragment, FragmentError> {
        match *self {
            Recipe::Row {
                top_left: tl,
                bottom_right: br,
                choice,
            } => {
                let block = analysis
                    .blocks()
                    .iter()
                    .find(|b| b.rows == (tl.row(), br.row()) && b.cols == (tl.col(), br.col()))
                    .ok_or_else(|| FragmentError::UnknownBlock(format!("{tl}:{br}")))?;
                extract_representative_row(analysis, block, choice)
            }
            Recipe::Aggregate { cell, k } => extract_aggregation(analysis, cell, k),
            Recipe::PathLimited {
                cell,
                depth,
                breadth,
                class_stop,
            } => {
                let cfg = FragmentConfig {
                    depth_limit: depth,
                    breadth_limit: breadth,
                    class_stop_threshold: class_stop,
                    ..FragmentConfig::default()
                };
                extract_path_limited(analysis, cell, &cfg)
            }
        }
    }
}

/// Rebuilds a fragment from its id.
pub fn resolve_fragment(analysis: &Analysis, id: &str) -> Result<Fragment, FragmentError> {
    Recipe::parse(id)?.build(analysis)
}

/// Checks the structural fragment invariants, returning the first
/// violation.
pub fn check_invariants(analysis: &Analysis, f: &Fragment) -> Result<(), String> {
    if f.outputs.is_empty() {
        return Err(format!("{}: no outputs", f.id));
    }
    if !f.outputs.is_subset(&f.cells) {
        return Err(format!("{}: outputs outside cells", f.id));
    }
    if let Some(c) = f.cells.intersection(&f.border_inputs).next() {
        return Err(format!("{}: {c} is both a cell and a border input", f.id));
    }
    for &c in &f.cells {
        if !matches!(analysis.workbook().get(c), CellContent::Formula(_)) {
            return Err(format!("{}: {c} is not a formula cell", f.id));
        }
        for p in f.precedents_of(analysis, c) {
            if !f.cells.contains(&p) && !f.border_inputs.contains(&p) {
                return Err(format!("{}: precedent {p} of {c} is outside the fragment", f.id));
            }
        }
    }
    let inner = DependencyGraph::from_formulas(
        f.cells.iter().copied(),
        f.cells.iter().filter_map(|&c| {
            f.expr_of(analysis, c).map(|e| (c, e))
        }),
    );
    let sub: BTreeSet<CellAddress> = inner.topo_order().cycles;
    if !sub.is_empty() {
        return Err(format!("{}: cycle among {:?}", f.id, sub));
    }
    Ok(())
}
