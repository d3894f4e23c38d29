//! Cell-level data-flow graph.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write;

use thiserror::Error;

use crate::address::CellAddress;
use crate::formula::Expr;
use crate::workbook::Workbook;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cell {0} is not part of the dependency graph")]
    UnknownCell(CellAddress),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Toward precedents.
    Backward,
    /// Toward dependents.
    Forward,
}

/// Order in which ready cells leave the Kahn queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TopoOrder {
    /// Every node not on a cycle, precedents first.
    pub order: Vec<CellAddress>,
    /// Nodes lying on at least one cycle.
    pub cycles: BTreeSet<CellAddress>,
}

/// Precedent → dependent edges over all non-blank cells plus any blank
/// cell a formula references.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyGraph {
    nodes: BTreeSet<CellAddress>,
    precedents: BTreeMap<CellAddress, BTreeSet<CellAddress>>,
    dependents: BTreeMap<CellAddress, BTreeSet<CellAddress>>,
}

impl DependencyGraph {
    pub fn build(wb: &Workbook) -> Self {
        Self::from_formulas(
            wb.cells().map(|(a, _)| a),
            wb.formulas().map(|(a, f)| (a, f.expr())),
        )
    }

    /// Builds from an explicit node list and the formulas to honour. Cells
    /// absent from `formulas` are treated as inputs.
    pub fn from_formulas<'a>(
        cells: impl IntoIterator<Item = CellAddress>,
        formulas: impl IntoIterator<Item = (CellAddress, &'a Expr)>,
    ) -> Self {
        let mut g = DependencyGraph {
            nodes: cells.into_iter().collect(),
            ..Default::default()
        };
        for (addr, expr) in formulas {
            g.nodes.insert(addr);
            let refs = expr.referenced_cells();
            for p in &refs {
                g.nodes.insert(*p);
                g.dependents.entry(*p).or_default().insert(addr);
            }
            g.precedents.insert(addr, refs);
        }
        g
    }

    pub fn nodes(&self) -> &BTreeSet<CellAddress> {
        &self.nodes
    }

    pub fn contains(&self, addr: CellAddress) -> bool {
        self.nodes.contains(&addr)
    }

    pub fn precedents(&self, addr: CellAddress) -> impl Iterator<Item = CellAddress> + '_ {
        self.precedents.get(&addr).into_iter().flatten().copied()
    }

    pub fn dependents(&self, addr: CellAddress) -> impl Iterator<Item = CellAddress> + '_ {
        self.dependents.get(&addr).into_iter().flatten().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.precedents.values().map(BTreeSet::len).sum()
    }

    pub fn topo_order(&self) -> TopoOrder {
        self.topo_order_with(TieBreak::Ascending)
    }

    /// Kahn's algorithm. Cells on cycles are reported and left out; cells
    /// that merely depend on a cycle are still ordered.
    pub fn topo_order_with(&self, tie: TieBreak) -> TopoOrder {
        let cycles = self.cycle_members();
        let mut indegree: BTreeMap<CellAddress, usize> = BTreeMap::new();
        for &n in self.nodes.iter().filter(|n| !cycles.contains(n)) {
            let d = self.precedents(n).filter(|p| !cycles.contains(p)).count();
            indegree.insert(n, d);
        }
        let mut ready = ReadyQueue::new(tie);
        for (&n, &d) in &indegree {
            if d == 0 {
                ready.push(n);
            }
        }
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for dep in self.dependents(n) {
                if let Some(d) = indegree.get_mut(&dep) {
                    *d -= 1;
                    if *d == 0 {
                        ready.push(dep);
                    }
                }
            }
        }
        debug_assert_eq!(order.len(), indegree.len());
        TopoOrder { order, cycles }
    }

    /// Members of non-trivial strongly connected components, plus
    /// self-loops. Iterative Tarjan.
    fn cycle_members(&self) -> BTreeSet<CellAddress> {
        let nodes: Vec<CellAddress> = self.nodes.iter().copied().collect();
        let index_of: BTreeMap<CellAddress, usize> =
            nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let succ: Vec<Vec<usize>> = nodes
            .iter()
            .map(|n| self.dependents(*n).map(|d| index_of[&d]).collect())
            .collect();

        const UNSEEN: usize = usize::MAX;
        let n = nodes.len();
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut out = BTreeSet::new();

        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            let mut work = vec![(root, 0usize)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut i)) = work.last_mut() {
                if *i < succ[v].len() {
                    let w = succ[v][*i];
                    *i += 1;
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        work.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    work.pop();
                    if let Some(&(parent, _)) = work.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut component = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            component.push(w);
                            if w == v {
                                break;
                            }
                        }
                        let self_loop = succ[v].contains(&v);
                        if component.len() > 1 || self_loop {
                            out.extend(component.into_iter().map(|i| nodes[i]));
                        }
                    }
                }
            }
        }
        out
    }

    /// Transitive closure from `cell` (inclusive) along `direction`.
    pub fn cone(
        &self,
        cell: CellAddress,
        direction: Direction,
    ) -> Result<BTreeSet<CellAddress>, GraphError> {
        if !self.contains(cell) {
            return Err(GraphError::UnknownCell(cell));
        }
        let mut seen = BTreeSet::from([cell]);
        let mut queue = VecDeque::from([cell]);
        while let Some(c) = queue.pop_front() {
            let next: Vec<CellAddress> = match direction {
                Direction::Backward => self.precedents(c).collect(),
                Direction::Forward => self.dependents(c).collect(),
            };
            for n in next {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        Ok(seen)
    }

    /// Graphviz text: one node per address, one edge per precedent pair.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name.replace('"', "\\\""));
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for (d, ps) in &self.precedents {
            for p in ps {
                let _ = writeln!(out, "  \"{p}\" -> \"{d}\";");
            }
        }
        out.push_str("}\n");
        out
    }
}

enum ReadyQueue {
    Ascending(BinaryHeap<Reverse<CellAddress>>),
    Descending(BinaryHeap<CellAddress>),
}

impl ReadyQueue {
    fn new(tie: TieBreak) -> Self {
        match tie {
            TieBreak::Ascending => ReadyQueue::Ascending(BinaryHeap::new()),
            TieBreak::Descending => ReadyQueue::Descending(BinaryHeap::new()),
        }
    }

    fn push(&mut self, a: CellAddress) {
        match self {
            ReadyQueue::Ascending(h) => h.push(Reverse(a)),
            ReadyQueue::Descending(h) => h.push(a),
        }
    }

    fn pop(&mut self) -> Option<CellAddress> {
        match self {
            ReadyQueue::Ascending(h) => h.pop().map(|r| r.0),
            ReadyQueue::Descending(h) => h.pop(),
        }
    }
}
