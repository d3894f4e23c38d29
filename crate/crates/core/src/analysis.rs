//! Everything derived from one workbook version: graph, classes, blocks and
//! smells.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::address::CellAddress;
use crate::equivalence::{
    check_range_completeness, compute_classes, detect_blocks, CopyBlock, EquivalenceClass,
    RangeSmell,
};
use crate::graph::DependencyGraph;
use crate::workbook::Workbook;

#[derive(Debug, Clone)]
pub struct Analysis {
    workbook: Arc<Workbook>,
    graph: DependencyGraph,
    classes: Vec<EquivalenceClass>,
    class_index: BTreeMap<CellAddress, usize>,
    blocks: Vec<CopyBlock>,
    smells: Vec<RangeSmell>,
    cycles: BTreeSet<CellAddress>,
}

impl Analysis {
    pub fn new(workbook: Arc<Workbook>) -> Self {
        let graph = DependencyGraph::build(&workbook);
        let classes = compute_classes(&workbook);
        let class_index = classes
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.members.iter().map(move |m| (*m, i)))
            .collect();
        let blocks = detect_blocks(&classes);
        let smells = check_range_completeness(&workbook, &blocks);
        let cycles = graph.topo_order().cycles;
        Self {
            workbook,
            graph,
            classes,
            class_index,
            blocks,
            smells,
            cycles,
        }
    }

    pub fn of(workbook: Workbook) -> Self {
        Self::new(Arc::new(workbook))
    }

    pub fn workbook(&self) -> &Workbook {
        &self.workbook
    }

    pub fn shared_workbook(&self) -> Arc<Workbook> {
        Arc::clone(&self.workbook)
    }

    pub fn graph(&self) -> &DependencyGraph {
        &self.graph
    }

    pub fn classes(&self) -> &[EquivalenceClass] {
        &self.classes
    }

    pub fn class_of(&self, addr: CellAddress) -> Option<&EquivalenceClass> {
        self.class_index.get(&addr).map(|&i| &self.classes[i])
    }

    /// Index into [`Analysis::classes`].
    pub fn class_id(&self, addr: CellAddress) -> Option<usize> {
        self.class_index.get(&addr).copied()
    }

    pub fn blocks(&self) -> &[CopyBlock] {
        &self.blocks
    }

    pub fn smells(&self) -> &[RangeSmell] {
        &self.smells
    }

    /// Cells lying on a reference cycle.
    pub fn cycles(&self) -> &BTreeSet<CellAddress> {
        &self.cycles
    }

    pub fn is_formula(&self, addr: CellAddress) -> bool {
        self.workbook.formula(addr).is_some()
    }

    /// Formula cells no other formula reads.
    pub fn sinks(&self) -> BTreeSet<CellAddress> {
        self.workbook
            .formulas()
            .map(|(a, _)| a)
            .filter(|a| self.graph.dependents(*a).next().is_none())
            .collect()
    }
}
