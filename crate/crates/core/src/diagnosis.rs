//! Fault localization from correct/faulty labels on outputs.
//!
//! Under the weak fault model a faulty output implicates every formula cell
//! in its cone (one conflict per faulty label). Diagnoses are the
//! subset-minimal hitting sets of the conflicts; Ochiai ranks cells by how
//! strongly their coverage correlates with faulty labels. Correct labels
//! only lower a cell's rank, they never exonerate it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::CellAddress;
use crate::analysis::Analysis;
use crate::fragment::Fragment;
use crate::graph::Direction;
use crate::value::Value;

pub const DEFAULT_KMAX: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosisError {
    #[error("nothing to diagnose: no output is labeled faulty")]
    NothingToDiagnose,
    #[error("faulty output {0} is unexplainable under the model: its cone holds no formula")]
    Unexplainable(CellAddress),
    #[error("kmax must be at least 1")]
    BadKmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Faulty,
}

/// A user verdict as stored in `labels.json`. Without a test id the label
/// is a whole-sheet observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LabelRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_id: Option<String>,
    pub output: CellAddress,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledResult {
    pub test_id: Option<String>,
    pub output: CellAddress,
    pub label: Label,
    pub expected: Option<Value>,
    pub covered: BTreeSet<CellAddress>,
}

impl LabeledResult {
    pub fn new(record: &LabelRecord, covered: BTreeSet<CellAddress>) -> Self {
        Self {
            test_id: record.test_id.clone(),
            output: record.output,
            label: record.label,
            expected: record.expected.clone(),
            covered,
        }
    }
}

/// Formula cells that can influence `output`. With a fragment the walk
/// stays inside the fragment's cells, so it stops at border inputs.
pub fn covered_cells(
    analysis: &Analysis,
    fragment: Option<&Fragment>,
    output: CellAddress,
) -> BTreeSet<CellAddress> {
    match fragment {
        Some(f) => {
            if !f.cells.contains(&output) {
                return BTreeSet::new();
            }
            let mut seen = BTreeSet::from([output]);
            let mut queue = VecDeque::from([output]);
            while let Some(c) = queue.pop_front() {
                for p in f.precedents_of(analysis, c) {
                    if f.cells.contains(&p) && seen.insert(p) {
                        queue.push_back(p);
                    }
                }
            }
            seen
        }
        None => analysis
            .graph()
            .cone(output, Direction::Backward)
            .unwrap_or_default()
            .into_iter()
            .filter(|c| analysis.is_formula(*c))
            .collect(),
    }
}

pub type Conflict = BTreeSet<CellAddress>;

/// One conflict per faulty label, deduplicated, ordered by size then
/// contents.
pub fn compute_conflicts(labels: &[LabeledResult]) -> Result<Vec<Conflict>, DiagnosisError> {
    let faulty: Vec<&LabeledResult> = labels.iter().filter(|l| l.label == Label::Faulty).collect();
    if faulty.is_empty() {
        return Err(DiagnosisError::NothingToDiagnose);
    }
    if let Some(l) = faulty.iter().find(|l| l.covered.is_empty()) {
        return Err(DiagnosisError::Unexplainable(l.output));
    }
    let unique: BTreeSet<&Conflict> = faulty.iter().map(|l| &l.covered).collect();
    let mut conflicts: Vec<Conflict> = unique.into_iter().cloned().collect();
    conflicts.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(conflicts)
}

/// All subset-minimal hitting sets of at most `kmax` cells, by cardinality
/// and then lexicographically.
pub fn minimal_hitting_sets(conflicts: &[Conflict], kmax: usize) -> Vec<BTreeSet<CellAddress>> {
    let universe: Vec<CellAddress> = conflicts.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut found: Vec<BTreeSet<CellAddress>> = Vec::new();
    if conflicts.is_empty() {
        return found;
    }
    for size in 1..=kmax.min(universe.len()) {
        let mut this_size = Vec::new();
        for combo in universe.iter().copied().combinations(size) {
            let candidate: BTreeSet<CellAddress> = combo.into_iter().collect();
            if found.iter().any(|d| d.is_subset(&candidate)) {
                continue;
            }
            if conflicts.iter().all(|c| !c.is_disjoint(&candidate)) {
                this_size.push(candidate);
            }
        }
        found.extend(this_size);
    }
    found
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub cell: CellAddress,
    pub suspiciousness: f64,
    pub ef: usize,
    pub ep: usize,
    pub nf: usize,
}

pub fn ochiai(ef: usize, ep: usize, nf: usize) -> f64 {
    let denom = (((ef + nf) * (ef + ep)) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        ef as f64 / denom
    }
}

/// Ochiai suspiciousness for every cell covered by some label, descending,
/// ties by address.
pub fn rank_ochiai(labels: &[LabeledResult]) -> Vec<RankEntry> {
    let cells: BTreeSet<CellAddress> = labels.iter().flat_map(|l| l.covered.iter().copied()).collect();
    let mut ranking: Vec<RankEntry> = cells
        .into_iter()
        .map(|cell| {
            let (mut ef, mut ep, mut nf) = (0, 0, 0);
            for l in labels {
                match (l.label, l.covered.contains(&cell)) {
                    (Label::Faulty, true) => ef += 1,
                    (Label::Faulty, false) => nf += 1,
                    (Label::Correct, true) => ep += 1,
                    (Label::Correct, false) => {}
                }
            }
            RankEntry {
                cell,
                suspiciousness: ochiai(ef, ep, nf),
                ef,
                ep,
                nf,
            }
        })
        .collect();
    ranking.sort_by(|a, b| {
        b.suspiciousness
            .total_cmp(&a.suspiciousness)
            .then(a.cell.cmp(&b.cell))
    });
    ranking
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisEntry {
    pub cells: BTreeSet<CellAddress>,
    pub cardinality: usize,
    /// Highest suspiciousness among the members.
    pub suspiciousness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisReport {
    pub conflicts: Vec<Conflict>,
    pub diagnoses: Vec<DiagnosisEntry>,
    pub ranking: Vec<RankEntry>,
}

impl DiagnosisReport {
    /// Cells sharing the top suspiciousness score.
    pub fn top_ranked(&self) -> BTreeSet<CellAddress> {
        let Some(top) = self.ranking.first() else {
            return BTreeSet::new();
        };
        self.ranking
            .iter()
            .take_while(|r| r.suspiciousness == top.suspiciousness)
            .map(|r| r.cell)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn diagnose(labels: &[LabeledResult], kmax: usize) -> Result<DiagnosisReport, DiagnosisError> {
    if kmax == 0 {
        return Err(DiagnosisError::BadKmax);
    }
    let conflicts = compute_conflicts(labels)?;
    let ranking = rank_ochiai(labels);
    let score: BTreeMap<CellAddress, f64> = ranking.iter().map(|r| (r.cell, r.suspiciousness)).collect();
    let diagnoses = minimal_hitting_sets(&conflicts, kmax)
        .into_iter()
        .map(|cells| DiagnosisEntry {
            cardinality: cells.len(),
            suspiciousness: cells
                .iter()
                .map(|c| score.get(c).copied().unwrap_or(0.0))
                .fold(0.0, f64::max),
            cells,
        })
        .collect();
    Ok(DiagnosisReport {
        conflicts,
        diagnoses,
        ranking,
    })
}
