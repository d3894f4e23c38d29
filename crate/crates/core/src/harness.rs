//! Test cases at fragment borders: input generation, expected-value
//! capture, replay and property falsification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::CellAddress;
use crate::eval::{Evaluator, ValueMap};
use crate::formula::{parse_formula, BinaryOp, Expr, UnaryOp};
use crate::fragment::Fragment;
use crate::graph::TieBreak;
use crate::rng::SplitMix64;
use crate::value::{values_match, Value};
use crate::workbook::Workbook;

pub const TEST_FILE_VERSION: u32 = 1;
pub const DEFAULT_RANGE: (f64, f64) = (0.0, 1000.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("input range [{lo}, {hi}] for {addr} has lo > hi")]
    BadRange { addr: String, lo: f64, hi: f64 },
    #[error("test {test} does not supply border inputs {missing:?}")]
    MissingInputs { test: String, missing: Vec<CellAddress> },
    #[error("test {test} expects {cell}, which is not an output of fragment {fragment}")]
    NotAnOutput {
        test: String,
        cell: CellAddress,
        fragment: String,
    },
    #[error("test {0} has no expected values")]
    NoExpectations(String),
    #[error("test {test} belongs to fragment {actual}, not {expected}")]
    WrongFragment {
        test: String,
        expected: String,
        actual: String,
    },
    #[error("property cell {cell} is not an output of fragment {fragment}")]
    PropertyTarget { cell: CellAddress, fragment: String },
    #[error("malformed property `{0}`")]
    BadProperty(String),
    #[error("trials must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Recorded from the current computation; not verified by anyone.
    Captured,
    User,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub id: String,
    /// Carried by the enclosing test file rather than each entry.
    #[serde(skip)]
    pub fragment_id: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<CellAddress, Value>,
    pub expected: BTreeMap<CellAddress, Value>,
}

/// The per-fragment file stored as `tests/<fragment-id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFile {
    pub version: u32,
    pub fragment: String,
    pub tests: Vec<TestCase>,
}

impl TestFile {
    pub fn new(fragment: &str, tests: Vec<TestCase>) -> Self {
        Self {
            version: TEST_FILE_VERSION,
            fragment: fragment.to_string(),
            tests,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("test file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut file: TestFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.version != TEST_FILE_VERSION {
            return Err(format!("unsupported test file version {}", file.version));
        }
        for t in &mut file.tests {
            t.fragment_id = file.fragment.clone();
        }
        Ok(file)
    }
}

/// Per-address input ranges with a fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub default: (f64, f64),
    pub ranges: BTreeMap<CellAddress, (f64, f64)>,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self::uniform(DEFAULT_RANGE.0, DEFAULT_RANGE.1)
    }
}

impl InputSpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            default: (lo, hi),
            ranges: BTreeMap::new(),
        }
    }

    pub fn range_for(&self, addr: CellAddress) -> (f64, f64) {
        self.ranges.get(&addr).copied().unwrap_or(self.default)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let all = std::iter::once(("default".to_string(), self.default))
            .chain(self.ranges.iter().map(|(a, r)| (a.to_string(), *r)));
        for (addr, (lo, hi)) in all {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(HarnessError::BadRange { addr, lo, hi });
            }
        }
        Ok(())
    }
}

/// One value per border input, drawn in address order from a single
/// splitmix64 stream seeded with `seed`.
pub fn generate_inputs(
    f: &Fragment,
    spec: &InputSpec,
    seed: u64,
) -> Result<BTreeMap<CellAddress, Value>, HarnessError> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    Ok(f.border_inputs
        .iter()
        .map(|&addr| {
            let (lo, hi) = spec.range_for(addr);
            let u = rng.next_unit();
            (addr, Value::Number(lo + u * (hi - lo)))
        })
        .collect())
}

/// Values each input takes in boundary mode, against a midpoint baseline.
pub fn boundary_values(lo: f64, hi: f64) -> [f64; 5] {
    [0.0, 1.0, -1.0, lo, hi]
}

/// Boundary mode: every input at the midpoint of its range, then each input
/// in turn set to each of `0, 1, −1, lo, hi`. Five cases per input.
pub fn boundary_cases(
    f: &Fragment,
    spec: &InputSpec,
) -> Result<Vec<BTreeMap<CellAddress, Value>>, HarnessError> {
    spec.validate()?;
    let baseline: BTreeMap<CellAddress, Value> = f
        .border_inputs
        .iter()
        .map(|&a| {
            let (lo, hi) = spec.range_for(a);
            (a, Value::Number(lo + (hi - lo) / 2.0))
        })
        .collect();
    let mut cases = Vec::with_capacity(5 * baseline.len());
    for &addr in &f.border_inputs {
        let (lo, hi) = spec.range_for(addr);
        for v in boundary_values(lo, hi) {
            let mut case = baseline.clone();
            case.insert(addr, Value::Number(v));
            cases.push(case);
        }
    }
    Ok(cases)
}

/// Evaluates one fragment repeatedly with different border values. Only
/// the cells needed by the outputs are computed.
#[derive(Debug, Clone)]
pub struct FragmentRunner {
    evaluator: Evaluator,
    border: BTreeSet<CellAddress>,
    outputs: BTreeSet<CellAddress>,
}

impl FragmentRunner {
    pub fn new(wb: &Workbook, f: &Fragment) -> Self {
        let evaluator = Evaluator::new(wb, &f.border_inputs, &f.rewrites, TieBreak::Ascending)
            .restricted_to(&f.outputs);
        Self {
            evaluator,
            border: f.border_inputs.clone(),
            outputs: f.outputs.clone(),
        }
    }

    pub fn missing(&self, inputs: &BTreeMap<CellAddress, Value>) -> Vec<CellAddress> {
        self.border
            .iter()
            .filter(|a| !inputs.contains_key(a))
            .copied()
            .collect()
    }

    pub fn run(&self, inputs: &BTreeMap<CellAddress, Value>) -> ValueMap {
        self.evaluator.run(inputs)
    }

    pub fn outputs(&self, inputs: &BTreeMap<CellAddress, Value>) -> BTreeMap<CellAddress, Value> {
        let vm = self.run(inputs);
        self.outputs
            .iter()
            .map(|&o| (o, vm.get(o).clone()))
            .collect()
    }
}

/// Records the current computation at the fragment's outputs. The result
/// has an empty id and `captured` origin.
pub fn capture_expected(
    wb: &Workbook,
    f: &Fragment,
    inputs: BTreeMap<CellAddress, Value>,
    seed: Option<u64>,
) -> Result<TestCase, HarnessError> {
    let runner = FragmentRunner::new(wb, f);
    let missing = runner.missing(&inputs);
    if !missing.is_empty() {
        return Err(HarnessError::MissingInputs {
            test: "(new)".into(),
            missing,
        });
    }
    let expected = runner.outputs(&inputs);
    Ok(TestCase {
        id: String::new(),
        fragment_id: f.id.clone(),
        origin: Origin::Captured,
        seed,
        inputs,
        expected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputCheck {
    pub output: CellAddress,
    pub expected: Value,
    pub actual: Value,
    #[serde(rename = "match")]
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TestResult {
    pub test_id: String,
    pub fragment_id: String,
    pub verdict: Verdict,
    pub outputs: Vec<OutputCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub error: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TestReport {
    pub results: Vec<TestResult>,
    pub summary: Summary,
}

impl TestReport {
    pub fn new(results: Vec<TestResult>) -> Self {
        let mut summary = Summary {
            total: results.len(),
            ..Summary::default()
        };
        for r in &results {
            match r.verdict {
                Verdict::Pass => summary.pass += 1,
                Verdict::Fail => summary.fail += 1,
                Verdict::Error => summary.error += 1,
            }
        }
        Self { results, summary }
    }

    pub fn extend(&mut self, other: TestReport) {
        let mut results = std::mem::take(&mut self.results);
        results.extend(other.results);
        *self = TestReport::new(results);
    }
}

/// Checks that `test` is well-formed for `f`.
pub fn validate_test(f: &Fragment, test: &TestCase) -> Result<(), HarnessError> {
    if test.fragment_id != f.id {
        return Err(HarnessError::WrongFragment {
            test: test.id.clone(),
            expected: f.id.clone(),
            actual: test.fragment_id.clone(),
        });
    }
    let missing: Vec<CellAddress> = f
        .border_inputs
        .iter()
        .filter(|a| !test.inputs.contains_key(a))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingInputs {
            test: test.id.clone(),
            missing,
        });
    }
    if test.expected.is_empty() {
        return Err(HarnessError::NoExpectations(test.id.clone()));
    }
    if let Some(cell) = test.expected.keys().find(|c| !f.outputs.contains(c)) {
        return Err(HarnessError::NotAnOutput {
            test: test.id.clone(),
            cell: *cell,
            fragment: f.id.clone(),
        });
    }
    Ok(())
}

/// Replays `tests` (all belonging to `f`) in the given order.
pub fn run_tests(wb: &Workbook, f: &Fragment, tests: &[TestCase]) -> Result<TestReport, HarnessError> {
    for t in tests {
        validate_test(f, t)?;
    }
    let runner = FragmentRunner::new(wb, f);
    let results = tests
        .iter()
        .map(|t| {
            let vm = runner.run(&t.inputs);
            let outputs: Vec<OutputCheck> = t
                .expected
                .iter()
                .map(|(&output, expected)| {
                    let actual = vm.get(output).clone();
                    OutputCheck {
                        output,
                        matches: values_match(&actual, expected),
                        expected: expected.clone(),
                        actual,
                    }
                })
                .collect();
            let verdict = if outputs.iter().any(|o| !o.matches && o.actual.is_error()) {
                Verdict::Error
            } else if outputs.iter().any(|o| !o.matches) {
                Verdict::Fail
            } else {
                Verdict::Pass
            };
            TestResult {
                test_id: t.id.clone(),
                fragment_id: f.id.clone(),
                verdict,
                outputs,
            }
        })
        .collect();
    Ok(TestReport::new(results))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<>")]
    Ne,
}

impl Relation {
    fn from_op(op: BinaryOp) -> Option<Self> {
        Some(match op {
            BinaryOp::Ge => Relation::Ge,
            BinaryOp::Le => Relation::Le,
            BinaryOp::Gt => Relation::Gt,
            BinaryOp::Lt => Relation::Lt,
            BinaryOp::Eq => Relation::Eq,
            BinaryOp::Ne => Relation::Ne,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Lt => "<",
            Relation::Eq => "=",
            Relation::Ne => "<>",
        }
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Relation::Ge => a >= b,
            Relation::Le => a <= b,
            Relation::Gt => a > b,
            Relation::Lt => a < b,
            Relation::Eq => a == b,
            Relation::Ne => a != b,
        }
    }
}

/// Right-hand side of a comparison: a constant or another output cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Number(f64),
    Cell(CellAddress),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub target: CellAddress,
    pub relation: Relation,
    pub bound: Bound,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.target, self.relation.symbol())?;
        match self.bound {
            Bound::Number(n) => write!(f, "{n}"),
            Bound::Cell(c) => write!(f, "{c}"),
        }
    }
}

/// A conjunction of threshold comparisons on fragment outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub conjuncts: Vec<Comparison>,
}

impl PropertySpec {
    /// Parses `E17>=0`, `E17 >= -5 && E17 < 100` or the same with commas.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::BadProperty(text.to_string());
        let conjuncts = text
            .split("&&")
            .flat_map(|part| part.split(','))
            .map(|part| {
                let expr = parse_formula(&format!("={}", part.trim())).map_err(|_| bad())?;
                let Expr::Binary(op, lhs, rhs) = expr else {
                    return Err(bad());
                };
                let relation = Relation::from_op(op).ok_or_else(bad)?;
                let Expr::Ref(target) = *lhs else {
                    return Err(bad());
                };
                let bound = match *rhs {
                    Expr::Number(n) => Bound::Number(n),
                    Expr::Unary(UnaryOp::Neg, inner) => match *inner {
                        Expr::Number(n) => Bound::Number(-n),
                        _ => return Err(bad()),
                    },
                    Expr::Ref(r) => Bound::Cell(r.addr),
                    _ => return Err(bad()),
                };
                Ok(Comparison {
                    target: target.addr,
                    relation,
                    bound,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { conjuncts })
    }

    pub fn cells(&self) -> BTreeSet<CellAddress> {
        self.conjuncts
            .iter()
            .flat_map(|c| {
                std::iter::once(c.target).chain(match c.bound {
                    Bound::Cell(b) => Some(b),
                    Bound::Number(_) => None,
                })
            })
            .collect()
    }

    /// The first violated conjunct, if any. An operand that is not a number
    /// violates the property.
    pub fn violation(&self, values: &ValueMap) -> Option<Comparison> {
        self.conjuncts.iter().copied().find(|c| {
            let lhs = values.get(c.target).as_number();
            let rhs = match c.bound {
                Bound::Number(n) => Some(n),
                Bound::Cell(b) => values.get(b).as_number(),
            };
            match (lhs, rhs) {
                (Some(a), Some(b)) => !c.relation.holds(a, b),
                _ => true,
            }
        })
    }
}

impl fmt::Display for PropertySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Counterexample {
    /// Zero-based index of the violating trial.
    pub trial: usize,
    pub seed: u64,
    pub inputs: BTreeMap<CellAddress, Value>,
    pub outputs: BTreeMap<CellAddress, Value>,
    pub violated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "camelCase")]
pub enum FalsifyOutcome {
    Counterexample(Counterexample),
    NoneFound { trials: usize },
}

/// Searches for inputs violating `property`. Trial `i` uses the `i`-th
/// output of `SplitMix64(seed)` as its input seed.
pub fn falsify_property(
    wb: &Workbook,
    f: &Fragment,
    property: &PropertySpec,
    spec: &InputSpec,
    trials: usize,
    seed: u64,
) -> Result<FalsifyOutcome, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    if let Some(cell) = property.cells().into_iter().find(|c| !f.outputs.contains(c)) {
        return Err(HarnessError::PropertyTarget {
            cell,
            fragment: f.id.clone(),
        });
    }
    spec.validate()?;
    let runner = FragmentRunner::new(wb, f);
    let mut seeds = SplitMix64::new(seed);
    for trial in 0..trials {
        let trial_seed = seeds.next_u64();
        let inputs = generate_inputs(f, spec, trial_seed)?;
        let values = runner.run(&inputs);
        if let Some(violated) = property.violation(&values) {
            let outputs = f.outputs.iter().map(|&o| (o, values.get(o).clone())).collect();
            return Ok(FalsifyOutcome::Counterexample(Counterexample {
                trial,
                seed: trial_seed,
                inputs,
                outputs,
                violated: violated.to_string(),
            }));
        }
    }
    Ok(FalsifyOutcome::NoneFound { trials })
}
