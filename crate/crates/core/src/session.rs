//! A working session: committed workbook, scratch edits, focus, stored
//! tests and labels, plus the directory format they persist to.
//!
//! Layout of a session directory:
//!
//! ```text
//! workbook.json          committed workbook
//! session.json           version, focus, fragment config, scratch edits
//! tests/<fragment>.json  one test file per fragment with tests
//! labels.json            user labels, present only when there are any
//! diagnosis.json         last diagnosis report, written by `diagnose`
//! ```
//!
//! Analysis (graph, classes, fragments) always reflects the committed
//! workbook; values shown and tests replayed use the working copy, which is
//! the committed workbook plus scratch edits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::CellAddress;
use crate::analysis::Analysis;
use crate::diagnosis::{covered_cells, diagnose, DiagnosisError, DiagnosisReport, LabelRecord, LabeledResult};
use crate::eval::evaluate;
use crate::fragment::{
    enumerate_fragments, resolve_fragment, Fragment, FragmentConfig, FragmentError, Recipe, Targets,
};
use crate::harness::{
    boundary_cases, capture_expected, falsify_property, generate_inputs, run_tests, validate_test,
    FalsifyOutcome, HarnessError, InputSpec, Origin, PropertySpec, TestCase, TestFile, TestReport,
};
use crate::value::Value;
use crate::workbook::{CellChange, Workbook, WorkbookError};

pub const SESSION_FILE_VERSION: u32 = 1;
pub const READ_ONLY_MESSAGE: &str = "read-only outside focused fragment";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{READ_ONLY_MESSAGE}: {0} is not a border input of {1}")]
    ReadOnly(CellAddress, String),
    #[error("{READ_ONLY_MESSAGE}: clear the focus before loading another workbook")]
    FocusedLoad,
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
    #[error(transparent)]
    Workbook(#[from] WorkbookError),
    #[error("unknown test `{0}`")]
    UnknownTest(String),
    #[error("label output {output} is not an output of test {test}")]
    LabelOutput { output: CellAddress, test: String },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
}

fn file_error(path: &Path, message: impl ToString) -> SessionError {
    SessionError::File {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// One scratch edit, replayable onto the committed workbook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edit {
    pub addr: CellAddress,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SessionDoc {
    version: u32,
    workbook_version: u64,
    focus: Option<String>,
    config: FragmentConfig,
    next_test: u64,
    #[serde(default)]
    edits: Vec<Edit>,
}

/// A stored test that can no longer run against the current workbook.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StaleTest {
    pub test_id: String,
    pub fragment_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SessionReport {
    #[serde(flatten)]
    pub report: TestReport,
    pub stale: Vec<StaleTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GridCell {
    pub addr: CellAddress,
    pub kind: &'static str,
    pub display: String,
    pub value: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    pub in_fragment: bool,
    pub border_input: bool,
    pub output: bool,
    pub dimmed: bool,
    pub read_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub version: u64,
    pub focus: Option<String>,
    pub cells: Vec<GridCell>,
}

/// How `generate_tests` picks inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generation {
    /// `count` random cases; case `i` uses seed `seed + i`.
    Random { seed: u64, count: usize },
    Boundary,
}

#[derive(Debug, Clone)]
pub struct Session {
    committed: Arc<Workbook>,
    working: Workbook,
    edits: Vec<CellChange>,
    config: FragmentConfig,
    focus: Option<String>,
    tests: BTreeMap<String, Vec<TestCase>>,
    labels: Vec<LabelRecord>,
    version: u64,
    next_test: u64,
    analysis: Analysis,
    fragments: Option<Vec<Fragment>>,
}

impl Session {
    pub fn new(workbook: Workbook) -> Self {
        let committed = Arc::new(workbook);
        Self {
            working: (*committed).clone(),
            analysis: Analysis::new(Arc::clone(&committed)),
            committed,
            edits: Vec::new(),
            config: FragmentConfig::default(),
            focus: None,
            tests: BTreeMap::new(),
            labels: Vec::new(),
            version: 1,
            next_test: 1,
            fragments: None,
        }
    }

    /// Replaces the workbook, dropping tests, labels, edits and focus.
    pub fn load_workbook(&mut self, workbook: Workbook) -> Result<(), SessionError> {
        if self.focus.is_some() {
            return Err(SessionError::FocusedLoad);
        }
        let version = self.version + 1;
        let config = self.config;
        *self = Session::new(workbook);
        self.version = version;
        self.config = config;
        Ok(())
    }

    /// Workbook version; bumped by every edit, commit and load.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn committed(&self) -> &Workbook {
        &self.committed
    }

    pub fn working(&self) -> &Workbook {
        &self.working
    }

    pub fn analysis(&self) -> &Analysis {
        &self.analysis
    }

    pub fn config(&self) -> &FragmentConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: FragmentConfig) -> Result<(), SessionError> {
        config.validate()?;
        self.config = config;
        self.fragments = None;
        Ok(())
    }

    pub fn focus(&self) -> Option<&str> {
        self.focus.as_deref()
    }

    pub fn edits(&self) -> &[CellChange] {
        &self.edits
    }

    pub fn tests(&self) -> &BTreeMap<String, Vec<TestCase>> {
        &self.tests
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    /// Fragments enumerated with the session config and automatic targets.
    pub fn fragments(&mut self) -> &[Fragment] {
        if self.fragments.is_none() {
            self.fragments = Some(enumerate_fragments(&self.analysis, &Targets::Auto, &self.config));
        }
        self.fragments.as_deref().unwrap_or_default()
    }

    pub fn fragment(&self, id: &str) -> Result<Fragment, SessionError> {
        Ok(resolve_fragment(&self.analysis, id)?)
    }

    pub fn set_focus(&mut self, id: Option<&str>) -> Result<(), SessionError> {
        match id {
            Some(id) => {
                self.fragment(id)?;
                self.focus = Some(id.to_string());
            }
            None => self.focus = None,
        }
        Ok(())
    }

    /// A what-if edit on the working copy. Under focus only border inputs
    /// of the focused fragment are editable.
    pub fn set_cell(&mut self, addr: CellAddress, value: Value) -> Result<&CellChange, SessionError> {
        if let Some(id) = &self.focus {
            let f = self.fragment(id)?;
            if !f.border_inputs.contains(&addr) {
                return Err(SessionError::ReadOnly(addr, id.clone()));
            }
        }
        let change = self.working.set_cell_value(addr, value);
        self.edits.push(change);
        self.version += 1;
        Ok(self.edits.last().expect("just pushed"))
    }

    /// Undoes the most recent scratch edit.
    pub fn undo(&mut self) -> Option<CellChange> {
        let change = self.edits.pop()?;
        self.working.revert(&change);
        self.version += 1;
        Some(change)
    }

    /// Makes the working copy the committed workbook.
    pub fn commit(&mut self) -> usize {
        let applied = self.edits.len();
        if applied == 0 {
            return 0;
        }
        self.committed = Arc::new(self.working.clone());
        self.analysis = Analysis::new(Arc::clone(&self.committed));
        self.fragments = None;
        self.edits.clear();
        self.version += 1;
        applied
    }

    /// Cells with their current values and focus flags. Blank border inputs
    /// of the focused fragment are included so they can be edited.
    pub fn grid(&self) -> Result<Grid, SessionError> {
        let values = evaluate(&self.working, &BTreeMap::new());
        let focused = self.focus.as_deref().map(|id| self.fragment(id)).transpose()?;
        let mut addrs: BTreeSet<CellAddress> = self.working.cells().map(|(a, _)| a).collect();
        if let Some(f) = &focused {
            addrs.extend(f.footprint());
        }
        let cells = addrs
            .into_iter()
            .map(|addr| {
                let content = self.working.get(addr);
                let value = values.get(addr).clone();
                let (in_fragment, border_input, output) = match &focused {
                    Some(f) => (
                        f.cells.contains(&addr),
                        f.border_inputs.contains(&addr),
                        f.outputs.contains(&addr),
                    ),
                    None => (false, false, false),
                };
                let dimmed = focused.is_some() && !in_fragment && !border_input;
                GridCell {
                    addr,
                    kind: content.kind(),
                    display: value.display(),
                    value,
                    formula: content.formula().map(|f| f.text().to_string()),
                    in_fragment,
                    border_input,
                    output,
                    dimmed,
                    read_only: focused.is_some() && !border_input,
                }
            })
            .collect();
        Ok(Grid {
            version: self.version,
            focus: self.focus.clone(),
            cells,
        })
    }

    /// Captures new tests for a fragment from the working copy and stores
    /// them with fresh ids.
    pub fn generate_tests(
        &mut self,
        fragment_id: &str,
        generation: Generation,
        spec: &InputSpec,
    ) -> Result<Vec<TestCase>, SessionError> {
        let f = self.fragment(fragment_id)?;
        let cases: Vec<(BTreeMap<CellAddress, Value>, Option<u64>)> = match generation {
            Generation::Random { seed, count } => (0..count as u64)
                .map(|i| {
                    let s = seed.wrapping_add(i);
                    generate_inputs(&f, spec, s).map(|inputs| (inputs, Some(s)))
                })
                .collect::<Result<_, _>>()?,
            Generation::Boundary => boundary_cases(&f, spec)?
                .into_iter()
                .map(|inputs| (inputs, None))
                .collect(),
        };
        let mut created = Vec::with_capacity(cases.len());
        for (inputs, seed) in cases {
            let mut t = capture_expected(&self.working, &f, inputs, seed)?;
            t.id = self.fresh_test_id();
            created.push(t);
        }
        self.tests
            .entry(f.id.clone())
            .or_default()
            .extend(created.iter().cloned());
        Ok(created)
    }

    /// Stores a user-written test.
    pub fn add_test(
        &mut self,
        fragment_id: &str,
        inputs: BTreeMap<CellAddress, Value>,
        expected: BTreeMap<CellAddress, Value>,
    ) -> Result<TestCase, SessionError> {
        let f = self.fragment(fragment_id)?;
        let mut t = TestCase {
            id: String::new(),
            fragment_id: f.id.clone(),
            origin: Origin::User,
            seed: None,
            inputs,
            expected,
        };
        validate_test(&f, &t)?;
        t.id = self.fresh_test_id();
        self.tests.entry(f.id).or_default().push(t.clone());
        Ok(t)
    }

    fn fresh_test_id(&mut self) -> String {
        let id = format!("t{}", self.next_test);
        self.next_test += 1;
        id
    }

    pub fn find_test(&self, id: &str) -> Option<&TestCase> {
        self.tests.values().flatten().find(|t| t.id == id)
    }

    /// Replays stored tests on the working copy, fragment by fragment.
    /// Tests whose fragment no longer resolves, or whose inputs no longer
    /// cover its border, are reported as stale instead of being run.
    pub fn run_tests(&self, fragment_id: Option<&str>) -> Result<SessionReport, SessionError> {
        let mut out = SessionReport::default();
        let selected: Vec<(&String, &Vec<TestCase>)> = match fragment_id {
            Some(id) => {
                Recipe::parse(id)?;
                self.tests.get_key_value(id).into_iter().collect()
            }
            None => self.tests.iter().collect(),
        };
        for (id, tests) in selected {
            let f = match self.fragment(id) {
                Ok(f) => f,
                Err(e) => {
                    out.stale.extend(tests.iter().map(|t| StaleTest {
                        test_id: t.id.clone(),
                        fragment_id: id.clone(),
                        reason: e.to_string(),
                    }));
                    continue;
                }
            };
            let mut runnable = Vec::new();
            for t in tests {
                match validate_test(&f, t) {
                    Ok(()) => runnable.push(t.clone()),
                    Err(e) => out.stale.push(StaleTest {
                        test_id: t.id.clone(),
                        fragment_id: id.clone(),
                        reason: e.to_string(),
                    }),
                }
            }
            out.report.extend(run_tests(&self.working, &f, &runnable)?);
        }
        Ok(out)
    }

    pub fn falsify(
        &self,
        fragment_id: &str,
        property: &str,
        spec: &InputSpec,
        trials: usize,
        seed: u64,
    ) -> Result<FalsifyOutcome, SessionError> {
        let f = self.fragment(fragment_id)?;
        let property = PropertySpec::parse(property)?;
        Ok(falsify_property(&self.working, &f, &property, spec, trials, seed)?)
    }

    /// Records a label. A label naming a test must target one of that
    /// test's expected outputs.
    pub fn add_label(&mut self, record: LabelRecord) -> Result<(), SessionError> {
        if let Some(id) = &record.test_id {
            let test = self
                .find_test(id)
                .ok_or_else(|| SessionError::UnknownTest(id.clone()))?;
            if !test.expected.contains_key(&record.output) {
                return Err(SessionError::LabelOutput {
                    output: record.output,
                    test: id.clone(),
                });
            }
        }
        self.labels.push(record);
        Ok(())
    }

    pub fn clear_labels(&mut self) {
        self.labels.clear();
    }

    /// Labels with their covered cells. A label from a test whose fragment
    /// still resolves is cut at that fragment's border; anything else uses
    /// the whole-sheet cone.
    pub fn labeled_results(&self) -> Vec<LabeledResult> {
        self.labels
            .iter()
            .map(|l| {
                let fragment = l
                    .test_id
                    .as_deref()
                    .and_then(|id| self.find_test(id))
                    .and_then(|t| self.fragment(&t.fragment_id).ok());
                LabeledResult::new(l, covered_cells(&self.analysis, fragment.as_ref(), l.output))
            })
            .collect()
    }

    pub fn diagnose(&self, kmax: usize) -> Result<DiagnosisReport, SessionError> {
        Ok(diagnose(&self.labeled_results(), kmax)?)
    }

    /// Writes the session directory. Test files of fragments without tests
    /// are removed.
    pub fn save(&self, dir: &Path) -> Result<(), SessionError> {
        let tests_dir = dir.join("tests");
        fs::create_dir_all(&tests_dir).map_err(|e| file_error(&tests_dir, e))?;
        let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| file_error(&path, e));

        write(dir.join("workbook.json"), self.committed.to_json())?;
        let doc = SessionDoc {
            version: SESSION_FILE_VERSION,
            workbook_version: self.version,
            focus: self.focus.clone(),
            config: self.config,
            next_test: self.next_test,
            edits: self
                .edits
                .iter()
                .map(|c| Edit {
                    addr: c.addr,
                    value: c.new.clone(),
                })
                .collect(),
        };
        write(dir.join("session.json"), pretty(&doc))?;

        let mut keep = BTreeSet::new();
        for (id, tests) in &self.tests {
            if tests.is_empty() {
                continue;
            }
            let name = format!("{id}.json");
            write(tests_dir.join(&name), TestFile::new(id, tests.clone()).to_json())?;
            keep.insert(name);
        }
        let entries = fs::read_dir(&tests_dir).map_err(|e| file_error(&tests_dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| file_error(&tests_dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(".json") && !keep.contains(&name) {
                fs::remove_file(entry.path()).map_err(|e| file_error(&entry.path(), e))?;
            }
        }

        let labels = dir.join("labels.json");
        if self.labels.is_empty() {
            if labels.exists() {
                fs::remove_file(&labels).map_err(|e| file_error(&labels, e))?;
            }
        } else {
            write(labels, pretty(&self.labels))?;
        }
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self, SessionError> {
        let read = |path: &Path| fs::read_to_string(path).map_err(|e| file_error(path, e));

        let wb_path = dir.join("workbook.json");
        let workbook = Workbook::from_json(&read(&wb_path)?).map_err(|e| file_error(&wb_path, e))?;
        let mut session = Session::new(workbook);

        let doc_path = dir.join("session.json");
        let doc: SessionDoc =
            serde_json::from_str(&read(&doc_path)?).map_err(|e| file_error(&doc_path, e))?;
        if doc.version != SESSION_FILE_VERSION {
            return Err(file_error(&doc_path, format!("unsupported version {}", doc.version)));
        }
        doc.config.validate().map_err(|e| file_error(&doc_path, e))?;
        session.config = doc.config;
        for edit in doc.edits {
            let change = session.working.set_cell_value(edit.addr, edit.value);
            session.edits.push(change);
        }
        if let Some(id) = &doc.focus {
            session.fragment(id).map_err(|e| file_error(&doc_path, e))?;
        }
        session.focus = doc.focus;

        let tests_dir = dir.join("tests");
        if tests_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&tests_dir)
                .map_err(|e| file_error(&tests_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            let mut seen_ids = BTreeSet::new();
            for path in paths {
                let file = TestFile::from_json(&read(&path)?).map_err(|e| file_error(&path, e))?;
                Recipe::parse(&file.fragment).map_err(|e| file_error(&path, e))?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
                if stem.as_deref() != Some(file.fragment.as_str()) {
                    return Err(file_error(
                        &path,
                        format!("file name does not match fragment id `{}`", file.fragment),
                    ));
                }
                for t in &file.tests {
                    if !seen_ids.insert(t.id.clone()) {
                        return Err(file_error(&path, format!("duplicate test id `{}`", t.id)));
                    }
                }
                session.tests.insert(file.fragment, file.tests);
            }
        }

        let labels_path = dir.join("labels.json");
        if labels_path.exists() {
            session.labels = serde_json::from_str(&read(&labels_path)?)
                .map_err(|e| file_error(&labels_path, e))?;
        }
        session.version = doc.workbook_version;
        session.next_test = doc.next_test;
        Ok(session)
    }

    /// Writes `diagnosis.json` next to the other session files.
    pub fn save_diagnosis(dir: &Path, report: &DiagnosisReport) -> Result<(), SessionError> {
        let path = dir.join("diagnosis.json");
        fs::write(&path, report.to_json()).map_err(|e| file_error(&path, e))
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}
