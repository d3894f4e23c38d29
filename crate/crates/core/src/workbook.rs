//! Workbook model and its document formats.
//!
//! The JSON document looks like
//! `{"version":1,"sheet":{"name":"…","cells":[{"addr":"B2","value":100.0}, …]}}`.
//! Cells are written in row-major address order so saving is deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::{parse_address, AddressError, CellAddress};
use crate::formula::{parse_formula, print_formula, Expr, FormulaError};
use crate::value::{ErrorKind, Value};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorkbookError {
    #[error("syntax error at {addr}, offset {}: {source}", source.offset)]
    Formula {
        addr: CellAddress,
        #[source]
        source: FormulaError,
    },
    #[error("duplicate cell address {0}")]
    DuplicateAddress(CellAddress),
    #[error("bad cell address: {0}")]
    Address(#[from] AddressError),
    #[error("cell {0} must carry exactly one of value, text, formula or error")]
    AmbiguousCell(String),
    #[error("workbook has no cells")]
    Empty,
    #[error("unsupported document version {0}")]
    Version(u32),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A formula together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    text: String,
    expr: Expr,
}

impl Formula {
    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        Ok(Self {
            expr: parse_formula(text)?,
            text: text.to_string(),
        })
    }

    /// Builds a formula from an AST; the text is the canonical printing.
    pub fn from_expr(expr: Expr) -> Self {
        Self {
            text: print_formula(&expr),
            expr,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum CellContent {
    Literal(Value),
    Formula(Formula),
    #[default]
    Blank,
}

impl CellContent {
    pub fn formula(&self) -> Option<&Formula> {
        match self {
            CellContent::Formula(f) => Some(f),
            _ => None,
        }
    }

    pub fn is_formula(&self) -> bool {
        matches!(self, CellContent::Formula(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CellContent::Literal(_) => "literal",
            CellContent::Formula(_) => "formula",
            CellContent::Blank => "blank",
        }
    }
}

/// Undo record produced by [`Workbook::set_cell_value`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellChange {
    pub addr: CellAddress,
    pub previous: CellContent,
    pub new: Value,
    pub formula_overwritten: bool,
}

/// A single-sheet workbook. Blank cells are not stored; reading any
/// in-bounds address that holds nothing yields [`CellContent::Blank`].
#[derive(Debug, Clone, PartialEq)]
pub struct Workbook {
    name: String,
    cells: BTreeMap<CellAddress, CellContent>,
}

static BLANK: CellContent = CellContent::Blank;

impl Workbook {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cells: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn get(&self, addr: CellAddress) -> &CellContent {
        self.cells.get(&addr).unwrap_or(&BLANK)
    }

    pub fn formula(&self, addr: CellAddress) -> Option<&Formula> {
        self.get(addr).formula()
    }

    /// Non-blank cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (CellAddress, &CellContent)> {
        self.cells.iter().map(|(a, c)| (*a, c))
    }

    pub fn formulas(&self) -> impl Iterator<Item = (CellAddress, &Formula)> {
        self.cells
            .iter()
            .filter_map(|(a, c)| c.formula().map(|f| (*a, f)))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Stores content at `addr`; storing `Blank` clears the cell.
    pub fn set(&mut self, addr: CellAddress, content: CellContent) {
        match content {
            CellContent::Blank | CellContent::Literal(Value::Blank) => {
                self.cells.remove(&addr);
            }
            other => {
                self.cells.insert(addr, other);
            }
        }
    }

    pub fn set_formula(&mut self, addr: CellAddress, text: &str) -> Result<(), WorkbookError> {
        let formula = Formula::parse(text).map_err(|source| WorkbookError::Formula { addr, source })?;
        self.set(addr, CellContent::Formula(formula));
        Ok(())
    }

    /// Overwrites `addr` with a literal, replacing any formula. The returned
    /// record restores the previous content via [`Workbook::revert`].
    pub fn set_cell_value(&mut self, addr: CellAddress, value: Value) -> CellChange {
        let previous = self.get(addr).clone();
        let formula_overwritten = previous.is_formula();
        self.set(addr, CellContent::Literal(value.clone()));
        CellChange {
            addr,
            previous,
            new: value,
            formula_overwritten,
        }
    }

    pub fn revert(&mut self, change: &CellChange) {
        self.set(change.addr, change.previous.clone());
    }

    pub fn to_document(&self) -> Document {
        Document {
            version: DOCUMENT_VERSION,
            sheet: SheetDoc {
                name: self.name.clone(),
                cells: self
                    .cells
                    .iter()
                    .map(|(addr, content)| CellDoc::from_content(*addr, content))
                    .collect(),
            },
        }
    }

    pub fn from_document(doc: Document) -> Result<Self, WorkbookError> {
        if doc.version != DOCUMENT_VERSION {
            return Err(WorkbookError::Version(doc.version));
        }
        let mut wb = Workbook::new(doc.sheet.name);
        for cell in doc.sheet.cells {
            let addr = parse_address(&cell.addr)?;
            if wb.cells.contains_key(&addr) {
                return Err(WorkbookError::DuplicateAddress(addr));
            }
            let content = cell.into_content(addr)?;
            wb.cells.insert(addr, content);
        }
        if wb.is_empty() {
            return Err(WorkbookError::Empty);
        }
        Ok(wb)
    }

    pub fn from_json(text: &str) -> Result<Self, WorkbookError> {
        Self::from_document(serde_json::from_str(text)?)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_document()).expect("serializable");
        out.push('\n');
        out
    }

    /// Reads CSV where row `i`, field `j` lands at column `j+1`, row `i+1`.
    pub fn from_csv(name: &str, text: &str) -> Result<Self, WorkbookError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut wb = Workbook::new(name);
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let addr = CellAddress::checked(j as i64 + 1, i as i64 + 1).ok_or_else(|| {
                    AddressError::OutOfBounds(format!("row {}, field {}", i + 1, j + 1))
                })?;
                if field.starts_with('=') {
                    wb.set_formula(addr, field)?;
                } else {
                    wb.set(addr, CellContent::Literal(parse_literal(field)));
                }
            }
        }
        if wb.is_empty() {
            return Err(WorkbookError::Empty);
        }
        Ok(wb)
    }

    /// Loads `.csv` files as CSV and everything else as a JSON document.
    pub fn load(path: &Path) -> Result<Self, WorkbookError> {
        let text = std::fs::read_to_string(path)?;
        let is_csv = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
        if is_csv {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "Sheet1".to_string());
            Self::from_csv(&name, &text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), WorkbookError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Literal typed the way a CSV cell would be: number, `TRUE`/`FALSE`, empty
/// for Blank, text otherwise.
pub fn parse_literal(field: &str) -> Value {
    if field.is_empty() {
        return Value::Blank;
    }
    match field {
        "TRUE" => return Value::Boolean(true),
        "FALSE" => return Value::Boolean(false),
        _ => {}
    }
    // Rust accepts "inf"/"NaN"; those stay text.
    match field.trim().parse::<f64>() {
        Ok(n) if n.is_finite() => Value::Number(n),
        _ => Value::Text(field.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub version: u32,
    pub sheet: SheetDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetDoc {
    pub name: String,
    pub cells: Vec<CellDoc>,
}

/// One cell entry. Exactly one of the optional fields is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDoc {
    pub addr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorKind>,
}

impl CellDoc {
    fn from_content(addr: CellAddress, content: &CellContent) -> Self {
        let mut doc = CellDoc {
            addr: addr.to_string(),
            value: None,
            text: None,
            formula: None,
            error: None,
        };
        match content {
            CellContent::Formula(f) => doc.formula = Some(f.text().to_string()),
            CellContent::Literal(Value::Number(n)) => doc.value = Some(serde_json::json!(n)),
            CellContent::Literal(Value::Boolean(b)) => doc.value = Some(serde_json::json!(b)),
            CellContent::Literal(Value::Text(t)) => doc.text = Some(t.clone()),
            CellContent::Literal(Value::Error(kind)) => doc.error = Some(*kind),
            CellContent::Literal(Value::Blank) | CellContent::Blank => {}
        }
        doc
    }

    fn into_content(self, addr: CellAddress) -> Result<CellContent, WorkbookError> {
        let present = [
            self.value.is_some(),
            self.text.is_some(),
            self.formula.is_some(),
            self.error.is_some(),
        ]
        .iter()
        .filter(|p| **p)
        .count();
        if present != 1 {
            return Err(WorkbookError::AmbiguousCell(self.addr));
        }
        if let Some(text) = self.formula {
            let formula =
                Formula::parse(&text).map_err(|source| WorkbookError::Formula { addr, source })?;
            return Ok(CellContent::Formula(formula));
        }
        if let Some(text) = self.text {
            return Ok(CellContent::Literal(Value::Text(text)));
        }
        if let Some(kind) = self.error {
            return Ok(CellContent::Literal(Value::Error(kind)));
        }
        match self.value.expect("counted") {
            serde_json::Value::Bool(b) => Ok(CellContent::Literal(Value::Boolean(b))),
            serde_json::Value::Number(n) => Ok(CellContent::Literal(Value::Number(
                n.as_f64().ok_or_else(|| WorkbookError::AmbiguousCell(self.addr.clone()))?,
            ))),
            _ => Err(WorkbookError::AmbiguousCell(self.addr)),
        }
    }
}
