//! Fragment-based testing and debugging for spreadsheet programs.
//!
//! A workbook is parsed into formula ASTs and a cell data-flow graph.
//! Copy-equivalent formulas are grouped, and small closed sub-computations
//! ("fragments") are extracted so they can be tested at their border
//! inputs. User verdicts on fragment outputs then feed a hitting-set
//! diagnosis and a spectrum ranking of suspicious formulas.

pub mod address;
pub mod analysis;
pub mod corpus;
pub mod diagnosis;
pub mod equivalence;
pub mod eval;
pub mod formula;
pub mod fragment;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod session;
pub mod value;
pub mod workbook;

pub use address::{parse_address, CellAddress};
pub use value::{ErrorKind, Value};
pub use workbook::{CellContent, Workbook};
