//! A1-style cell addresses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Highest addressable column (`ZZ`).
pub const MAX_COL: u16 = 702;
/// Highest addressable row.
pub const MAX_ROW: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("malformed cell address `{0}`")]
    Malformed(String),
    #[error("cell address `{0}` is out of bounds (A1..ZZ100000)")]
    OutOfBounds(String),
}

/// A cell position on the single sheet of a workbook.
///
/// Both components are 1-based. Ordering is row-major: `(row, col)`
/// compared lexicographically, so `B1 < A2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress {
    // field order drives the derived Ord
    row: u32,
    col: u16,
}

impl CellAddress {
    pub fn new(col: u16, row: u32) -> Result<Self, AddressError> {
        if (1..=MAX_COL).contains(&col) && (1..=MAX_ROW).contains(&row) {
            Ok(Self { row, col })
        } else {
            Err(AddressError::OutOfBounds(format!("col {col}, row {row}")))
        }
    }

    /// Builds an address from possibly out-of-range signed coordinates.
    pub fn checked(col: i64, row: i64) -> Option<Self> {
        let col = u16::try_from(col).ok()?;
        let row = u32::try_from(row).ok()?;
        Self::new(col, row).ok()
    }

    pub fn col(self) -> u16 {
        self.col
    }

    pub fn row(self) -> u32 {
        self.row
    }

    pub fn offset(self, dcol: i64, drow: i64) -> Option<Self> {
        Self::checked(self.col as i64 + dcol, self.row as i64 + drow)
    }
}

/// Column index to letters: 1 → `A`, 27 → `AA`, 702 → `ZZ`.
pub fn column_name(col: u16) -> String {
    let mut n = col as u32;
    let mut out = Vec::with_capacity(2);
    while n > 0 {
        let rem = (n - 1) % 26;
        out.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Column letters (case-insensitive) to index. Returns `None` for anything
/// that is not one or more ASCII letters; the bound check is left to callers.
pub fn column_index(letters: &str) -> Option<u32> {
    if letters.is_empty() || letters.len() > 7 {
        return None;
    }
    let mut n: u32 = 0;
    for b in letters.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        n = n * 26 + (b.to_ascii_uppercase() - b'A' + 1) as u32;
    }
    Some(n)
}

/// Parses `A1`-style text (case-insensitive, no `$` markers).
pub fn parse_address(text: &str) -> Result<CellAddress, AddressError> {
    let split = text
        .find(|c: char| !c.is_ascii_alphabetic())
        .ok_or_else(|| AddressError::Malformed(text.to_string()))?;
    let (letters, digits) = text.split_at(split);
    if letters.is_empty() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(AddressError::Malformed(text.to_string()));
    }
    let col = column_index(letters).ok_or_else(|| AddressError::OutOfBounds(text.to_string()))?;
    let row: u64 = digits
        .parse()
        .map_err(|_| AddressError::OutOfBounds(text.to_string()))?;
    if row == 0 {
        return Err(AddressError::Malformed(text.to_string()));
    }
    if col > MAX_COL as u32 || row > MAX_ROW as u64 {
        return Err(AddressError::OutOfBounds(text.to_string()));
    }
    Ok(CellAddress {
        col: col as u16,
        row: row as u32,
    })
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", column_name(self.col), self.row)
    }
}

impl FromStr for CellAddress {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_address(s)
    }
}

impl Serialize for CellAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_address(&text).map_err(serde::de::Error::custom)
    }
}
