//! The organ × finding label grid.
//!
//! Cells are addressed either by a dense index (organ-major, so index order is
//! proximal-to-distal organ order with findings in schema order inside each
//! organ) or by a [`CellId`] of the form `"<Organ>.<Finding>"`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::SchemaError;

pub const ORGAN_COUNT: usize = 6;
pub const FINDING_COUNT: usize = 15;
pub const CELL_COUNT: usize = ORGAN_COUNT * FINDING_COUNT;

/// Organs ordered proximal to distal.
pub const DEFAULT_ORGANS: [&str; ORGAN_COUNT] =
    ["Jejunum", "Ileum", "Cecum", "Colon", "Sigmoid", "Rectum"];

pub const DEFAULT_FINDINGS: [&str; FINDING_COUNT] = [
    "Inflammation",
    "Phlegmon",
    "Fistula",
    "MesentericEdema",
    "Stenosis",
    "DWISignal",
    "Pseudosacculation",
    "Abscess",
    "CombSign",
    "WallThickness",
    "Ulcer",
    "BowelWallEdema",
    "WallEnhancement",
    "PreStenoticDilatation",
    "ReducedMotility",
];

/// Identifier of one organ-finding cell, e.g. `Ileum.WallThickness`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(String);

impl CellId {
    pub fn new(organ: &str, finding: &str) -> Self {
        CellId(format!("{organ}.{finding}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn organ(&self) -> &str {
        self.0.split_once('.').map(|(o, _)| o).unwrap_or(&self.0)
    }

    pub fn finding(&self) -> &str {
        self.0.split_once('.').map(|(_, f)| f).unwrap_or("")
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CellId {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((o, f)) if valid_name(o) && valid_name(f) => Ok(CellId(s.to_string())),
            _ => Err(SchemaError::MalformedCellId(s.to_string())),
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.contains('.') && !name.chars().any(char::is_whitespace)
}

/// Ordered organ and finding name lists defining the 6 × 15 grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct LabelSchema {
    organs: Vec<String>,
    findings: Vec<String>,
    cells: Vec<CellId>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    organs: Vec<String>,
    findings: Vec<String>,
}

impl TryFrom<SchemaFile> for LabelSchema {
    type Error = SchemaError;

    fn try_from(file: SchemaFile) -> Result<Self, Self::Error> {
        LabelSchema::new(file.organs, file.findings)
    }
}

impl From<LabelSchema> for SchemaFile {
    fn from(schema: LabelSchema) -> Self {
        SchemaFile {
            organs: schema.organs,
            findings: schema.findings,
        }
    }
}

impl Default for LabelSchema {
    fn default() -> Self {
        Self::standard().clone()
    }
}

impl LabelSchema {
    pub fn new(organs: Vec<String>, findings: Vec<String>) -> Result<Self, SchemaError> {
        if organs.len() != ORGAN_COUNT {
            return Err(SchemaError::WrongOrganCount(organs.len()));
        }
        if findings.len() != FINDING_COUNT {
            return Err(SchemaError::WrongFindingCount(findings.len()));
        }
        for name in organs.iter().chain(findings.iter()) {
            if !valid_name(name) {
                return Err(SchemaError::InvalidName(name.clone()));
            }
        }
        let mut seen = HashSet::new();
        for name in &organs {
            if !seen.insert(name.as_str()) {
                return Err(SchemaError::DuplicateName(name.clone()));
            }
        }
        seen.clear();
        for name in &findings {
            if !seen.insert(name.as_str()) {
                return Err(SchemaError::DuplicateName(name.clone()));
            }
        }
        let cells = organs
            .iter()
            .flat_map(|o| findings.iter().map(move |f| CellId::new(o, f)))
            .collect();
        Ok(LabelSchema {
            organs,
            findings,
            cells,
        })
    }

    /// The built-in schema shared by every caller that doesn't load one.
    pub fn standard() -> &'static LabelSchema {
        static SCHEMA: OnceLock<LabelSchema> = OnceLock::new();
        SCHEMA.get_or_init(|| {
            LabelSchema::new(
                DEFAULT_ORGANS.iter().map(|s| s.to_string()).collect(),
                DEFAULT_FINDINGS.iter().map(|s| s.to_string()).collect(),
            )
            .expect("built-in schema is valid")
        })
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| SchemaError::Parse(e.to_string()))
    }

    pub fn organs(&self) -> &[String] {
        &self.organs
    }

    pub fn findings(&self) -> &[String] {
        &self.findings
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, index: usize) -> &CellId {
        &self.cells[index]
    }

    pub fn cell_index(&self, cell: &CellId) -> Option<usize> {
        let organ = self.organ_index(cell.organ())?;
        let finding = self.finding_index(cell.finding())?;
        Some(organ * FINDING_COUNT + finding)
    }

    pub fn require_cell(&self, cell: &CellId) -> Result<usize, SchemaError> {
        self.cell_index(cell)
            .ok_or_else(|| SchemaError::UnknownCell(cell.to_string()))
    }

    pub fn organ_index(&self, organ: &str) -> Option<usize> {
        self.organs.iter().position(|o| o == organ)
    }

    pub fn finding_index(&self, finding: &str) -> Option<usize> {
        self.findings.iter().position(|f| f == finding)
    }

    /// Organ index of a dense cell index.
    pub fn organ_of(&self, index: usize) -> usize {
        index / FINDING_COUNT
    }

    pub fn finding_of(&self, index: usize) -> usize {
        index % FINDING_COUNT
    }

    /// Dense indices of every cell belonging to `organ`.
    pub fn organ_cells(&self, organ: usize) -> std::ops::Range<usize> {
        organ * FINDING_COUNT..(organ + 1) * FINDING_COUNT
    }

    /// Resolves a list of cell ids to dense indices sorted in schema order.
    pub fn resolve_cells(&self, cells: &[CellId]) -> Result<Vec<usize>, SchemaError> {
        let mut out = cells
            .iter()
            .map(|c| self.require_cell(c))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}
