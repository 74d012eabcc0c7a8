//! Four-state annotation codes, binary recoding and label matrices.

use serde::{Deserialize, Serialize};

use crate::corpus::Report;
use crate::error::LabelError;
use crate::schema::{CellId, LabelSchema};

/// Annotation code for one organ-finding cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum RawLabel {
    Absent,
    Present,
    NotVisible,
    Resected,
}

impl RawLabel {
    pub fn code(self) -> u8 {
        match self {
            RawLabel::Absent => 0,
            RawLabel::Present => 1,
            RawLabel::NotVisible => 2,
            RawLabel::Resected => 9,
        }
    }

    /// Only an explicit "present" annotation counts as positive.
    pub fn is_positive(self) -> bool {
        self == RawLabel::Present
    }
}

impl TryFrom<u8> for RawLabel {
    type Error = u8;

    fn try_from(code: u8) -> Result<Self, u8> {
        match code {
            0 => Ok(RawLabel::Absent),
            1 => Ok(RawLabel::Present),
            2 => Ok(RawLabel::NotVisible),
            9 => Ok(RawLabel::Resected),
            other => Err(other),
        }
    }
}

impl From<RawLabel> for u8 {
    fn from(label: RawLabel) -> u8 {
        label.code()
    }
}

/// Recodes a full grid of raw codes (schema order) to presence/absence.
///
/// `1` stays `1`; `0`, `2` and `9` become `0`. Binary input is a fixed point,
/// so the function is idempotent.
pub fn recode_binary(schema: &LabelSchema, codes: &[u8]) -> Result<Vec<u8>, LabelError> {
    if codes.len() != schema.n_cells() {
        return Err(LabelError::WrongCellCount {
            expected: schema.n_cells(),
            got: codes.len(),
        });
    }
    codes
        .iter()
        .enumerate()
        .map(|(i, &code)| {
            RawLabel::try_from(code)
                .map(|l| u8::from(l.is_positive()))
                .map_err(|code| LabelError::UnknownCode {
                    cell: schema.cell(i).to_string(),
                    code,
                })
        })
        .collect()
}

/// Dense 0/1 matrix with one row per report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLabelMatrix {
    row_ids: Vec<String>,
    cols: Vec<CellId>,
    values: Vec<u8>,
}

impl BinaryLabelMatrix {
    /// Builds a matrix from rows of 0/1 values; any other value is coerced
    /// through `!= 0`.
    pub fn new(row_ids: Vec<String>, cols: Vec<CellId>, rows: Vec<Vec<u8>>) -> Self {
        assert_eq!(row_ids.len(), rows.len(), "one id per row");
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for row in rows {
            assert_eq!(row.len(), cols.len(), "row width must match columns");
            values.extend(row.into_iter().map(|v| u8::from(v != 0)));
        }
        BinaryLabelMatrix {
            row_ids,
            cols,
            values,
        }
    }

    /// Binary gold matrix over every schema cell. Reports without gold labels
    /// are rejected.
    pub fn from_reports(schema: &LabelSchema, reports: &[Report]) -> Result<Self, LabelError> {
        let mut rows = Vec::with_capacity(reports.len());
        for report in reports {
            let gold = report
                .gold
                .as_ref()
                .ok_or_else(|| LabelError::MissingGold(report.report_id.clone()))?;
            rows.push(gold.iter().map(|l| u8::from(l.is_positive())).collect());
        }
        Ok(Self::new(
            reports.iter().map(|r| r.report_id.clone()).collect(),
            schema.cells().to_vec(),
            rows,
        ))
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn cols(&self) -> &[CellId] {
        &self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let w = self.cols.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols.len() + col]
    }

    pub fn column(&self, col: usize) -> Vec<u8> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.cols.len()];
        for r in 0..self.n_rows() {
            for (s, &v) in sums.iter_mut().zip(self.row(r)) {
                *s += v as usize;
            }
        }
        sums
    }

    pub fn col_index(&self, cell: &CellId) -> Option<usize> {
        self.cols.iter().position(|c| c == cell)
    }

    /// Keeps only the listed columns, in the order given.
    pub fn select(&self, cells: &[CellId]) -> Result<Self, LabelError> {
        let idx = cells
            .iter()
            .map(|c| {
                self.col_index(c).ok_or_else(|| {
                    LabelError::Schema(crate::error::SchemaError::UnknownCell(c.to_string()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = (0..self.n_rows())
            .map(|r| idx.iter().map(|&c| self.get(r, c)).collect())
            .collect();
        Ok(Self::new(self.row_ids.clone(), cells.to_vec(), rows))
    }
}

/// Cells whose positive count reaches `min_positives`, in column order.
pub fn filter_targets(matrix: &BinaryLabelMatrix, min_positives: usize) -> Vec<CellId> {
    matrix
        .column_sums()
        .into_iter()
        .zip(matrix.cols())
        .filter(|(sum, _)| *sum >= min_positives.max(1))
        .map(|(_, cell)| cell.clone())
        .collect()
}
