//! Report records and the line-delimited corpus file format.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, SegmentError};
use crate::io;
use crate::labels::RawLabel;
use crate::parsing::{self, HeaderLexicon, Provenance, SectionPair};
use crate::schema::{CellId, LabelSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "MRE")]
    Mre,
    #[serde(rename = "CTE")]
    Cte,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

/// One imaging study.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub report_id: String,
    pub patient_id: String,
    pub study_date: NaiveDate,
    pub modality: Modality,
    pub sex: Sex,
    pub age_years: f64,
    pub raw_text: String,
    /// Explicit Findings section, when the record carries one.
    pub findings: Option<String>,
    /// Explicit Impression section, when the record carries one.
    pub impression: Option<String>,
    /// Four-state gold labels in schema cell order.
    pub gold: Option<Vec<RawLabel>>,
}

impl Report {
    /// Findings/Impression pair. Explicit record fields take precedence over
    /// sections parsed out of `raw_text`.
    pub fn sections(&self, lexicon: &HeaderLexicon) -> Result<SectionPair, SegmentError> {
        let explicit = |s: &Option<String>| {
            s.as_deref()
                .map(parsing::normalize_text)
                .filter(|t| !t.is_empty())
        };
        match (explicit(&self.findings), explicit(&self.impression)) {
            (Some(findings_text), Some(impression_text)) => Ok(SectionPair {
                findings_text,
                impression_text,
                provenance: Provenance::Explicit,
            }),
            (findings, impression) => {
                let parsed = parsing::segment_report(&self.raw_text, lexicon);
                match (parsed, findings) {
                    (Ok(mut pair), f) => {
                        if let Some(f) = f {
                            pair.findings_text = f;
                        }
                        if let Some(i) = impression {
                            pair.impression_text = i;
                        }
                        Ok(pair)
                    }
                    (Err(e), Some(f)) => match impression {
                        Some(i) => Ok(SectionPair {
                            findings_text: f,
                            impression_text: i,
                            provenance: Provenance::Explicit,
                        }),
                        None => Err(match e {
                            SegmentError::NoImpressionHeader { .. } => {
                                SegmentError::NoImpressionHeader { findings: f }
                            }
                            other => other,
                        }),
                    },
                    (Err(e), None) => Err(e),
                }
            }
        }
    }

    /// Findings text used as the premise of every prompt for this report.
    /// Reports without an impression header still yield their findings.
    pub fn premise(&self, lexicon: &HeaderLexicon) -> Result<String, SegmentError> {
        match self.sections(lexicon) {
            Ok(pair) => Ok(pair.findings_text),
            Err(SegmentError::NoImpressionHeader { findings }) if !findings.is_empty() => {
                Ok(findings)
            }
            Err(SegmentError::NoImpressionHeader { .. }) => {
                Err(SegmentError::EmptySection("findings"))
            }
            Err(e) => Err(e),
        }
    }

    /// Binary gold (present = 1) in schema order.
    pub fn binary_gold(&self) -> Option<Vec<u8>> {
        self.gold
            .as_ref()
            .map(|g| g.iter().map(|l| u8::from(l.is_positive())).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportRecord {
    report_id: String,
    patient_id: String,
    study_date: NaiveDate,
    modality: Modality,
    sex: Sex,
    age_years: f64,
    raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    findings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    impression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<BTreeMap<String, u8>>,
}

impl ReportRecord {
    fn into_report(self, schema: &LabelSchema) -> Result<Report, String> {
        if self.report_id.is_empty() {
            return Err("report_id is empty".into());
        }
        if !(self.age_years.is_finite() && self.age_years >= 0.0) {
            return Err(format!(
                "age_years {} is not a non-negative number",
                self.age_years
            ));
        }
        let gold = match self.gold {
            None => None,
            Some(map) => {
                let mut labels: Vec<Option<RawLabel>> = vec![None; schema.n_cells()];
                for (key, code) in map {
                    let cell: CellId = key.parse().map_err(|e| format!("{e}"))?;
                    let idx = schema
                        .cell_index(&cell)
                        .ok_or_else(|| format!("gold cell {key} is not in the schema"))?;
                    labels[idx] = Some(
                        RawLabel::try_from(code)
                            .map_err(|c| format!("gold cell {key} has unknown code {c}"))?,
                    );
                }
                let missing = labels.iter().filter(|l| l.is_none()).count();
                if missing > 0 {
                    return Err(format!(
                        "gold map is missing {missing} of {} cells",
                        schema.n_cells()
                    ));
                }
                Some(labels.into_iter().map(Option::unwrap).collect())
            }
        };
        Ok(Report {
            report_id: self.report_id,
            patient_id: self.patient_id,
            study_date: self.study_date,
            modality: self.modality,
            sex: self.sex,
            age_years: self.age_years,
            raw_text: self.raw_text,
            findings: self.findings,
            impression: self.impression,
            gold,
        })
    }

    fn from_report(report: &Report, schema: &LabelSchema) -> Self {
        ReportRecord {
            report_id: report.report_id.clone(),
            patient_id: report.patient_id.clone(),
            study_date: report.study_date,
            modality: report.modality,
            sex: report.sex,
            age_years: report.age_years,
            raw_text: report.raw_text.clone(),
            findings: report.findings.clone(),
            impression: report.impression.clone(),
            gold: report.gold.as_ref().map(|g| {
                schema
                    .cells()
                    .iter()
                    .zip(g)
                    .map(|(c, l)| (c.to_string(), l.code()))
                    .collect()
            }),
        }
    }
}

/// Ordered collection of reports with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub reports: Vec<Report>,
}

impl Corpus {
    pub fn new(reports: Vec<Report>) -> Self {
        Corpus { reports }
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Report> {
        self.reports.iter()
    }

    pub fn get(&self, report_id: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.report_id == report_id)
    }

    /// Reports whose id is in `ids`, preserving corpus order.
    pub fn subset(&self, ids: &HashSet<String>) -> Corpus {
        Corpus::new(
            self.reports
                .iter()
                .filter(|r| ids.contains(&r.report_id))
                .cloned()
                .collect(),
        )
    }
}

/// Reads a corpus file, rejecting malformed records with their line numbers.
pub fn load_corpus(path: &Path, schema: &LabelSchema) -> Result<Corpus, CorpusError> {
    let numbered = io::read_lines_with(path, |line, number| {
        let record: ReportRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        record.into_report(schema).map(|r| (number, r))
    })?;
    let mut seen = HashSet::new();
    for (line, report) in &numbered {
        if !seen.insert(report.report_id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: report.report_id.clone(),
                line: *line,
            });
        }
    }
    Ok(Corpus::new(numbered.into_iter().map(|(_, r)| r).collect()))
}

pub fn save_corpus(
    path: &Path,
    corpus: &Corpus,
    schema: &LabelSchema,
    header: &[String],
) -> Result<(), CorpusError> {
    let records: Vec<ReportRecord> = corpus
        .reports
        .iter()
        .map(|r| ReportRecord::from_report(r, schema))
        .collect();
    io::write_jsonl(path, header, &records)
}
