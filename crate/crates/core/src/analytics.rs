//! Population aggregates over predicted (or gold) label rows: organ
//! involvement, prevalence by sex and age group, and pairwise correlation.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sex};
use crate::error::AnalyticsError;
use crate::evaluation::Metric;
use crate::inference::{CellScore, PredictionRow};
use crate::schema::{CellId, LabelSchema};

/// Ages above this are adult; this age itself is pediatric.
pub const ADULT_AGE_EXCLUSIVE: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Adult,
    Pediatric,
}

impl AgeGroup {
    pub fn of(age_years: f64) -> AgeGroup {
        if age_years > ADULT_AGE_EXCLUSIVE {
            AgeGroup::Adult
        } else {
            AgeGroup::Pediatric
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demographic {
    pub patient_id: String,
    pub study_date: NaiveDate,
    pub sex: Sex,
    pub age_years: f64,
}

/// Demographics keyed by report id.
pub type Demographics = HashMap<String, Demographic>;

pub fn demographics(corpus: &Corpus) -> Demographics {
    corpus
        .iter()
        .map(|r| {
            (
                r.report_id.clone(),
                Demographic {
                    patient_id: r.patient_id.clone(),
                    study_date: r.study_date,
                    sex: r.sex,
                    age_years: r.age_years,
                },
            )
        })
        .collect()
}

/// Gold labels in prediction-row shape, so analytics can run on either.
pub fn gold_rows(
    corpus: &Corpus,
    schema: &LabelSchema,
    targets: &[CellId],
) -> Result<Vec<PredictionRow>, AnalyticsError> {
    let idx: Vec<usize> = targets
        .iter()
        .map(|c| {
            schema
                .cell_index(c)
                .ok_or_else(|| AnalyticsError::UnknownCell(c.to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok(corpus
        .iter()
        .filter_map(|r| {
            let gold = r.binary_gold()?;
            let cells: BTreeMap<CellId, u8> = targets
                .iter()
                .zip(&idx)
                .map(|(c, &i)| (c.clone(), gold[i]))
                .collect();
            let scores = cells
                .iter()
                .map(|(c, &v)| (c.clone(), CellScore::Score(f64::from(v))))
                .collect();
            Some(PredictionRow {
                report_id: r.report_id.clone(),
                cells,
                scores,
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganInvolvement {
    pub organ: String,
    pub positive_count: usize,
    pub denominator: usize,
    pub fraction: Metric,
}

fn organ_positive(row: &PredictionRow, schema: &LabelSchema, organ: usize) -> bool {
    row.cells
        .iter()
        .any(|(cell, &v)| v == 1 && schema.organ_index(cell.organ()) == Some(organ))
}

/// Per organ: reports with at least one positive cell in that organ.
pub fn organ_involvement(
    rows: &[PredictionRow],
    schema: &LabelSchema,
) -> Result<Vec<OrganInvolvement>, AnalyticsError> {
    if rows.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    check_cells(rows, schema)?;
    Ok(schema
        .organs()
        .iter()
        .enumerate()
        .map(|(o, organ)| {
            let positive_count = rows.iter().filter(|r| organ_positive(r, schema, o)).count();
            OrganInvolvement {
                organ: organ.clone(),
                positive_count,
                denominator: rows.len(),
                fraction: Metric::ratio(positive_count as f64, rows.len() as f64),
            }
        })
        .collect())
}

fn check_cells(rows: &[PredictionRow], schema: &LabelSchema) -> Result<(), AnalyticsError> {
    for row in rows {
        for cell in row.cells.keys() {
            if schema.cell_index(cell).is_none() {
                return Err(AnalyticsError::UnknownCell(cell.to_string()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "by", content = "value", rename_all = "snake_case")]
pub enum Stratum {
    All,
    Sex(Sex),
    Age(AgeGroup),
}

impl Stratum {
    pub fn name(&self) -> String {
        match self {
            Stratum::All => "all".into(),
            Stratum::Sex(Sex::Male) => "sex=M".into(),
            Stratum::Sex(Sex::Female) => "sex=F".into(),
            Stratum::Age(AgeGroup::Adult) => "age=adult".into(),
            Stratum::Age(AgeGroup::Pediatric) => "age=pediatric".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum PrevalenceTarget {
    Cell(CellId),
    /// A finding in any organ.
    Finding(String),
    /// Any finding in an organ.
    Organ(String),
}

impl PrevalenceTarget {
    fn kind(&self) -> &'static str {
        match self {
            PrevalenceTarget::Cell(_) => "cell",
            PrevalenceTarget::Finding(_) => "finding",
            PrevalenceTarget::Organ(_) => "organ",
        }
    }

    fn name(&self) -> &str {
        match self {
            PrevalenceTarget::Cell(c) => c.as_str(),
            PrevalenceTarget::Finding(f) | PrevalenceTarget::Organ(f) => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedPrevalence {
    pub stratum: Stratum,
    pub target: PrevalenceTarget,
    pub positive_count: usize,
    pub denominator: usize,
    /// Undefined when the stratum is empty.
    pub fraction: Metric,
}

impl StratifiedPrevalence {
    pub fn is_empty_stratum(&self) -> bool {
        self.denominator == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrataConfig {
    pub by_sex: bool,
    pub by_age: bool,
    /// Keep only the latest visit per patient (ties broken by report id).
    pub per_patient: bool,
}

impl Default for StrataConfig {
    fn default() -> Self {
        StrataConfig {
            by_sex: true,
            by_age: true,
            per_patient: false,
        }
    }
}

/// Latest visit per patient, in input order.
fn dedup_patients<'a>(
    rows: &'a [PredictionRow],
    demo: &Demographics,
) -> Result<Vec<&'a PredictionRow>, AnalyticsError> {
    let mut latest: HashMap<&str, (NaiveDate, &str)> = HashMap::new();
    for row in rows {
        let d = demo
            .get(&row.report_id)
            .ok_or_else(|| AnalyticsError::MissingDemographics(row.report_id.clone()))?;
        let key = (d.study_date, row.report_id.as_str());
        let entry = latest.entry(d.patient_id.as_str()).or_insert(key);
        if key > *entry {
            *entry = key;
        }
    }
    let keep: std::collections::HashSet<&str> = latest.values().map(|(_, id)| *id).collect();
    Ok(rows
        .iter()
        .filter(|r| keep.contains(r.report_id.as_str()))
        .collect())
}

/// Positive counts per stratum for every cell present in the rows, every
/// finding (OR over organs) and every organ (OR over findings).
pub fn stratified_prevalence(
    rows: &[PredictionRow],
    demo: &Demographics,
    schema: &LabelSchema,
    config: &StrataConfig,
) -> Result<Vec<StratifiedPrevalence>, AnalyticsError> {
    if rows.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    check_cells(rows, schema)?;
    let rows: Vec<&PredictionRow> = if config.per_patient {
        dedup_patients(rows, demo)?
    } else {
        rows.iter().collect()
    };

    let mut strata = vec![Stratum::All];
    if config.by_sex {
        strata.extend([Stratum::Sex(Sex::Male), Stratum::Sex(Sex::Female)]);
    }
    if config.by_age {
        strata.extend([
            Stratum::Age(AgeGroup::Adult),
            Stratum::Age(AgeGroup::Pediatric),
        ]);
    }

    let mut cells: Vec<CellId> = rows.iter().flat_map(|r| r.cells.keys().cloned()).collect();
    cells.sort_by_key(|c| schema.cell_index(c));
    cells.dedup();
    let mut targets: Vec<PrevalenceTarget> =
        cells.iter().cloned().map(PrevalenceTarget::Cell).collect();
    for f in schema.findings() {
        if cells.iter().any(|c| c.finding() == f) {
            targets.push(PrevalenceTarget::Finding(f.clone()));
        }
    }
    for o in schema.organs() {
        if cells.iter().any(|c| c.organ() == o) {
            targets.push(PrevalenceTarget::Organ(o.clone()));
        }
    }

    let mut members: Vec<Vec<&PredictionRow>> = vec![Vec::new(); strata.len()];
    for row in &rows {
        let d = demo
            .get(&row.report_id)
            .ok_or_else(|| AnalyticsError::MissingDemographics(row.report_id.clone()))?;
        for (s, stratum) in strata.iter().enumerate() {
            let inside = match stratum {
                Stratum::All => true,
                Stratum::Sex(sex) => d.sex == *sex,
                Stratum::Age(group) => AgeGroup::of(d.age_years) == *group,
            };
            if inside {
                members[s].push(row);
            }
        }
    }

    let positive = |row: &PredictionRow, target: &PrevalenceTarget| match target {
        PrevalenceTarget::Cell(c) => row.cells.get(c) == Some(&1),
        PrevalenceTarget::Finding(f) => row.cells.iter().any(|(c, &v)| v == 1 && c.finding() == f),
        PrevalenceTarget::Organ(o) => row.cells.iter().any(|(c, &v)| v == 1 && c.organ() == o),
    };
    let mut out = Vec::with_capacity(strata.len() * targets.len());
    for (stratum, rows) in strata.iter().zip(&members) {
        for target in &targets {
            let positive_count = rows.iter().filter(|r| positive(r, target)).count();
            out.push(StratifiedPrevalence {
                stratum: *stratum,
                target: target.clone(),
                positive_count,
                denominator: rows.len(),
                fraction: Metric::ratio(positive_count as f64, rows.len() as f64),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// Anatomical order: organ proximal to distal, schema finding order within.
    pub labels: Vec<CellId>,
    /// Pearson (phi) coefficients; undefined where a column has zero variance.
    pub values: Vec<Vec<Metric>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &CellId, b: &CellId) -> Option<Metric> {
        let i = self.labels.iter().position(|c| c == a)?;
        let j = self.labels.iter().position(|c| c == b)?;
        Some(self.values[i][j])
    }
}

pub fn correlation_matrix(
    rows: &[PredictionRow],
    targets: &[CellId],
    schema: &LabelSchema,
) -> Result<CorrelationMatrix, AnalyticsError> {
    if rows.len() < 2 {
        return Err(AnalyticsError::TooFew(rows.len()));
    }
    let mut labels = targets.to_vec();
    for c in &labels {
        if schema.cell_index(c).is_none() {
            return Err(AnalyticsError::UnknownCell(c.to_string()));
        }
    }
    labels.sort_by_key(|c| schema.cell_index(c));
    labels.dedup();

    let k = labels.len();
    let columns: Vec<Vec<bool>> = labels
        .iter()
        .map(|c| rows.iter().map(|r| r.cells.get(c) == Some(&1)).collect())
        .collect();
    let n = rows.len() as f64;
    let sums: Vec<f64> = columns
        .iter()
        .map(|col| col.iter().filter(|&&v| v).count() as f64)
        .collect();
    let mut values = vec![vec![Metric::Undefined; k]; k];
    for i in 0..k {
        for j in i..k {
            let both = columns[i]
                .iter()
                .zip(&columns[j])
                .filter(|(a, b)| **a && **b)
                .count() as f64;
            let cov = n * both - sums[i] * sums[j];
            let var_i = n * sums[i] - sums[i] * sums[i];
            let var_j = n * sums[j] - sums[j] * sums[j];
            let r = if var_i == 0.0 || var_j == 0.0 {
                Metric::Undefined
            } else if i == j {
                Metric::Value(1.0)
            } else {
                Metric::Value((cov / (var_i * var_j).sqrt()).clamp(-1.0, 1.0))
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { labels, values })
}

fn csv_err(e: impl std::fmt::Display) -> AnalyticsError {
    AnalyticsError::Csv(e.to_string())
}

/// Writes `# `-prefixed comment lines, a header row and the records.
pub fn write_csv(
    path: &Path,
    comments: &[String],
    header: &[&str],
    records: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), AnalyticsError> {
    let mut file = File::create(path).map_err(csv_err)?;
    for line in comments {
        writeln!(file, "# {line}").map_err(csv_err)?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for record in records {
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn metric_cell(m: Metric) -> String {
    match m {
        Metric::Value(v) => format!("{v}"),
        Metric::Undefined => "undefined".into(),
    }
}

pub fn write_involvement_csv(
    path: &Path,
    comments: &[String],
    rows: &[OrganInvolvement],
) -> Result<(), AnalyticsError> {
    write_csv(
        path,
        comments,
        &["organ", "positive_count", "denominator", "fraction"],
        rows.iter().map(|r| {
            vec![
                r.organ.clone(),
                r.positive_count.to_string(),
                r.denominator.to_string(),
                metric_cell(r.fraction),
            ]
        }),
    )
}

pub fn write_prevalence_csv(
    path: &Path,
    comments: &[String],
    rows: &[StratifiedPrevalence],
) -> Result<(), AnalyticsError> {
    write_csv(
        path,
        comments,
        &[
            "stratum",
            "kind",
            "target",
            "positive_count",
            "denominator",
            "fraction",
            "empty_stratum",
        ],
        rows.iter().map(|r| {
            vec![
                r.stratum.name(),
                r.target.kind().into(),
                r.target.name().into(),
                r.positive_count.to_string(),
                r.denominator.to_string(),
                metric_cell(r.fraction),
                r.is_empty_stratum().to_string(),
            ]
        }),
    )
}

pub fn write_correlation_csv(
    path: &Path,
    comments: &[String],
    matrix: &CorrelationMatrix,
) -> Result<(), AnalyticsError> {
    let mut header = vec![""];
    header.extend(matrix.labels.iter().map(|c| c.as_str()));
    write_csv(
        path,
        comments,
        &header,
        matrix
            .labels
            .iter()
            .zip(&matrix.values)
            .map(|(label, row)| {
                std::iter::once(label.to_string())
                    .chain(row.iter().map(|&m| metric_cell(m)))
                    .collect()
            }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> &'static LabelSchema {
        LabelSchema::standard()
    }

    fn row(id: &str, cells: &[(&str, u8)]) -> PredictionRow {
        let cells: BTreeMap<CellId, u8> = cells
            .iter()
            .map(|(c, v)| (c.parse().unwrap(), *v))
            .collect();
        let scores = cells
            .keys()
            .map(|c| (c.clone(), CellScore::Pruned))
            .collect();
        PredictionRow {
            report_id: id.into(),
            cells,
            scores,
        }
    }

    fn demo(entries: &[(&str, &str, Sex, f64, u32)]) -> Demographics {
        entries
            .iter()
            .map(|&(id, patient, sex, age, day)| {
                (
                    id.to_string(),
                    Demographic {
                        patient_id: patient.into(),
                        study_date: NaiveDate::from_ymd_opt(2020, 1, day).unwrap(),
                        sex,
                        age_years: age,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn single_stenosis_involves_ileum_only() {
        let rows = [row(
            "a",
            &[("Ileum.Stenosis", 1), ("Colon.Inflammation", 0)],
        )];
        let inv = organ_involvement(&rows, schema()).unwrap();
        let counts: Vec<usize> = inv.iter().map(|o| o.positive_count).collect();
        assert_eq!(counts, vec![0, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn age_eighteen_is_pediatric() {
        assert_eq!(AgeGroup::of(18.0), AgeGroup::Pediatric);
        assert_eq!(AgeGroup::of(18.5), AgeGroup::Adult);
    }

    #[test]
    fn strata_partition_and_empty_flag() {
        let rows = [
            row("a", &[("Ileum.Stenosis", 1)]),
            row("b", &[("Ileum.Stenosis", 1)]),
        ];
        let d = demo(&[
            ("a", "p1", Sex::Male, 18.0, 1),
            ("b", "p2", Sex::Male, 40.0, 1),
        ]);
        let table = stratified_prevalence(&rows, &d, schema(), &StrataConfig::default()).unwrap();
        let find = |s: Stratum, t: PrevalenceTarget| {
            table
                .iter()
                .find(|r| r.stratum == s && r.target == t)
                .unwrap()
                .clone()
        };
        let cell = PrevalenceTarget::Cell("Ileum.Stenosis".parse().unwrap());
        let female = find(Stratum::Sex(Sex::Female), cell.clone());
        assert!(female.is_empty_stratum());
        assert_eq!(female.fraction, Metric::Undefined);
        let adult = find(Stratum::Age(AgeGroup::Adult), cell.clone());
        let child = find(Stratum::Age(AgeGroup::Pediatric), cell);
        assert_eq!((adult.positive_count, adult.denominator), (1, 1));
        assert_eq!((child.positive_count, child.denominator), (1, 1));
        assert_eq!(child.fraction, Metric::Value(1.0));
        let organ = find(Stratum::All, PrevalenceTarget::Organ("Ileum".into()));
        assert_eq!(organ.positive_count, 2);
    }

    #[test]
    fn per_patient_keeps_latest_visit() {
        let rows = [
            row("early", &[("Ileum.Stenosis", 1)]),
            row("late", &[("Ileum.Stenosis", 0)]),
        ];
        let d = demo(&[
            ("early", "p", Sex::Female, 30.0, 1),
            ("late", "p", Sex::Female, 30.0, 9),
        ]);
        let config = StrataConfig {
            per_patient: true,
            ..StrataConfig::default()
        };
        let table = stratified_prevalence(&rows, &d, schema(), &config).unwrap();
        assert_eq!((table[0].positive_count, table[0].denominator), (0, 1));
        assert!(matches!(
            stratified_prevalence(&rows, &Demographics::new(), schema(), &config),
            Err(AnalyticsError::MissingDemographics(_))
        ));
    }

    #[test]
    fn correlation_special_cases() {
        let rows: Vec<PredictionRow> = (0..10)
            .map(|i| {
                let x = u8::from(i % 3 == 0);
                row(
                    &format!("r{i}"),
                    &[
                        ("Colon.Ulcer", x),
                        ("Ileum.Ulcer", x),
                        ("Rectum.Ulcer", 1 - x),
                        ("Cecum.Ulcer", 0),
                    ],
                )
            })
            .collect();
        let targets: Vec<CellId> = ["Rectum.Ulcer", "Colon.Ulcer", "Ileum.Ulcer", "Cecum.Ulcer"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let m = correlation_matrix(&rows, &targets, schema()).unwrap();
        let order: Vec<&str> = m.labels.iter().map(|c| c.organ()).collect();
        assert_eq!(order, vec!["Ileum", "Cecum", "Colon", "Rectum"]);
        let c = |a: &str, b: &str| m.get(&a.parse().unwrap(), &b.parse().unwrap()).unwrap();
        assert_eq!(c("Colon.Ulcer", "Ileum.Ulcer"), Metric::Value(1.0));
        assert_eq!(c("Colon.Ulcer", "Rectum.Ulcer"), Metric::Value(-1.0));
        assert_eq!(c("Cecum.Ulcer", "Colon.Ulcer"), Metric::Undefined);
        assert_eq!(c("Cecum.Ulcer", "Cecum.Ulcer"), Metric::Undefined);
        assert!(matches!(
            correlation_matrix(&rows[..1], &targets, schema()),
            Err(AnalyticsError::TooFew(1))
        ));
    }

    #[test]
    fn csv_has_comments_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inv.csv");
        let inv = organ_involvement(&[row("a", &[("Ileum.Stenosis", 1)])], schema()).unwrap();
        write_involvement_csv(&path, &["generated by test".into()], &inv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# generated by test");
        assert_eq!(lines[1], "organ,positive_count,denominator,fraction");
        assert_eq!(lines[3], "Ileum,1,1,1");
    }
}
