//! Deterministic synthetic corpus generator.
//!
//! Each report gets gold labels drawn independently per cell, rendered into a
//! Findings section (one abnormal sentence per positive cell, normal filler
//! for uninvolved organs) and an Impression summarizing the involved organs.
//! Every report draws from its own `(seed, index)` stream, so generation is
//! parallel and reproducible.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Modality, Report, Sex};
use crate::error::SynthError;
use crate::labels::RawLabel;
use crate::schema::{CellId, LabelSchema};

/// Annotated positive counts for the 24 targets (denominator 476),
/// with the rounded percentage used for prevalence seeding.
#[derive(Debug, Clone, Copy)]
pub struct AnnotatedPrevalence {
    pub organ: &'static str,
    pub finding: &'static str,
    pub percent: f64,
    pub positives: usize,
    pub denominator: usize,
}

impl AnnotatedPrevalence {
    pub fn cell(&self) -> CellId {
        CellId::new(self.organ, self.finding)
    }

    pub fn fraction(&self) -> f64 {
        self.percent / 100.0
    }
}

const fn ap(
    organ: &'static str,
    finding: &'static str,
    percent: f64,
    positives: usize,
) -> AnnotatedPrevalence {
    AnnotatedPrevalence {
        organ,
        finding,
        percent,
        positives,
        denominator: 476,
    }
}

pub const ANNOTATED_PREVALENCE: [AnnotatedPrevalence; 24] = [
    ap("Ileum", "WallThickness", 45.2, 215),
    ap("Ileum", "Inflammation", 41.8, 199),
    ap("Ileum", "WallEnhancement", 34.7, 165),
    ap("Ileum", "Stenosis", 24.2, 115),
    ap("Ileum", "PreStenoticDilatation", 17.9, 85),
    ap("Colon", "Inflammation", 15.5, 74),
    ap("Ileum", "DWISignal", 14.7, 70),
    ap("Ileum", "CombSign", 14.5, 69),
    ap("Sigmoid", "Inflammation", 13.7, 65),
    ap("Colon", "WallThickness", 13.4, 64),
    ap("Ileum", "MesentericEdema", 12.8, 61),
    ap("Sigmoid", "WallThickness", 11.6, 55),
    ap("Colon", "WallEnhancement", 8.8, 42),
    ap("Rectum", "Inflammation", 8.0, 38),
    ap("Sigmoid", "WallEnhancement", 7.4, 35),
    ap("Ileum", "Fistula", 7.1, 34),
    ap("Cecum", "Inflammation", 7.1, 34),
    ap("Rectum", "WallThickness", 6.7, 32),
    ap("Cecum", "WallThickness", 6.7, 32),
    ap("Cecum", "WallEnhancement", 4.8, 23),
    ap("Rectum", "WallEnhancement", 4.4, 21),
    ap("Ileum", "ReducedMotility", 3.4, 16),
    ap("Sigmoid", "CombSign", 3.4, 16),
    ap("Sigmoid", "MesentericEdema", 3.2, 15),
];

/// Prevalence of every cell not listed in the annotated table.
pub const BACKGROUND_PREVALENCE: f64 = 0.01;

pub fn default_prevalences() -> BTreeMap<CellId, f64> {
    ANNOTATED_PREVALENCE
        .iter()
        .map(|a| (a.cell(), a.fraction()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgeDistribution {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for AgeDistribution {
    fn default() -> Self {
        AgeDistribution {
            mean: 37.0,
            sd: 14.0,
            min: 11.0,
            max: 78.0,
        }
    }
}

/// If `given` is positive and `then` negative, `then` turns positive with
/// probability `boost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHook {
    pub given: CellId,
    pub then: CellId,
    pub boost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_reports: usize,
    pub seed: u64,
    /// Per-cell prevalence; unlisted cells use `background_prevalence`.
    pub prevalences: BTreeMap<CellId, f64>,
    pub background_prevalence: f64,
    pub male_fraction: f64,
    pub age: AgeDistribution,
    pub mre_fraction: f64,
    /// Distinct patients per report; below 1 some patients get several studies.
    pub patients_per_report: f64,
    /// Probability that an organ is recorded as not visible (code 2) or
    /// resected (code 9). Applies to that organ's negative cells only.
    pub organ_not_visible_rate: f64,
    pub organ_resected_rate: f64,
    pub correlations: Vec<CorrelationHook>,
    /// Also write the generating sections into the record's explicit fields.
    pub emit_sections: bool,
    pub locale: SynthLocale,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_reports: 476,
            seed: 0,
            prevalences: default_prevalences(),
            background_prevalence: BACKGROUND_PREVALENCE,
            male_fraction: 0.5,
            age: AgeDistribution::default(),
            mre_fraction: 0.8,
            patients_per_report: 0.84,
            organ_not_visible_rate: 0.0,
            organ_resected_rate: 0.0,
            correlations: Vec::new(),
            emit_sections: false,
            locale: SynthLocale::default(),
        }
    }
}

impl SynthConfig {
    /// Prevalence of every schema cell, in schema order.
    pub fn cell_prevalences(&self, schema: &LabelSchema) -> Result<Vec<f64>, SynthError> {
        let mut out = vec![self.background_prevalence; schema.n_cells()];
        for (cell, &p) in &self.prevalences {
            out[schema.require_cell(cell)?] = p;
        }
        Ok(out)
    }

    pub fn validate(&self, schema: &LabelSchema) -> Result<(), SynthError> {
        if self.n_reports == 0 {
            return Err(SynthError::NoReports);
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        for (cell, p) in schema.cells().iter().zip(self.cell_prevalences(schema)?) {
            if !unit(p) {
                return Err(SynthError::BadPrevalence {
                    cell: cell.to_string(),
                    value: p,
                });
            }
        }
        let bad = |m: &str| Err(SynthError::BadConfig(m.into()));
        for (name, v) in [
            ("male_fraction", self.male_fraction),
            ("mre_fraction", self.mre_fraction),
            ("organ_not_visible_rate", self.organ_not_visible_rate),
            ("organ_resected_rate", self.organ_resected_rate),
        ] {
            if !unit(v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.organ_not_visible_rate + self.organ_resected_rate > 1.0 {
            return bad("organ_not_visible_rate + organ_resected_rate exceeds 1");
        }
        if !(self.patients_per_report > 0.0 && self.patients_per_report <= 1.0) {
            return bad("patients_per_report must lie in (0, 1]");
        }
        let a = &self.age;
        if !(a.sd >= 0.0 && a.min >= 0.0 && a.min <= a.max) {
            return bad("age distribution needs sd >= 0 and 0 <= min <= max");
        }
        for hook in &self.correlations {
            schema.require_cell(&hook.given)?;
            schema.require_cell(&hook.then)?;
            if !unit(hook.boost) {
                return bad("correlation boost must lie in [0, 1]");
            }
        }
        self.locale.validate(schema)
    }
}

/// Phrase pools used to render reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLocale {
    pub findings_header: String,
    pub impression_header: String,
    /// Optional lines placed before the findings header.
    pub preamble: Vec<String>,
    pub organ_names: BTreeMap<String, String>,
    /// Finding → surface variants; one is drawn per sentence.
    pub finding_phrases: BTreeMap<String, Vec<String>>,
    /// Abnormal sentence patterns with `{organ}` and `{finding}`.
    pub abnormal_patterns: Vec<String>,
    /// Normal filler patterns with `{organ}`.
    pub normal_patterns: Vec<String>,
    pub normal_impressions: Vec<String>,
    /// Impression patterns with `{organs}`.
    pub abnormal_impressions: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for SynthLocale {
    fn default() -> Self {
        let organ_names = [
            ("Jejunum", "jejunum"),
            ("Ileum", "terminal ileum"),
            ("Cecum", "cecum"),
            ("Colon", "colon"),
            ("Sigmoid", "sigmoid colon"),
            ("Rectum", "rectum"),
        ];
        let phrases: [(&str, &[&str]); 15] = [
            (
                "Inflammation",
                &[
                    "inflammation",
                    "active inflammation",
                    "inflammatory changes",
                ],
            ),
            ("Phlegmon", &["a phlegmon", "phlegmonous change"]),
            ("Fistula", &["a fistula", "a fistulous tract"]),
            (
                "MesentericEdema",
                &["mesenteric edema", "mesenteric fat stranding"],
            ),
            ("Stenosis", &["stenosis", "luminal narrowing"]),
            (
                "DWISignal",
                &["restricted diffusion", "abnormal DWI signal"],
            ),
            (
                "Pseudosacculation",
                &["pseudosacculation", "pseudosacculations"],
            ),
            ("Abscess", &["an abscess", "an abscess collection"]),
            ("CombSign", &["a comb sign", "engorged vasa recta"]),
            (
                "WallThickness",
                &[
                    "wall thickening",
                    "bowel wall thickening",
                    "mural thickening",
                ],
            ),
            ("Ulcer", &["ulceration", "mucosal ulcers"]),
            ("BowelWallEdema", &["bowel wall edema", "mural edema"]),
            (
                "WallEnhancement",
                &["wall enhancement", "mural hyperenhancement"],
            ),
            (
                "PreStenoticDilatation",
                &["pre-stenotic dilatation", "upstream dilatation"],
            ),
            ("ReducedMotility", &["reduced motility", "hypoperistalsis"]),
        ];
        SynthLocale {
            findings_header: "FINDINGS:".into(),
            impression_header: "IMPRESSION:".into(),
            preamble: strings(&[
                "Clinical history: Crohn's disease, follow-up.",
                "Technique: enterography with oral and intravenous contrast.",
                "Comparison: none available.",
            ]),
            organ_names: organ_names
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            finding_phrases: phrases
                .iter()
                .map(|(k, v)| (k.to_string(), strings(v)))
                .collect(),
            abnormal_patterns: strings(&[
                "There is {finding} in the {organ}.",
                "The {organ} shows {finding}.",
                "{finding} is seen in the {organ}.",
                "Findings include {finding} of the {organ}.",
            ]),
            normal_patterns: strings(&[
                "The {organ} appears unremarkable.",
                "No abnormality is seen in the {organ}.",
                "The {organ} is within normal limits.",
            ]),
            normal_impressions: strings(&[
                "No evidence of active inflammatory bowel disease.",
                "Normal study.",
                "No acute abnormality.",
            ]),
            abnormal_impressions: strings(&[
                "Active Crohn's disease involving the {organs}.",
                "Findings consistent with active inflammatory bowel disease of the {organs}.",
                "Inflammatory bowel disease affecting the {organs}.",
            ]),
        }
    }
}

impl SynthLocale {
    pub fn validate(&self, schema: &LabelSchema) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        for organ in schema.organs() {
            if !self.organ_names.contains_key(organ) {
                return bad(format!("locale has no name for organ {organ}"));
            }
        }
        for finding in schema.findings() {
            if self
                .finding_phrases
                .get(finding)
                .is_none_or(|v| v.is_empty())
            {
                return bad(format!("locale has no phrase for finding {finding}"));
            }
        }
        let pools = [
            ("abnormal_patterns", &self.abnormal_patterns),
            ("normal_patterns", &self.normal_patterns),
            ("normal_impressions", &self.normal_impressions),
            ("abnormal_impressions", &self.abnormal_impressions),
        ];
        for (name, pool) in pools {
            if pool.is_empty() {
                return bad(format!("locale pool {name} is empty"));
            }
        }
        let headers = [&self.findings_header, &self.impression_header];
        let texts = self
            .abnormal_patterns
            .iter()
            .chain(&self.normal_patterns)
            .chain(&self.normal_impressions)
            .chain(&self.abnormal_impressions)
            .chain(&self.preamble)
            .chain(self.finding_phrases.values().flatten())
            .chain(self.organ_names.values());
        for text in texts {
            if headers.iter().any(|h| text.contains(h.as_str())) {
                return bad(format!("locale text {text:?} contains a section header"));
            }
        }
        Ok(())
    }
}

/// Rendered report text with the sections it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub raw_text: String,
    pub findings: String,
    pub impression: String,
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn join_organs(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Renders a report for a binary gold row in schema order.
pub fn render_report<R: Rng + ?Sized>(
    gold: &[u8],
    schema: &LabelSchema,
    locale: &SynthLocale,
    rng: &mut R,
) -> RenderedReport {
    let mut sentences = Vec::new();
    let mut involved = Vec::new();
    for (o, organ) in schema.organs().iter().enumerate() {
        let organ_name = &locale.organ_names[organ];
        let positives: Vec<usize> = schema.organ_cells(o).filter(|&c| gold[c] == 1).collect();
        if positives.is_empty() {
            if rng.gen_bool(0.7) {
                let pattern = locale.normal_patterns.choose(rng).expect("non-empty pool");
                sentences.push(capitalize(&pattern.replace("{organ}", organ_name)));
            }
            continue;
        }
        involved.push(organ_name.as_str());
        for c in positives {
            let finding = &schema.findings()[schema.finding_of(c)];
            let phrase = locale.finding_phrases[finding]
                .choose(rng)
                .expect("non-empty pool");
            let pattern = locale
                .abnormal_patterns
                .choose(rng)
                .expect("non-empty pool");
            let sentence = pattern
                .replace("{organ}", organ_name)
                .replace("{finding}", phrase);
            sentences.push(capitalize(&sentence));
        }
    }
    if sentences.is_empty() {
        let pattern = locale.normal_patterns.choose(rng).expect("non-empty pool");
        let organ = &locale.organ_names[&schema.organs()[1]];
        sentences.push(capitalize(&pattern.replace("{organ}", organ)));
    }

    let impression = if involved.is_empty() {
        locale
            .normal_impressions
            .choose(rng)
            .expect("non-empty pool")
            .clone()
    } else {
        let pattern = locale
            .abnormal_impressions
            .choose(rng)
            .expect("non-empty pool");
        capitalize(&pattern.replace("{organs}", &join_organs(&involved)))
    };
    let findings = sentences.join(" ");

    let mut raw = String::new();
    for line in &locale.preamble {
        if rng.gen_bool(0.5) {
            raw.push_str(line);
            raw.push('\n');
        }
    }
    raw.push_str(&format!(
        "{}\n{findings}\n\n{}\n{impression}\n",
        locale.findings_header, locale.impression_header
    ));
    RenderedReport {
        raw_text: raw,
        findings,
        impression,
    }
}

/// RNG for one `(seed, domain, index)` stream.
fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

const PATIENT_STREAM: u64 = 1;
const REPORT_STREAM: u64 = 2;

/// A generated report with the sections used to render it.
#[derive(Debug, Clone)]
pub struct SynthReport {
    pub report: Report,
    pub rendered: RenderedReport,
}

pub fn generate(
    config: &SynthConfig,
    schema: &LabelSchema,
) -> Result<Vec<SynthReport>, SynthError> {
    config.validate(schema)?;
    let prevalences = config.cell_prevalences(schema)?;
    let hooks: Vec<(usize, usize, f64)> = config
        .correlations
        .iter()
        .map(|h| {
            Ok((
                schema.require_cell(&h.given)?,
                schema.require_cell(&h.then)?,
                h.boost,
            ))
        })
        .collect::<Result<_, SynthError>>()?;
    let n_patients =
        ((config.n_reports as f64 * config.patients_per_report).ceil() as usize).max(1);
    let age_dist = Normal::new(config.age.mean, config.age.sd)
        .map_err(|e| SynthError::BadConfig(e.to_string()))?;
    let first_day = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
    let span_days =
        (NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date") - first_day).num_days();

    let reports = (0..config.n_reports)
        .into_par_iter()
        .map(|index| {
            let mut rng = stream_rng(config.seed, REPORT_STREAM, index as u64);
            let patient = rng.gen_range(0..n_patients);

            let mut prng = stream_rng(config.seed, PATIENT_STREAM, patient as u64);
            let sex = if prng.gen_bool(config.male_fraction) {
                Sex::Male
            } else {
                Sex::Female
            };
            let age = age_dist
                .sample(&mut prng)
                .clamp(config.age.min, config.age.max)
                .round();

            let mut gold: Vec<u8> = prevalences
                .iter()
                .map(|&p| u8::from(rng.gen_bool(p)))
                .collect();
            for &(given, then, boost) in &hooks {
                if gold[given] == 1 && gold[then] == 0 && rng.gen_bool(boost) {
                    gold[then] = 1;
                }
            }
            let mut codes: Vec<RawLabel> = gold
                .iter()
                .map(|&g| {
                    if g == 1 {
                        RawLabel::Present
                    } else {
                        RawLabel::Absent
                    }
                })
                .collect();
            for o in 0..schema.organs().len() {
                let u: f64 = rng.gen();
                let status = if u < config.organ_not_visible_rate {
                    Some(RawLabel::NotVisible)
                } else if u < config.organ_not_visible_rate + config.organ_resected_rate {
                    Some(RawLabel::Resected)
                } else {
                    None
                };
                if let Some(status) = status {
                    for c in schema.organ_cells(o) {
                        if gold[c] == 0 {
                            codes[c] = status;
                        }
                    }
                }
            }

            let modality = if rng.gen_bool(config.mre_fraction) {
                Modality::Mre
            } else {
                Modality::Cte
            };
            let study_date = first_day + Duration::days(rng.gen_range(0..=span_days));
            let rendered = render_report(&gold, schema, &config.locale, &mut rng);
            let report = Report {
                report_id: format!("R{index:06}"),
                patient_id: format!("P{patient:06}"),
                study_date,
                modality,
                sex,
                age_years: age,
                raw_text: rendered.raw_text.clone(),
                findings: config.emit_sections.then(|| rendered.findings.clone()),
                impression: config.emit_sections.then(|| rendered.impression.clone()),
                gold: Some(codes),
            };
            SynthReport { report, rendered }
        })
        .collect();
    Ok(reports)
}

pub fn generate_corpus(config: &SynthConfig, schema: &LabelSchema) -> Result<Corpus, SynthError> {
    Ok(Corpus::new(
        generate(config, schema)?
            .into_iter()
            .map(|s| s.report)
            .collect(),
    ))
}
