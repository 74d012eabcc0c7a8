//! Verbalizer, prompt templates and pair inputs.
//!
//! Every prompt asserts abnormality, at all three tree levels, so a high
//! score always means "abnormal" and one threshold serves every level.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::PromptError;
use crate::parsing::HeaderLexicon;
use crate::schema::{CellId, LabelSchema};
use crate::scoring::tokens::TokenizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLevel {
    Scan,
    Organ,
    Finding,
}

impl PromptLevel {
    fn name(self) -> &'static str {
        match self {
            PromptLevel::Scan => "scan",
            PromptLevel::Organ => "organ",
            PromptLevel::Finding => "finding",
        }
    }
}

impl fmt::Display for PromptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A node of the scan → organ → finding tree. Indices are schema indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptNode {
    Scan,
    Organ(usize),
    Finding(usize),
}

impl PromptNode {
    pub fn level(self) -> PromptLevel {
        match self {
            PromptNode::Scan => PromptLevel::Scan,
            PromptNode::Organ(_) => PromptLevel::Organ,
            PromptNode::Finding(_) => PromptLevel::Finding,
        }
    }

    /// Stable display name: `scan`, the organ name, or the cell id.
    pub fn label(self, schema: &LabelSchema) -> String {
        match self {
            PromptNode::Scan => "scan".into(),
            PromptNode::Organ(o) => schema.organs()[o].clone(),
            PromptNode::Finding(c) => schema.cell(c).to_string(),
        }
    }
}

/// Per-locale templates and surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub scan_template: String,
    pub organ_template: String,
    pub finding_template: String,
    /// Schema organ name → surface form.
    pub organ_names: BTreeMap<String, String>,
    /// Schema finding name → surface form.
    pub finding_phrases: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn english() -> Self {
        let organs = [
            ("Jejunum", "jejunum"),
            ("Ileum", "ileum"),
            ("Cecum", "cecum"),
            ("Colon", "colon"),
            ("Sigmoid", "sigmoid colon"),
            ("Rectum", "rectum"),
        ];
        let findings = [
            ("Inflammation", "inflammation"),
            ("Phlegmon", "a phlegmon"),
            ("Fistula", "a fistula"),
            ("MesentericEdema", "mesenteric edema"),
            ("Stenosis", "stenosis"),
            ("DWISignal", "abnormal DWI signal"),
            ("Pseudosacculation", "pseudosacculation"),
            ("Abscess", "an abscess"),
            ("CombSign", "a comb sign"),
            ("WallThickness", "wall thickening"),
            ("Ulcer", "ulceration"),
            ("BowelWallEdema", "bowel wall edema"),
            ("WallEnhancement", "wall enhancement"),
            ("PreStenoticDilatation", "pre-stenotic dilatation"),
            ("ReducedMotility", "reduced motility"),
        ];
        TemplateSet {
            scan_template: "The scan demonstrates abnormal findings.".into(),
            organ_template: "There is an abnormality in the {organ}.".into(),
            finding_template: "There is {finding} in the {organ}.".into(),
            organ_names: organs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            finding_phrases: findings
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PromptError::Io(e.to_string()))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::english()
    }
}

fn placeholders(pattern: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or("unterminated placeholder")?;
        out.push(&after[..close]);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err("unbalanced '}'".into());
    }
    Ok(out)
}

fn check_template(level: PromptLevel, pattern: &str) -> Result<(), PromptError> {
    let bad = |reason: String| PromptError::BadTemplate {
        level: level.name(),
        reason,
    };
    let found = placeholders(pattern).map_err(bad)?;
    let mut expected: Vec<&str> = match level {
        PromptLevel::Scan => vec![],
        PromptLevel::Organ => vec!["organ"],
        PromptLevel::Finding => vec!["finding", "organ"],
    };
    let mut got = found.clone();
    got.sort_unstable();
    got.dedup();
    expected.sort_unstable();
    if got != expected || found.len() != expected.len() {
        return Err(bad(format!(
            "expected placeholders {expected:?}, found {found:?}"
        )));
    }
    Ok(())
}

/// Renders hypotheses for every tree node of a schema. Construction checks
/// that all renderings are complete and pairwise distinct.
#[derive(Debug, Clone)]
pub struct Verbalizer {
    schema: LabelSchema,
    scan: String,
    organs: Vec<String>,
    cells: Vec<String>,
    reverse: HashMap<String, PromptNode>,
}

impl Verbalizer {
    pub fn new(schema: &LabelSchema, templates: &TemplateSet) -> Result<Self, PromptError> {
        check_template(PromptLevel::Scan, &templates.scan_template)?;
        check_template(PromptLevel::Organ, &templates.organ_template)?;
        check_template(PromptLevel::Finding, &templates.finding_template)?;

        let organ_form = |o: &String| {
            templates
                .organ_names
                .get(o)
                .ok_or_else(|| PromptError::MissingSurfaceForm(o.clone()))
        };
        let finding_form = |f: &String| {
            templates
                .finding_phrases
                .get(f)
                .ok_or_else(|| PromptError::MissingSurfaceForm(f.clone()))
        };

        let scan = templates.scan_template.clone();
        let organs = schema
            .organs()
            .iter()
            .map(|o| Ok(templates.organ_template.replace("{organ}", organ_form(o)?)))
            .collect::<Result<Vec<_>, PromptError>>()?;
        let cells = schema
            .cells()
            .iter()
            .map(|c| {
                let organ = organ_form(&c.organ().to_string())?;
                let finding = finding_form(&c.finding().to_string())?;
                Ok(templates
                    .finding_template
                    .replace("{organ}", organ)
                    .replace("{finding}", finding))
            })
            .collect::<Result<Vec<_>, PromptError>>()?;

        let mut reverse = HashMap::new();
        let nodes = std::iter::once((PromptNode::Scan, &scan))
            .chain(
                organs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (PromptNode::Organ(i), s)),
            )
            .chain(
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (PromptNode::Finding(i), s)),
            );
        for (node, text) in nodes {
            if let Some(prev) = reverse.insert(text.clone(), node) {
                return Err(PromptError::NotInjective(
                    prev.label(schema),
                    node.label(schema),
                ));
            }
        }

        Ok(Verbalizer {
            schema: schema.clone(),
            scan,
            organs,
            cells,
            reverse,
        })
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn render(&self, node: PromptNode) -> &str {
        match node {
            PromptNode::Scan => &self.scan,
            PromptNode::Organ(o) => &self.organs[o],
            PromptNode::Finding(c) => &self.cells[c],
        }
    }

    /// Finding-level hypothesis for a cell.
    pub fn verbalize(&self, cell: &CellId) -> Result<&str, PromptError> {
        let idx = self.schema.require_cell(cell)?;
        Ok(self.render(PromptNode::Finding(idx)))
    }

    /// Scan- or organ-level hypothesis. `organ` must be given exactly when
    /// `level` is [`PromptLevel::Organ`].
    pub fn verbalize_level(
        &self,
        level: PromptLevel,
        organ: Option<&str>,
    ) -> Result<&str, PromptError> {
        match (level, organ) {
            (PromptLevel::Scan, None) => Ok(self.render(PromptNode::Scan)),
            (PromptLevel::Organ, Some(name)) => {
                let idx = self
                    .schema
                    .organ_index(name)
                    .ok_or_else(|| PromptError::UnknownOrgan(name.to_string()))?;
                Ok(self.render(PromptNode::Organ(idx)))
            }
            _ => Err(PromptError::OrganMismatch),
        }
    }

    /// Maps a rendered hypothesis back to its node.
    pub fn node_of(&self, hypothesis: &str) -> Option<PromptNode> {
        self.reverse.get(hypothesis).copied()
    }
}

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const EOS: &str = "[EOS]";

/// A (premise, hypothesis) pair as sent to a scorer. Serialized with the
/// wire field names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairInput {
    pub premise: String,
    pub hypothesis: String,
}

impl PairInput {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        PairInput {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
        }
    }

    /// `[CLS] premise [SEP] hypothesis [EOS]`.
    pub fn render(&self) -> String {
        format!("{CLS} {} {SEP} {} {EOS}", self.premise, self.hypothesis)
    }

    /// Drops premise tokens from the end until the pair fits `max_tokens`.
    /// The hypothesis is never shortened.
    pub fn fit(
        mut self,
        max_tokens: usize,
        tokenizer: &TokenizerSpec,
    ) -> Result<Self, PromptError> {
        let fixed = tokenizer.count_pair("", &self.hypothesis);
        if fixed > max_tokens {
            return Err(PromptError::HypothesisTooLong {
                needed: fixed,
                max: max_tokens,
            });
        }
        if tokenizer.count_pair(&self.premise, &self.hypothesis) > max_tokens {
            self.premise = tokenizer.truncate(&self.premise, max_tokens - fixed);
        }
        Ok(self)
    }
}

/// One tuning or inference example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub report_id: String,
    pub level: PromptLevel,
    /// Organ name for organ-level instances, cell id for finding-level ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    pub premise: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u8>,
}

/// Which finding-level negatives to emit per report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NegativePolicy {
    /// Every target cell whose gold is 0.
    #[default]
    AllNegatives,
    /// At most `max_per_report` negatives, sampled with the tuning seed.
    Capped { max_per_report: usize },
}

#[derive(Debug, Clone)]
pub struct TuningOptions {
    pub negative_policy: NegativePolicy,
    /// Also emit scan- and organ-level instances supervised by the OR of
    /// their descendant targets.
    pub hierarchy_supervision: bool,
    pub seed: u64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        TuningOptions {
            negative_policy: NegativePolicy::AllNegatives,
            hierarchy_supervision: true,
            seed: 0,
        }
    }
}

/// Builds the supervised prompt set for an annotated corpus.
pub fn build_tuning_set(
    corpus: &Corpus,
    targets: &[CellId],
    verbalizer: &Verbalizer,
    lexicon: &HeaderLexicon,
    options: &TuningOptions,
) -> Result<Vec<PromptInstance>, PromptError> {
    let schema = verbalizer.schema();
    let target_idx = schema.resolve_cells(targets)?;
    let mut out = Vec::new();

    for (report_no, report) in corpus.iter().enumerate() {
        let gold = report.binary_gold().ok_or_else(|| {
            PromptError::Report(report.report_id.clone(), "no gold labels".into())
        })?;
        let premise = report
            .premise(lexicon)
            .map_err(|e| PromptError::Report(report.report_id.clone(), e.to_string()))?;

        let instance = |node: PromptNode, target: u8| PromptInstance {
            report_id: report.report_id.clone(),
            level: node.level(),
            node: match node {
                PromptNode::Scan => None,
                other => Some(other.label(schema)),
            },
            premise: premise.clone(),
            hypothesis: verbalizer.render(node).to_string(),
            target: Some(target),
        };

        if options.hierarchy_supervision {
            let organ_any: Vec<u8> = (0..schema.organs().len())
                .map(|o| {
                    u8::from(
                        target_idx
                            .iter()
                            .any(|&c| schema.organ_of(c) == o && gold[c] == 1),
                    )
                })
                .collect();
            let scan_any = u8::from(organ_any.contains(&1));
            out.push(instance(PromptNode::Scan, scan_any));
            for (o, &v) in organ_any.iter().enumerate() {
                out.push(instance(PromptNode::Organ(o), v));
            }
        }

        let mut negatives: Vec<usize> = target_idx
            .iter()
            .copied()
            .filter(|&c| gold[c] == 0)
            .collect();
        if let NegativePolicy::Capped { max_per_report } = options.negative_policy {
            if negatives.len() > max_per_report {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(report_no as u64);
                negatives.shuffle(&mut rng);
                negatives.truncate(max_per_report);
                negatives.sort_unstable();
            }
        }
        let mut keep = negatives.into_iter().peekable();
        for &c in &target_idx {
            if gold[c] == 1 {
                out.push(instance(PromptNode::Finding(c), 1));
            } else if keep.peek() == Some(&c) {
                keep.next();
                out.push(instance(PromptNode::Finding(c), 0));
            }
        }
    }
    Ok(out)
}
