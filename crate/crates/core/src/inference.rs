//! Flat and hierarchical inference over a target set of cells.
//!
//! Flat inference asks one finding prompt per target cell. Hierarchical
//! inference asks the scan prompt, then the six organ prompts, then the
//! finding prompts of positive organs only; a negative verdict prunes the
//! subtree and its cells are predicted 0. Every level of one report is sent
//! as one batch (split only when it exceeds the scorer's `max_batch`).

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Report};
use crate::error::InferenceError;
use crate::parsing::HeaderLexicon;
use crate::prompting::{PairInput, PromptLevel, PromptNode, Verbalizer};
use crate::schema::{CellId, LabelSchema};
use crate::scoring::{self, ScoreRequest, Scorer, ScorerInfo, TokenizerSpec};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Scan → organ → finding tree restricted to the active targets.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyTree {
    targets: Vec<CellId>,
    /// Schema index of each target, in target order.
    target_index: Vec<usize>,
    /// Per organ: positions into `targets`, in target order.
    leaves: Vec<Vec<usize>>,
}

impl HierarchyTree {
    pub fn new(schema: &LabelSchema, targets: &[CellId]) -> Result<Self, InferenceError> {
        if targets.is_empty() {
            return Err(InferenceError::NoTargets);
        }
        let mut seen = vec![false; schema.n_cells()];
        let mut target_index = Vec::with_capacity(targets.len());
        let mut leaves = vec![Vec::new(); schema.organs().len()];
        for (pos, cell) in targets.iter().enumerate() {
            let idx = schema
                .cell_index(cell)
                .ok_or_else(|| InferenceError::UnknownTarget(cell.to_string()))?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(InferenceError::DuplicateTarget(cell.to_string()));
            }
            target_index.push(idx);
            leaves[schema.organ_of(idx)].push(pos);
        }
        Ok(HierarchyTree {
            targets: targets.to_vec(),
            target_index,
            leaves,
        })
    }

    pub fn targets(&self) -> &[CellId] {
        &self.targets
    }

    pub fn n_organs(&self) -> usize {
        self.leaves.len()
    }

    /// Target positions under organ `o`.
    pub fn leaves(&self, organ: usize) -> &[usize] {
        &self.leaves[organ]
    }

    pub fn node_of_target(&self, pos: usize) -> PromptNode {
        PromptNode::Finding(self.target_index[pos])
    }
}

/// Per-cell score: a number, or `"pruned"` when the subtree was skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellScore {
    Score(f64),
    Pruned,
}

impl CellScore {
    pub fn value(self) -> Option<f64> {
        match self {
            CellScore::Score(s) => Some(s),
            CellScore::Pruned => None,
        }
    }
}

impl Serialize for CellScore {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CellScore::Score(v) => s.serialize_f64(*v),
            CellScore::Pruned => s.serialize_str("pruned"),
        }
    }
}

impl<'de> Deserialize<'de> for CellScore {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = CellScore;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a score in [0, 1] or \"pruned\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<CellScore, E> {
                if (0.0..=1.0).contains(&v) {
                    Ok(CellScore::Score(v))
                } else {
                    Err(E::custom(format!("score {v} outside [0, 1]")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<CellScore, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<CellScore, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<CellScore, E> {
                if v == "pruned" {
                    Ok(CellScore::Pruned)
                } else {
                    Err(E::custom(format!("unexpected score string {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub report_id: String,
    pub cells: BTreeMap<CellId, u8>,
    pub scores: BTreeMap<CellId, CellScore>,
}

impl PredictionRow {
    /// Binary predictions in the order of `targets`; `None` if a cell is missing.
    pub fn vector(&self, targets: &[CellId]) -> Option<Vec<u8>> {
        targets.iter().map(|c| self.cells.get(c).copied()).collect()
    }

    /// Scores in target order; pruned cells map to 0.
    pub fn score_vector(&self, targets: &[CellId]) -> Option<Vec<f64>> {
        targets
            .iter()
            .map(|c| self.scores.get(c).map(|s| s.value().unwrap_or(0.0)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub node: String,
    pub level: PromptLevel,
    pub score: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub report_id: String,
    pub scorer_calls: u64,
    pub pairs_scored: u64,
    pub tokens: u64,
    /// Pairs answered from a cache rather than the backend.
    pub cache_hits: u64,
    pub wall_ms: f64,
    pub decisions: Vec<Decision>,
}

impl InferenceTrace {
    fn new(report_id: &str) -> Self {
        InferenceTrace {
            report_id: report_id.to_string(),
            scorer_calls: 0,
            pairs_scored: 0,
            tokens: 0,
            cache_hits: 0,
            wall_ms: 0.0,
            decisions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Flat,
    Hierarchical,
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferenceMode::Flat => "flat",
            InferenceMode::Hierarchical => "hierarchical",
        })
    }
}

/// Separate thresholds per level. Off by default: one threshold is shared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds {
    pub scan: f64,
    pub organ: f64,
    pub finding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub threshold: f64,
    pub level_thresholds: Option<LevelThresholds>,
    /// Used to fit pairs when the scorer reports a maximum sequence length.
    pub tokenizer: TokenizerSpec,
    pub parallelism: usize,
    /// Largest tolerated fraction of failed reports in a corpus run.
    pub max_failure_fraction: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            threshold: DEFAULT_THRESHOLD,
            level_thresholds: None,
            tokenizer: TokenizerSpec::default(),
            parallelism: 1,
            max_failure_fraction: 0.0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let mut all = vec![self.threshold];
        if let Some(t) = self.level_thresholds {
            all.extend([t.scan, t.organ, t.finding]);
        }
        if let Some(&bad) = all.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(InferenceError::BadThreshold(bad));
        }
        if self.parallelism == 0 {
            return Err(InferenceError::BadParallelism);
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(InferenceError::BadFailureBound(self.max_failure_fraction));
        }
        Ok(())
    }

    fn threshold_for(&self, level: PromptLevel) -> f64 {
        match (self.level_thresholds, level) {
            (None, _) => self.threshold,
            (Some(t), PromptLevel::Scan) => t.scan,
            (Some(t), PromptLevel::Organ) => t.organ,
            (Some(t), PromptLevel::Finding) => t.finding,
        }
    }
}

/// Fold ratios `baseline / this run`; `None` when this run's value is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Folds {
    pub calls: Option<f64>,
    pub pairs: Option<f64>,
    pub tokens: Option<f64>,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub mode: InferenceMode,
    pub reports: u64,
    pub calls: u64,
    pub pairs: u64,
    pub tokens: u64,
    pub cache_hits: u64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_folds: Option<Folds>,
}

impl EfficiencyReport {
    pub fn empty(mode: InferenceMode) -> Self {
        EfficiencyReport {
            mode,
            reports: 0,
            calls: 0,
            pairs: 0,
            tokens: 0,
            cache_hits: 0,
            wall_ms: 0.0,
            baseline_folds: None,
        }
    }

    /// Sums per-report traces. Wall time is the elapsed time of the whole
    /// run, passed separately since reports may overlap.
    pub fn from_traces<'a>(
        mode: InferenceMode,
        traces: impl IntoIterator<Item = &'a InferenceTrace>,
        wall_ms: f64,
    ) -> Self {
        let mut r = Self::empty(mode);
        for t in traces {
            r.reports += 1;
            r.calls += t.scorer_calls;
            r.pairs += t.pairs_scored;
            r.tokens += t.tokens;
            r.cache_hits += t.cache_hits;
        }
        r.wall_ms = wall_ms;
        r
    }

    pub fn with_baseline(mut self, baseline: &EfficiencyReport) -> Self {
        let fold = |b: f64, s: f64| (s > 0.0).then(|| b / s);
        self.baseline_folds = Some(Folds {
            calls: fold(baseline.calls as f64, self.calls as f64),
            pairs: fold(baseline.pairs as f64, self.pairs as f64),
            tokens: fold(baseline.tokens as f64, self.tokens as f64),
            wall_time: fold(baseline.wall_ms, self.wall_ms),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFailure {
    pub report_id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct CorpusRun {
    /// One row per successful report, in corpus order.
    pub predictions: Vec<PredictionRow>,
    pub traces: Vec<InferenceTrace>,
    pub failures: Vec<ReportFailure>,
    pub efficiency: EfficiencyReport,
}

pub struct InferenceEngine<'a> {
    scorer: &'a dyn Scorer,
    verbalizer: &'a Verbalizer,
    lexicon: &'a HeaderLexicon,
    tree: HierarchyTree,
    config: InferenceConfig,
    info: ScorerInfo,
}

impl<'a> InferenceEngine<'a> {
    pub fn new(
        scorer: &'a dyn Scorer,
        verbalizer: &'a Verbalizer,
        lexicon: &'a HeaderLexicon,
        targets: &[CellId],
        config: InferenceConfig,
    ) -> Result<Self, InferenceError> {
        config.validate()?;
        let tree = HierarchyTree::new(verbalizer.schema(), targets)?;
        let info = scorer.info();
        Ok(InferenceEngine {
            scorer,
            verbalizer,
            lexicon,
            tree,
            config,
            info,
        })
    }

    pub fn tree(&self) -> &HierarchyTree {
        &self.tree
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    fn premise(&self, report: &Report) -> Result<String, InferenceError> {
        report
            .premise(self.lexicon)
            .map_err(|e| InferenceError::NoPremise {
                report_id: report.report_id.clone(),
                reason: e.to_string(),
            })
    }

    /// Scores `nodes` against one premise as one batch per `max_batch`
    /// chunk, recording decisions in `trace`.
    fn score_level(
        &self,
        premise: &str,
        nodes: &[PromptNode],
        trace: &mut InferenceTrace,
    ) -> Result<Vec<bool>, InferenceError> {
        let mut pairs = Vec::with_capacity(nodes.len());
        for &node in nodes {
            let pair = PairInput::new(premise, self.verbalizer.render(node));
            pairs.push(match self.info.max_sequence_length {
                Some(max) => pair.fit(max, &self.config.tokenizer)?,
                None => pair,
            });
        }
        let mut verdicts = Vec::with_capacity(nodes.len());
        let chunk = self.info.max_batch.max(1);
        for (nodes, pairs) in nodes.chunks(chunk).zip(pairs.chunks(chunk)) {
            let request = ScoreRequest::new(pairs.to_vec());
            let response = scoring::score_batch(self.scorer, &request).map_err(|source| {
                InferenceError::Scorer {
                    report_id: trace.report_id.clone(),
                    source,
                }
            })?;
            trace.scorer_calls += 1;
            trace.pairs_scored += request.len() as u64;
            trace.tokens += response.token_counts.iter().sum::<u64>();
            trace.cache_hits += (0..request.len())
                .filter(|&i| response.is_cache_hit(i))
                .count() as u64;
            for (&node, &score) in nodes.iter().zip(&response.scores) {
                let verdict = score >= self.config.threshold_for(node.level());
                trace.decisions.push(Decision {
                    node: node.label(self.verbalizer.schema()),
                    level: node.level(),
                    score,
                    verdict,
                });
                verdicts.push(verdict);
            }
        }
        Ok(verdicts)
    }

    fn row(&self, report_id: &str, scores: Vec<CellScore>) -> PredictionRow {
        let threshold = self.config.threshold_for(PromptLevel::Finding);
        let mut cells = BTreeMap::new();
        let mut score_map = BTreeMap::new();
        for (cell, score) in self.tree.targets.iter().zip(scores) {
            let on = matches!(score, CellScore::Score(s) if s >= threshold);
            cells.insert(cell.clone(), u8::from(on));
            score_map.insert(cell.clone(), score);
        }
        PredictionRow {
            report_id: report_id.to_string(),
            cells,
            scores: score_map,
        }
    }

    fn finding_scores(trace: &InferenceTrace, from: usize) -> impl Iterator<Item = f64> + '_ {
        trace.decisions[from..].iter().map(|d| d.score)
    }

    /// One finding prompt per target.
    pub fn infer_flat(
        &self,
        report: &Report,
    ) -> Result<(PredictionRow, InferenceTrace), InferenceError> {
        let start = Instant::now();
        let mut trace = InferenceTrace::new(&report.report_id);
        let premise = self.premise(report)?;
        let nodes: Vec<PromptNode> = (0..self.tree.targets.len())
            .map(|p| self.tree.node_of_target(p))
            .collect();
        self.score_level(&premise, &nodes, &mut trace)?;
        let scores = Self::finding_scores(&trace, 0)
            .map(CellScore::Score)
            .collect();
        trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok((self.row(&report.report_id, scores), trace))
    }

    /// Top-down evaluation with subtree pruning.
    pub fn infer_hierarchical(
        &self,
        report: &Report,
    ) -> Result<(PredictionRow, InferenceTrace), InferenceError> {
        let start = Instant::now();
        let mut trace = InferenceTrace::new(&report.report_id);
        let premise = self.premise(report)?;
        let mut scores = vec![CellScore::Pruned; self.tree.targets.len()];

        let scan = self.score_level(&premise, &[PromptNode::Scan], &mut trace)?;
        if scan[0] {
            let organs: Vec<PromptNode> =
                (0..self.tree.n_organs()).map(PromptNode::Organ).collect();
            let organ_verdicts = self.score_level(&premise, &organs, &mut trace)?;
            for (o, &positive) in organ_verdicts.iter().enumerate() {
                let leaves = self.tree.leaves(o);
                if !positive || leaves.is_empty() {
                    continue;
                }
                let nodes: Vec<PromptNode> = leaves
                    .iter()
                    .map(|&p| self.tree.node_of_target(p))
                    .collect();
                let from = trace.decisions.len();
                self.score_level(&premise, &nodes, &mut trace)?;
                for (&pos, s) in leaves.iter().zip(Self::finding_scores(&trace, from)) {
                    scores[pos] = CellScore::Score(s);
                }
            }
        }
        trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok((self.row(&report.report_id, scores), trace))
    }

    pub fn infer(
        &self,
        report: &Report,
        mode: InferenceMode,
    ) -> Result<(PredictionRow, InferenceTrace), InferenceError> {
        match mode {
            InferenceMode::Flat => self.infer_flat(report),
            InferenceMode::Hierarchical => self.infer_hierarchical(report),
        }
    }

    /// Runs every report with `config.parallelism` workers. Output order
    /// follows the corpus regardless of worker count.
    pub fn run_corpus(
        &self,
        corpus: &Corpus,
        mode: InferenceMode,
    ) -> Result<CorpusRun, InferenceError> {
        let start = Instant::now();
        let run = |r: &Report| self.infer(r, mode);
        let results: Vec<_> = if self.config.parallelism == 1 {
            corpus.iter().map(run).collect()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.parallelism)
                .build()
                .map_err(|e| InferenceError::Pool(e.to_string()))?
                .install(|| corpus.reports.par_iter().map(run).collect())
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let mut predictions = Vec::with_capacity(results.len());
        let mut traces = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (report, result) in corpus.iter().zip(results) {
            match result {
                Ok((row, trace)) => {
                    predictions.push(row);
                    traces.push(trace);
                }
                Err(e) => failures.push(ReportFailure {
                    report_id: report.report_id.clone(),
                    message: e.to_string(),
                }),
            }
        }
        let total = corpus.len();
        if !failures.is_empty()
            && failures.len() as f64 > self.config.max_failure_fraction * total as f64
        {
            return Err(InferenceError::TooManyFailures {
                failed: failures.len(),
                total,
                allowed: self.config.max_failure_fraction,
                first: format!("{}: {}", failures[0].report_id, failures[0].message),
            });
        }
        let efficiency = EfficiencyReport::from_traces(mode, &traces, wall_ms);
        Ok(CorpusRun {
            predictions,
            traces,
            failures,
            efficiency,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Modality, Sex};
    use crate::labels::RawLabel;
    use crate::prompting::TemplateSet;
    use crate::scoring::{OracleConfig, OracleScorer};
    use chrono::NaiveDate;

    fn schema() -> &'static LabelSchema {
        LabelSchema::standard()
    }

    fn verbalizer() -> Verbalizer {
        Verbalizer::new(schema(), &TemplateSet::english()).unwrap()
    }

    fn report(id: &str, positives: &[&str]) -> Report {
        let mut gold = vec![RawLabel::Absent; 90];
        for p in positives {
            gold[schema().cell_index(&p.parse().unwrap()).unwrap()] = RawLabel::Present;
        }
        Report {
            report_id: id.into(),
            patient_id: id.into(),
            study_date: NaiveDate::from_ymd_opt(2021, 3, 4).unwrap(),
            modality: Modality::Mre,
            sex: Sex::Male,
            age_years: 40.0,
            raw_text: format!("FINDINGS:\nfindings for {id}\nIMPRESSION:\nsummary"),
            findings: None,
            impression: None,
            gold: Some(gold),
        }
    }

    fn oracle(corpus: &Corpus) -> OracleScorer {
        OracleScorer::from_corpus(
            OracleConfig::default(),
            verbalizer(),
            corpus,
            &HeaderLexicon::default(),
            None,
        )
        .unwrap()
    }

    fn ileum_targets() -> Vec<CellId> {
        [
            "WallThickness",
            "Inflammation",
            "WallEnhancement",
            "Stenosis",
            "PreStenoticDilatation",
            "DWISignal",
            "CombSign",
            "MesentericEdema",
            "Fistula",
            "ReducedMotility",
        ]
        .iter()
        .map(|f| CellId::new("Ileum", f))
        .chain(["Colon.Inflammation".parse().unwrap()])
        .collect()
    }

    #[test]
    fn normal_report_stops_at_root() {
        let corpus = Corpus::new(vec![report("a", &[])]);
        let (v, lex, o) = (verbalizer(), HeaderLexicon::default(), oracle(&corpus));
        let engine =
            InferenceEngine::new(&o, &v, &lex, schema().cells(), InferenceConfig::default())
                .unwrap();
        let (row, trace) = engine.infer_hierarchical(&corpus.reports[0]).unwrap();
        assert_eq!((trace.pairs_scored, trace.scorer_calls), (1, 1));
        assert!(row.cells.values().all(|&c| c == 0));
        assert!(row.scores.values().all(|&s| s == CellScore::Pruned));
    }

    #[test]
    fn ileum_only_report_scores_seventeen_pairs() {
        let corpus = Corpus::new(vec![report("a", &["Ileum.Stenosis", "Ileum.Inflammation"])]);
        let (v, lex, o) = (verbalizer(), HeaderLexicon::default(), oracle(&corpus));
        let engine =
            InferenceEngine::new(&o, &v, &lex, &ileum_targets(), InferenceConfig::default())
                .unwrap();
        let (row, trace) = engine.infer_hierarchical(&corpus.reports[0]).unwrap();
        assert_eq!(trace.pairs_scored, 1 + 6 + 10);
        assert_eq!(trace.scorer_calls, 3);
        assert_eq!(
            row.scores[&"Colon.Inflammation".parse::<CellId>().unwrap()],
            CellScore::Pruned
        );
        let (flat, ftrace) = engine.infer_flat(&corpus.reports[0]).unwrap();
        assert_eq!(ftrace.pairs_scored, 11);
        assert_eq!(flat.cells, row.cells);
        assert_eq!(row.cells.values().filter(|&&c| c == 1).count(), 2);
    }

    #[test]
    fn batches_respect_max_batch() {
        let corpus = Corpus::new(vec![report("a", &["Ileum.Ulcer"])]);
        let config = OracleConfig {
            max_batch: 4,
            ..OracleConfig::default()
        };
        let (v, lex) = (verbalizer(), HeaderLexicon::default());
        let o = OracleScorer::from_corpus(config, v.clone(), &corpus, &lex, None).unwrap();
        let engine =
            InferenceEngine::new(&o, &v, &lex, schema().cells(), InferenceConfig::default())
                .unwrap();
        let (_, flat) = engine.infer_flat(&corpus.reports[0]).unwrap();
        assert_eq!((flat.pairs_scored, flat.scorer_calls), (90, 23));
        let (_, hier) = engine.infer_hierarchical(&corpus.reports[0]).unwrap();
        // scan 1 call, organs 2 calls, 15 ileum leaves 4 calls
        assert_eq!((hier.pairs_scored, hier.scorer_calls), (22, 7));
    }

    #[test]
    fn scorer_errors_carry_report_id_and_bound_failures() {
        let known = report("known", &[]);
        let mut unknown = report("unknown", &[]);
        unknown.raw_text = "FINDINGS:\nnot in the oracle\nIMPRESSION:\nx".into();
        let corpus = Corpus::new(vec![known.clone(), unknown]);
        let (v, lex) = (verbalizer(), HeaderLexicon::default());
        let o = oracle(&Corpus::new(vec![known]));
        let engine =
            InferenceEngine::new(&o, &v, &lex, schema().cells(), InferenceConfig::default())
                .unwrap();
        match engine.run_corpus(&corpus, InferenceMode::Flat) {
            Err(InferenceError::TooManyFailures {
                failed: 1,
                total: 2,
                first,
                ..
            }) => {
                assert!(first.starts_with("unknown"))
            }
            other => panic!("{other:?}"),
        }
        let tolerant = InferenceConfig {
            max_failure_fraction: 0.5,
            ..InferenceConfig::default()
        };
        let engine = InferenceEngine::new(&o, &v, &lex, schema().cells(), tolerant).unwrap();
        let run = engine.run_corpus(&corpus, InferenceMode::Flat).unwrap();
        assert_eq!(run.predictions.len(), 1);
        assert_eq!(run.failures[0].report_id, "unknown");
    }

    #[test]
    fn empty_corpus_gives_zeroed_report() {
        let corpus = Corpus::default();
        let (v, lex) = (verbalizer(), HeaderLexicon::default());
        let o = oracle(&corpus);
        let engine =
            InferenceEngine::new(&o, &v, &lex, schema().cells(), InferenceConfig::default())
                .unwrap();
        let run = engine
            .run_corpus(&corpus, InferenceMode::Hierarchical)
            .unwrap();
        assert!(run.predictions.is_empty());
        assert_eq!(
            (
                run.efficiency.reports,
                run.efficiency.pairs,
                run.efficiency.calls
            ),
            (0, 0, 0)
        );
    }

    #[test]
    fn config_and_tree_validation() {
        let bad = InferenceConfig {
            threshold: 1.0,
            ..InferenceConfig::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(InferenceError::BadThreshold(_))
        ));
        let bad = InferenceConfig {
            parallelism: 0,
            ..InferenceConfig::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(InferenceError::BadParallelism)
        ));
        let dup: Vec<CellId> = vec!["Colon.Ulcer".parse().unwrap(); 2];
        assert!(matches!(
            HierarchyTree::new(schema(), &dup),
            Err(InferenceError::DuplicateTarget(_))
        ));
        assert!(matches!(
            HierarchyTree::new(schema(), &[]),
            Err(InferenceError::NoTargets)
        ));
    }

    #[test]
    fn cell_score_wire_format() {
        let s = serde_json::to_string(&[CellScore::Score(0.93), CellScore::Pruned]).unwrap();
        assert_eq!(s, r#"[0.93,"pruned"]"#);
        let back: Vec<CellScore> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![CellScore::Score(0.93), CellScore::Pruned]);
        assert!(serde_json::from_str::<CellScore>("1.5").is_err());
    }

    #[test]
    fn folds_against_baseline() {
        let mut flat = EfficiencyReport::empty(InferenceMode::Flat);
        flat.calls = 100;
        flat.pairs = 900;
        flat.tokens = 5000;
        flat.wall_ms = 10.0;
        let mut hier = EfficiencyReport::empty(InferenceMode::Hierarchical);
        hier.calls = 50;
        hier.pairs = 300;
        hier.tokens = 0;
        hier.wall_ms = 5.0;
        let folds = hier.with_baseline(&flat).baseline_folds.unwrap();
        assert_eq!(folds.calls, Some(2.0));
        assert_eq!(folds.pairs, Some(3.0));
        assert_eq!(folds.tokens, None);
    }
}
