//! Ground-truth scorer for desk-scale runs.
//!
//! Finding prompts are answered from gold labels; organ and scan prompts by
//! the OR of their descendant cells, which makes the oracle consistent with
//! the inference tree. Optional noise flips each answer with probability
//! `noise_epsilon`, decided by a hash of (seed, premise, hypothesis) so the
//! same pair always gets the same answer regardless of call order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::ScoreError;
use crate::parsing::HeaderLexicon;
use crate::prompting::{PromptNode, Verbalizer};
use crate::schema::CellId;
use crate::scoring::tokens::TokenizerSpec;
use crate::scoring::{ScoreRequest, ScoreResponse, Scorer, ScorerInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub score_when_true: f64,
    pub score_when_false: f64,
    pub noise_epsilon: f64,
    pub seed: u64,
    /// Decision threshold the scores must straddle.
    pub threshold: f64,
    pub max_batch: usize,
    pub tokenizer: TokenizerSpec,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            score_when_true: 0.99,
            score_when_false: 0.01,
            noise_epsilon: 0.0,
            seed: 0,
            threshold: 0.5,
            max_batch: 64,
            tokenizer: TokenizerSpec::default(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: String| Err(ScoreError::BadOracle(m));
        if !(0.0..0.5).contains(&self.noise_epsilon) {
            return bad(format!(
                "noise_epsilon {} not in [0, 0.5)",
                self.noise_epsilon
            ));
        }
        for s in [self.score_when_true, self.score_when_false] {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("score {s} not in [0, 1]"));
            }
        }
        if !(self.score_when_true > self.threshold && self.threshold > self.score_when_false) {
            return bad(format!(
                "need score_when_true ({}) > threshold ({}) > score_when_false ({})",
                self.score_when_true, self.threshold, self.score_when_false
            ));
        }
        if self.max_batch == 0 {
            return bad("max_batch must be positive".into());
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform draw in [0, 1) determined by the seed and both texts.
fn pair_uniform(seed: u64, premise: &str, hypothesis: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ splitmix64(seed);
    // 0xff never occurs in UTF-8, so it separates the two texts unambiguously.
    for b in premise
        .bytes()
        .chain(std::iter::once(0xff))
        .chain(hypothesis.bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (splitmix64(h) >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone)]
pub struct OracleScorer {
    config: OracleConfig,
    verbalizer: Verbalizer,
    gold: HashMap<String, Vec<u8>>,
    /// Cells that count toward organ and scan answers.
    in_hierarchy: Vec<bool>,
}

impl OracleScorer {
    /// `entries` maps premise text to a binary gold row in schema order.
    /// `hierarchy` restricts which cells feed level answers (all when `None`).
    pub fn new<I>(
        config: OracleConfig,
        verbalizer: Verbalizer,
        entries: I,
        hierarchy: Option<&[CellId]>,
    ) -> Result<Self, ScoreError>
    where
        I: IntoIterator<Item = (String, Vec<u8>)>,
    {
        config.validate()?;
        let schema = verbalizer.schema();
        let n = schema.n_cells();
        let in_hierarchy = match hierarchy {
            None => vec![true; n],
            Some(cells) => {
                let mut mask = vec![false; n];
                for c in cells {
                    let idx = schema
                        .cell_index(c)
                        .ok_or_else(|| ScoreError::BadOracle(format!("unknown cell {c}")))?;
                    mask[idx] = true;
                }
                mask
            }
        };
        let mut gold: HashMap<String, Vec<u8>> = HashMap::new();
        for (premise, row) in entries {
            if row.len() != n {
                return Err(ScoreError::BadOracle(format!(
                    "gold row has {} cells, expected {n}",
                    row.len()
                )));
            }
            match gold.get(&premise) {
                Some(existing) if *existing != row => {
                    return Err(ScoreError::BadOracle(
                        "two reports share a premise but disagree on gold labels".into(),
                    ))
                }
                Some(_) => {}
                None => {
                    gold.insert(premise, row);
                }
            }
        }
        Ok(OracleScorer {
            config,
            verbalizer,
            gold,
            in_hierarchy,
        })
    }

    /// Oracle over every annotated report of a corpus, keyed by its premise.
    pub fn from_corpus(
        config: OracleConfig,
        verbalizer: Verbalizer,
        corpus: &Corpus,
        lexicon: &HeaderLexicon,
        hierarchy: Option<&[CellId]>,
    ) -> Result<Self, ScoreError> {
        let mut entries = Vec::with_capacity(corpus.len());
        for report in corpus.iter() {
            let Some(gold) = report.binary_gold() else {
                continue;
            };
            if let Ok(premise) = report.premise(lexicon) {
                entries.push((premise, gold));
            }
        }
        Self::new(config, verbalizer, entries, hierarchy)
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// Noise-free answer for one pair.
    pub fn truth(&self, premise: &str, hypothesis: &str) -> Result<bool, ScoreError> {
        let gold = self.gold.get(premise).ok_or(ScoreError::UnknownPremise)?;
        let node = self
            .verbalizer
            .node_of(hypothesis)
            .ok_or_else(|| ScoreError::UnknownHypothesis(hypothesis.to_string()))?;
        let schema = self.verbalizer.schema();
        let positive = |c: usize| self.in_hierarchy[c] && gold[c] == 1;
        Ok(match node {
            PromptNode::Finding(c) => gold[c] == 1,
            PromptNode::Organ(o) => schema.organ_cells(o).any(positive),
            PromptNode::Scan => (0..schema.n_cells()).any(positive),
        })
    }

    /// Whether noise flips the answer for this pair.
    pub fn flipped(&self, premise: &str, hypothesis: &str) -> bool {
        self.config.noise_epsilon > 0.0
            && pair_uniform(self.config.seed, premise, hypothesis) < self.config.noise_epsilon
    }
}

impl Scorer for OracleScorer {
    fn info(&self) -> ScorerInfo {
        ScorerInfo {
            max_batch: self.config.max_batch,
            max_sequence_length: None,
            model_id: format!(
                "oracle(eps={},seed={})",
                self.config.noise_epsilon, self.config.seed
            ),
        }
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        request.check_size(self.config.max_batch)?;
        let mut scores = Vec::with_capacity(request.len());
        let mut token_counts = Vec::with_capacity(request.len());
        for pair in &request.pairs {
            let answer = self.truth(&pair.premise, &pair.hypothesis)?
                ^ self.flipped(&pair.premise, &pair.hypothesis);
            scores.push(if answer {
                self.config.score_when_true
            } else {
                self.config.score_when_false
            });
            token_counts.push(
                self.config
                    .tokenizer
                    .count_pair(&pair.premise, &pair.hypothesis) as u64,
            );
        }
        Ok(ScoreResponse {
            scores,
            token_counts,
            model_id: self.info().model_id,
            cache_hits: Vec::new(),
        })
    }
}
