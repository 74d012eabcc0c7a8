//! Token accounting for efficiency traces.

use serde::{Deserialize, Serialize};

use crate::prompting::PairInput;

/// How pair lengths are counted. Counts feed traces and premise truncation
/// only; they never influence scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    /// One token per whitespace-delimited word, plus the pair markers.
    Whitespace { special_tokens: usize },
    /// `ceil(chars / chars_per_token)` per segment, plus the pair markers.
    Chars {
        chars_per_token: usize,
        special_tokens: usize,
    },
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        TokenizerSpec::Whitespace { special_tokens: 3 }
    }
}

impl TokenizerSpec {
    fn special(&self) -> usize {
        match *self {
            TokenizerSpec::Whitespace { special_tokens }
            | TokenizerSpec::Chars { special_tokens, .. } => special_tokens,
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match *self {
            TokenizerSpec::Whitespace { .. } => text.split_whitespace().count(),
            TokenizerSpec::Chars {
                chars_per_token, ..
            } => text.chars().count().div_ceil(chars_per_token.max(1)),
        }
    }

    pub fn count_pair(&self, premise: &str, hypothesis: &str) -> usize {
        self.count(premise) + self.count(hypothesis) + self.special()
    }

    /// Keeps the leading `max_tokens` tokens of `text`.
    pub fn truncate(&self, text: &str, max_tokens: usize) -> String {
        match *self {
            TokenizerSpec::Whitespace { .. } => text
                .split_whitespace()
                .take(max_tokens)
                .collect::<Vec<_>>()
                .join(" "),
            TokenizerSpec::Chars {
                chars_per_token, ..
            } => text
                .chars()
                .take(max_tokens * chars_per_token.max(1))
                .collect(),
        }
    }
}

pub fn count_tokens(pair: &PairInput, spec: &TokenizerSpec) -> usize {
    spec.count_pair(&pair.premise, &pair.hypothesis)
}
