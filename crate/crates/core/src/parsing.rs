//! Findings/Impression segmentation and text normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::SegmentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Taken from the record's own section fields.
    Explicit,
    /// Extracted from `raw_text`.
    Parsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionPair {
    pub findings_text: String,
    pub impression_text: String,
    pub provenance: Provenance,
}

/// Header strings that open each section. Matching is exact and
/// case-sensitive; list every variant a corpus uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderLexicon {
    pub findings: Vec<String>,
    pub impression: Vec<String>,
}

impl Default for HeaderLexicon {
    fn default() -> Self {
        HeaderLexicon {
            findings: vec!["FINDINGS:".into(), "Findings:".into()],
            impression: vec!["IMPRESSION:".into(), "Impression:".into()],
        }
    }
}

impl HeaderLexicon {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let lex: HeaderLexicon = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if lex.impression.iter().all(|h| h.trim().is_empty()) {
            return Err("header lexicon lists no impression header".into());
        }
        Ok(lex)
    }
}

fn is_horizontal_space(c: char) -> bool {
    c.is_whitespace() && c != '\n'
}

/// NFC-normalizes `text`, unifies line endings to `\n`, collapses runs of
/// horizontal whitespace to one space and trims every line. Leading and
/// trailing blank lines are dropped. Nothing else is touched, so right-to-left
/// text and directional marks pass through unchanged.
pub fn normalize_text(text: &str) -> String {
    let composed: String = text.nfc().collect();
    let unified = composed.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<String> = unified
        .split('\n')
        .map(|line| {
            line.split(is_horizontal_space)
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    lines.join("\n").trim_matches('\n').to_string()
}

pub fn normalize_bytes(bytes: &[u8]) -> Result<String, SegmentError> {
    std::str::from_utf8(bytes)
        .map(normalize_text)
        .map_err(|e| SegmentError::InvalidUtf8(e.to_string()))
}

/// Splits a report into Findings and Impression.
///
/// The impression starts after the last impression header. The findings run
/// from the first findings header before it (or the start of the document)
/// up to that impression header.
pub fn segment_report(
    raw_text: &str,
    lexicon: &HeaderLexicon,
) -> Result<SectionPair, SegmentError> {
    if raw_text.trim().is_empty() {
        return Err(SegmentError::EmptyInput);
    }

    let impression = lexicon
        .impression
        .iter()
        .filter(|h| !h.is_empty())
        .filter_map(|h| raw_text.rfind(h.as_str()).map(|pos| (pos, h.len())))
        .max();

    let body_end = impression.map(|(pos, _)| pos).unwrap_or(raw_text.len());
    let findings_start = lexicon
        .findings
        .iter()
        .filter(|h| !h.is_empty())
        .filter_map(|h| {
            raw_text[..body_end]
                .find(h.as_str())
                .map(|pos| (pos, std::cmp::Reverse(h.len())))
        })
        .min()
        .map(|(pos, std::cmp::Reverse(len))| pos + len)
        .unwrap_or(0);

    let findings_text = normalize_text(&raw_text[findings_start..body_end]);
    let Some((pos, len)) = impression else {
        return Err(SegmentError::NoImpressionHeader {
            findings: findings_text,
        });
    };
    let impression_text = normalize_text(&raw_text[pos + len..]);

    if findings_text.is_empty() {
        return Err(SegmentError::EmptySection("findings"));
    }
    if impression_text.is_empty() {
        return Err(SegmentError::EmptySection("impression"));
    }
    Ok(SectionPair {
        findings_text,
        impression_text,
        provenance: Provenance::Parsed,
    })
}
