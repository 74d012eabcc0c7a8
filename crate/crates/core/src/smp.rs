//! Section Matching Prediction pairs: does a Findings section and an
//! Impression section come from the same report?

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::SmpError;
use crate::parsing::HeaderLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum SmpTarget {
    NotMatch,
    Match,
}

impl From<SmpTarget> for u8 {
    fn from(t: SmpTarget) -> u8 {
        match t {
            SmpTarget::NotMatch => 0,
            SmpTarget::Match => 1,
        }
    }
}

impl TryFrom<u8> for SmpTarget {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(SmpTarget::NotMatch),
            1 => Ok(SmpTarget::Match),
            other => Err(format!("SMP target must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmpPair {
    /// Findings of report i.
    pub premise: String,
    /// Impression of report j.
    pub second: String,
    pub target: SmpTarget,
    /// `(i, j)` as report ids.
    pub source_ids: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmpOptions {
    pub negatives_per_positive: f64,
    /// Exclude impressions from other reports of the same patient.
    pub block_same_patient: bool,
    pub seed: u64,
}

impl Default for SmpOptions {
    fn default() -> Self {
        SmpOptions {
            negatives_per_positive: 1.0,
            block_same_patient: true,
            seed: 0,
        }
    }
}

struct Eligible<'a> {
    report_id: &'a str,
    patient: usize,
    findings: String,
    impression: String,
}

/// One Match pair per eligible report and `ceil(ratio)` NotMatch pairs whose
/// impressions are drawn without replacement from other reports. The output
/// order is a seeded shuffle.
pub fn generate_smp_pairs(
    corpus: &Corpus,
    lexicon: &HeaderLexicon,
    options: &SmpOptions,
) -> Result<Vec<SmpPair>, SmpError> {
    let ratio = options.negatives_per_positive;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(SmpError::BadRatio(ratio));
    }
    let k = ratio.ceil() as usize;

    let mut patients: HashMap<&str, usize> = HashMap::new();
    let eligible: Vec<Eligible> = corpus
        .iter()
        .filter_map(|r| {
            let pair = r.sections(lexicon).ok()?;
            if pair.findings_text.is_empty() || pair.impression_text.is_empty() {
                return None;
            }
            let next = patients.len();
            let patient = if options.block_same_patient {
                *patients.entry(r.patient_id.as_str()).or_insert(next)
            } else {
                next
            };
            if !options.block_same_patient {
                patients.insert(r.report_id.as_str(), next);
            }
            Some(Eligible {
                report_id: &r.report_id,
                patient,
                findings: pair.findings_text,
                impression: pair.impression_text,
            })
        })
        .collect();
    let n = eligible.len();
    if n < 2 {
        return Err(SmpError::TooFewReports(n));
    }
    let mut group_size = vec![0usize; patients.len()];
    for e in &eligible {
        group_size[e.patient] += 1;
    }

    let per_report: Vec<Vec<SmpPair>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let me = &eligible[i];
            let available = n - group_size[me.patient];
            if available < k {
                return Err(SmpError::InsufficientNegatives {
                    report_id: me.report_id.to_string(),
                    available,
                    needed: k,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(i as u64 + 1);
            let partners = sample_partners(&eligible, i, k, available, &mut rng);

            let mut out = Vec::with_capacity(k + 1);
            out.push(SmpPair {
                premise: me.findings.clone(),
                second: me.impression.clone(),
                target: SmpTarget::Match,
                source_ids: (me.report_id.to_string(), me.report_id.to_string()),
            });
            for j in partners {
                out.push(SmpPair {
                    premise: me.findings.clone(),
                    second: eligible[j].impression.clone(),
                    target: SmpTarget::NotMatch,
                    source_ids: (me.report_id.to_string(), eligible[j].report_id.to_string()),
                });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut pairs: Vec<SmpPair> = per_report.into_iter().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

/// `k` distinct partners of `i` from other patients.
fn sample_partners(
    eligible: &[Eligible],
    i: usize,
    k: usize,
    available: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let own = eligible[i].patient;
    if 2 * k > available {
        let mut cands: Vec<usize> = (0..eligible.len())
            .filter(|&j| eligible[j].patient != own)
            .collect();
        let (chosen, _) = cands.partial_shuffle(rng, k);
        return chosen.to_vec();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut seen = HashSet::with_capacity(k);
    while chosen.len() < k {
        let j = rng.gen_range(0..eligible.len());
        if eligible[j].patient != own && seen.insert(j) {
            chosen.push(j);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Modality, Report, Sex};
    use chrono::NaiveDate;

    fn report(id: &str, patient: &str) -> Report {
        Report {
            report_id: id.into(),
            patient_id: patient.into(),
            study_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            modality: Modality::Mre,
            sex: Sex::Female,
            age_years: 30.0,
            raw_text: format!("FINDINGS:\nfindings of {id}\nIMPRESSION:\nimpression of {id}"),
            findings: None,
            impression: None,
            gold: None,
        }
    }

    fn corpus(n: usize) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| report(&format!("r{i}"), &format!("p{i}")))
                .collect(),
        )
    }

    #[test]
    fn two_reports_pair_with_each_other() {
        let pairs = generate_smp_pairs(
            &corpus(2),
            &HeaderLexicon::default(),
            &SmpOptions::default(),
        )
        .unwrap();
        assert_eq!(pairs.len(), 4);
        for p in pairs.iter().filter(|p| p.target == SmpTarget::NotMatch) {
            assert_ne!(p.source_ids.0, p.source_ids.1);
            assert_eq!(p.second, format!("impression of {}", p.source_ids.1));
        }
    }

    #[test]
    fn ratio_is_rounded_up_and_negatives_are_distinct() {
        let options = SmpOptions {
            negatives_per_positive: 2.5,
            ..SmpOptions::default()
        };
        let pairs = generate_smp_pairs(&corpus(10), &HeaderLexicon::default(), &options).unwrap();
        let matches = pairs
            .iter()
            .filter(|p| p.target == SmpTarget::Match)
            .count();
        assert_eq!(matches, 10);
        assert_eq!(pairs.len() - matches, 30);
        let negs: HashSet<_> = pairs
            .iter()
            .filter(|p| p.target == SmpTarget::NotMatch)
            .map(|p| p.source_ids.clone())
            .collect();
        assert_eq!(negs.len(), 30);
    }

    #[test]
    fn same_patient_is_blocked() {
        let mut reports: Vec<Report> = (0..6).map(|i| report(&format!("a{i}"), "pa")).collect();
        reports.extend((0..6).map(|i| report(&format!("b{i}"), "pb")));
        let c = Corpus::new(reports);
        let options = SmpOptions {
            negatives_per_positive: 3.0,
            ..SmpOptions::default()
        };
        for p in generate_smp_pairs(&c, &HeaderLexicon::default(), &options).unwrap() {
            if p.target == SmpTarget::NotMatch {
                assert_ne!(p.source_ids.0[..1], p.source_ids.1[..1]);
            }
        }
        let options = SmpOptions {
            negatives_per_positive: 7.0,
            ..SmpOptions::default()
        };
        assert!(matches!(
            generate_smp_pairs(&c, &HeaderLexicon::default(), &options),
            Err(SmpError::InsufficientNegatives {
                available: 6,
                needed: 7,
                ..
            })
        ));
        let unblocked = SmpOptions {
            block_same_patient: false,
            ..options
        };
        assert_eq!(
            generate_smp_pairs(&c, &HeaderLexicon::default(), &unblocked)
                .unwrap()
                .len(),
            12 * 8
        );
    }

    #[test]
    fn deterministic_and_validated() {
        let lex = HeaderLexicon::default();
        let a = generate_smp_pairs(&corpus(100), &lex, &SmpOptions::default()).unwrap();
        let b = generate_smp_pairs(&corpus(100), &lex, &SmpOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            generate_smp_pairs(&corpus(1), &lex, &SmpOptions::default()),
            Err(SmpError::TooFewReports(1))
        ));
        let bad = SmpOptions {
            negatives_per_positive: 0.0,
            ..SmpOptions::default()
        };
        assert!(matches!(
            generate_smp_pairs(&corpus(5), &lex, &bad),
            Err(SmpError::BadRatio(_))
        ));
    }

    #[test]
    fn wire_format() {
        let p = SmpPair {
            premise: "f".into(),
            second: "i".into(),
            target: SmpTarget::Match,
            source_ids: ("r1".into(), "r1".into()),
        };
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"premise":"f","second":"i","target":1,"source_ids":["r1","r1"]}"#
        );
    }
}
