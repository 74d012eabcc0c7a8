//! Per-label metrics, macro aggregation and paired significance tests.
//!
//! Ratios with a zero denominator are [`Metric::Undefined`] (serialized as
//! `"undefined"`), never silently 0. Macro means skip undefined entries and
//! count them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::EvalError;
use crate::inference::{CellScore, PredictionRow};
use crate::labels::BinaryLabelMatrix;
use crate::schema::CellId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

pub fn confusion(preds: &[u8], golds: &[u8]) -> Result<ConfusionCounts, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::TooFew { needed: 1, got: 0 });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in preds.iter().zip(golds) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// A metric value, or undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn ratio(num: f64, den: f64) -> Metric {
        if den == 0.0 {
            Metric::Undefined
        } else {
            Metric::Value(num / den)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    /// Compatibility with tables that report undefined metrics as 0.
    pub fn or_zero(self) -> f64 {
        self.value().unwrap_or(0.0)
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Metric::Value(_))
    }
}

impl From<f64> for Metric {
    fn from(v: f64) -> Self {
        Metric::Value(v)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.4}"),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) if v.is_finite() => s.serialize_f64(*v),
            _ => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Metric;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"undefined\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Metric, E> {
                Ok(Metric::Value(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Metric, E> {
                Ok(Metric::Value(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Metric, E> {
                Ok(Metric::Value(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Metric, E> {
                match v {
                    "undefined" => Ok(Metric::Undefined),
                    other => Err(E::custom(format!("unexpected metric string {other:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub accuracy: Metric,
    pub f1: Metric,
    pub cohens_kappa: Metric,
    pub balanced_accuracy: Metric,
    pub ppv: Metric,
    pub npv: Metric,
    pub recall: Metric,
    pub specificity: Metric,
    /// Present only when scores were supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<Metric>,
    pub prevalence: Metric,
}

/// Mann–Whitney AUC over `(score, gold)` pairs; ties count one half.
pub fn auc(scored: &[(f64, u8)]) -> Metric {
    let n_pos = scored.iter().filter(|(_, g)| *g != 0).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Metric::Undefined;
    }
    let mut sorted: Vec<(f64, u8)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of midranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos = sorted[i..j].iter().filter(|(_, g)| *g != 0).count();
        rank_sum += midrank * pos as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Metric::Value((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn label_metrics(counts: ConfusionCounts, scores: Option<&[(f64, u8)]>) -> LabelMetrics {
    let tp = counts.tp as f64;
    let fp = counts.fp as f64;
    let tn = counts.tn as f64;
    let fn_ = counts.fn_ as f64;
    let n = tp + fp + tn + fn_;

    let recall = Metric::ratio(tp, tp + fn_);
    let specificity = Metric::ratio(tn, tn + fp);
    let balanced_accuracy = match (recall, specificity) {
        (Metric::Value(r), Metric::Value(s)) => Metric::Value((r + s) / 2.0),
        _ => Metric::Undefined,
    };
    // (p_o - p_e) / (1 - p_e) with the N² factors cancelled, in exact
    // integer arithmetic up to the final division.
    let cohens_kappa = {
        let (a, b, c, d) = (
            counts.tp as i128,
            counts.fp as i128,
            counts.tn as i128,
            counts.fn_ as i128,
        );
        let num = 2 * (a * c - d * b);
        let den = (a + b) * (b + c) + (a + d) * (d + c);
        Metric::ratio(num as f64, den as f64)
    };
    LabelMetrics {
        accuracy: Metric::ratio(tp + tn, n),
        f1: Metric::ratio(2.0 * tp, 2.0 * tp + fp + fn_),
        cohens_kappa,
        balanced_accuracy,
        ppv: Metric::ratio(tp, tp + fp),
        npv: Metric::ratio(tn, tn + fn_),
        recall,
        specificity,
        auc: scores.map(auc),
        prevalence: Metric::ratio(tp + fn_, n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Metric,
    /// Population standard deviation.
    pub sd: Metric,
    pub n: usize,
    /// Labels skipped because the metric was undefined (or absent).
    pub excluded: usize,
}

impl MetricSummary {
    pub fn of(values: &[Metric]) -> MetricSummary {
        let defined: Vec<f64> = values.iter().filter_map(|m| m.value()).collect();
        let n = defined.len();
        let excluded = values.len() - n;
        if n == 0 {
            return MetricSummary {
                mean: Metric::Undefined,
                sd: Metric::Undefined,
                n,
                excluded,
            };
        }
        let mean = defined.iter().sum::<f64>() / n as f64;
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        MetricSummary {
            mean: Metric::Value(mean),
            sd: Metric::Value(var.sqrt()),
            n,
            excluded,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPolicy {
    #[default]
    Exclude,
    /// Treat undefined as 0.
    AsZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub labels: usize,
    pub accuracy: MetricSummary,
    pub f1: MetricSummary,
    pub cohens_kappa: MetricSummary,
    pub balanced_accuracy: MetricSummary,
    pub ppv: MetricSummary,
    pub npv: MetricSummary,
    pub recall: MetricSummary,
    pub specificity: MetricSummary,
    pub auc: MetricSummary,
}

/// Metric names accepted by [`metric_by_name`].
pub const METRIC_NAMES: [&str; 9] = [
    "accuracy",
    "f1",
    "cohens_kappa",
    "balanced_accuracy",
    "ppv",
    "npv",
    "recall",
    "specificity",
    "auc",
];

pub fn metric_by_name(m: &LabelMetrics, name: &str) -> Option<Metric> {
    Some(match name {
        "accuracy" => m.accuracy,
        "f1" => m.f1,
        "cohens_kappa" | "kappa" => m.cohens_kappa,
        "balanced_accuracy" => m.balanced_accuracy,
        "ppv" => m.ppv,
        "npv" => m.npv,
        "recall" => m.recall,
        "specificity" => m.specificity,
        "auc" => m.auc.unwrap_or(Metric::Undefined),
        _ => return None,
    })
}

pub fn macro_aggregate(per_label: &[LabelMetrics]) -> Result<MacroMetrics, EvalError> {
    macro_aggregate_with(per_label, UndefinedPolicy::Exclude)
}

pub fn macro_aggregate_with(
    per_label: &[LabelMetrics],
    policy: UndefinedPolicy,
) -> Result<MacroMetrics, EvalError> {
    if per_label.is_empty() {
        return Err(EvalError::TooFew { needed: 1, got: 0 });
    }
    let summary = |name: &str| {
        let values: Vec<Metric> = per_label
            .iter()
            .map(|m| {
                let v = metric_by_name(m, name).expect("known metric");
                match policy {
                    UndefinedPolicy::Exclude => v,
                    UndefinedPolicy::AsZero => Metric::Value(v.or_zero()),
                }
            })
            .collect();
        MetricSummary::of(&values)
    };
    let auc_values: Vec<Metric> = per_label.iter().filter_map(|m| m.auc).collect();
    let mut auc = MetricSummary::of(&auc_values);
    auc.excluded += per_label.len() - auc_values.len();
    Ok(MacroMetrics {
        labels: per_label.len(),
        accuracy: summary("accuracy"),
        f1: summary("f1"),
        cohens_kappa: summary("cohens_kappa"),
        balanced_accuracy: summary("balanced_accuracy"),
        ppv: summary("ppv"),
        npv: summary("npv"),
        recall: summary("recall"),
        specificity: summary("specificity"),
        auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_difference: f64,
    /// Infinite when the differences are constant and non-zero.
    pub t: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Two-sided paired t-test on `a - b` with `n - 1` degrees of freedom.
pub fn paired_tests(a: &[f64], b: &[f64]) -> Result<PairedTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 3 {
        return Err(EvalError::TooFew { needed: 3, got: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    // Differences equal up to rounding count as zero variance.
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if var.sqrt() <= 1e-12 * scale {
        return Ok(if mean.abs() <= 1e-12 * scale {
            PairedTest {
                n,
                mean_difference: 0.0,
                t: 0.0,
                p: 1.0,
                note: Some("zero variance: vectors are identical".into()),
            }
        } else {
            PairedTest {
                n,
                mean_difference: mean,
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
                note: Some("zero variance: constant non-zero difference, p -> 0".into()),
            }
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).expect("valid degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTest {
        n,
        mean_difference: mean,
        t,
        p,
        note: None,
    })
}

/// Benjamini–Hochberg step-up adjustment, returned in input order.
pub fn bh_correct(p_values: &[f64]) -> Result<Vec<f64>, EvalError> {
    for (index, &value) in p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(EvalError::BadPValue { index, value });
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]).then(i.cmp(&j)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub cell: CellId,
    pub counts: ConfusionCounts,
    pub metrics: LabelMetrics,
    /// Fraction of reports with a score for this cell (pruned cells have none).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_label: Vec<LabelReport>,
    #[serde(rename = "macro")]
    pub macro_metrics: MacroMetrics,
}

/// Scores predictions against gold on `targets`. Every prediction must have
/// a gold row; gold rows without a prediction are ignored.
pub fn evaluate(
    predictions: &[PredictionRow],
    gold: &BinaryLabelMatrix,
    targets: &[CellId],
    with_auc: bool,
) -> Result<Evaluation, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::TooFew { needed: 1, got: 0 });
    }
    let rows: HashMap<&str, usize> = gold
        .row_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut per_label = Vec::with_capacity(targets.len());
    for cell in targets {
        let col = gold.col_index(cell).ok_or_else(|| EvalError::MissingCell {
            report_id: "gold".into(),
            cell: cell.to_string(),
        })?;
        let mut preds = Vec::with_capacity(predictions.len());
        let mut golds = Vec::with_capacity(predictions.len());
        let mut scored = Vec::new();
        for p in predictions {
            let row = *rows
                .get(p.report_id.as_str())
                .ok_or_else(|| EvalError::MissingGold(p.report_id.clone()))?;
            let missing = || EvalError::MissingCell {
                report_id: p.report_id.clone(),
                cell: cell.to_string(),
            };
            let g = gold.get(row, col);
            preds.push(*p.cells.get(cell).ok_or_else(missing)?);
            golds.push(g);
            if let Some(CellScore::Score(s)) = p.scores.get(cell) {
                scored.push((*s, g));
            }
        }
        let counts = confusion(&preds, &golds)?;
        let (scores, coverage) = if with_auc {
            (
                Some(scored.as_slice()),
                Some(scored.len() as f64 / predictions.len() as f64),
            )
        } else {
            (None, None)
        };
        per_label.push(LabelReport {
            cell: cell.clone(),
            counts,
            metrics: label_metrics(counts, scores),
            auc_coverage: coverage,
        });
    }
    let metrics: Vec<LabelMetrics> = per_label.iter().map(|l| l.metrics).collect();
    Ok(Evaluation {
        macro_metrics: macro_aggregate(&metrics)?,
        per_label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub method_a: String,
    pub method_b: String,
    pub metric: String,
    pub n: usize,
    pub t: f64,
    pub p_raw: f64,
    pub p_bh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// All pairwise paired t-tests between methods for each metric, BH-adjusted
/// across the whole table. Each method lists per-label metrics in the same
/// label order; labels undefined in either method are dropped from that pair.
pub fn significance_table(
    methods: &[(String, Vec<LabelMetrics>)],
    metrics: &[&str],
) -> Result<Vec<SignificanceRow>, EvalError> {
    let mut rows = Vec::new();
    for &metric in metrics {
        for (i, (name_a, a)) in methods.iter().enumerate() {
            for (name_b, b) in &methods[i + 1..] {
                if a.len() != b.len() {
                    return Err(EvalError::LengthMismatch(a.len(), b.len()));
                }
                let (xs, ys): (Vec<f64>, Vec<f64>) = a
                    .iter()
                    .zip(b)
                    .filter_map(|(x, y)| {
                        let x = metric_by_name(x, metric)?.value()?;
                        let y = metric_by_name(y, metric)?.value()?;
                        Some((x, y))
                    })
                    .unzip();
                let test = paired_tests(&xs, &ys)?;
                let dropped = a.len() - xs.len();
                let note = match (test.note, dropped) {
                    (note, 0) => note,
                    (None, k) => Some(format!("{k} label(s) undefined in a method were dropped")),
                    (Some(n), k) => Some(format!("{n}; {k} label(s) dropped")),
                };
                rows.push(SignificanceRow {
                    method_a: name_a.clone(),
                    method_b: name_b.clone(),
                    metric: metric.to_string(),
                    n: test.n,
                    t: test.t,
                    p_raw: test.p,
                    p_bh: f64::NAN,
                    note,
                });
            }
        }
    }
    let raw: Vec<f64> = rows.iter().map(|r| r.p_raw).collect();
    for (row, q) in rows.iter_mut().zip(bh_correct(&raw)?) {
        row.p_bh = q;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedSummary {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MacroMetrics>,
    /// Mean ± population SD of the per-seed macro means.
    pub across_seeds: BTreeMap<String, MetricSummary>,
    /// Metrics from confusion counts summed over seeds.
    pub pooled: Vec<LabelReport>,
    pub pooled_macro: MacroMetrics,
}

/// Combines evaluations of the same targets under several seeds.
pub fn summarize_seeds(runs: &[(u64, Evaluation)]) -> Result<MultiSeedSummary, EvalError> {
    let Some((_, first)) = runs.first() else {
        return Err(EvalError::TooFew { needed: 1, got: 0 });
    };
    let n_labels = first.per_label.len();
    let mut pooled: Vec<LabelReport> = first.per_label.clone();
    for (_, eval) in &runs[1..] {
        if eval.per_label.len() != n_labels {
            return Err(EvalError::LengthMismatch(n_labels, eval.per_label.len()));
        }
        for (acc, label) in pooled.iter_mut().zip(&eval.per_label) {
            if acc.cell != label.cell {
                return Err(EvalError::MissingCell {
                    report_id: "seed run".into(),
                    cell: label.cell.to_string(),
                });
            }
            acc.counts = acc.counts.merge(label.counts);
        }
    }
    for label in &mut pooled {
        label.metrics = label_metrics(label.counts, None);
        label.auc_coverage = None;
    }
    let pooled_metrics: Vec<LabelMetrics> = pooled.iter().map(|l| l.metrics).collect();
    let per_seed: Vec<MacroMetrics> = runs.iter().map(|(_, e)| e.macro_metrics).collect();
    let mut across_seeds = BTreeMap::new();
    for name in METRIC_NAMES {
        let means: Vec<Metric> = per_seed.iter().map(|m| macro_field(m, name).mean).collect();
        across_seeds.insert(name.to_string(), MetricSummary::of(&means));
    }
    Ok(MultiSeedSummary {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        per_seed,
        across_seeds,
        pooled_macro: macro_aggregate(&pooled_metrics)?,
        pooled,
    })
}

pub fn macro_field(m: &MacroMetrics, name: &str) -> MetricSummary {
    match name {
        "accuracy" => m.accuracy,
        "f1" => m.f1,
        "cohens_kappa" | "kappa" => m.cohens_kappa,
        "balanced_accuracy" => m.balanced_accuracy,
        "ppv" => m.ppv,
        "npv" => m.npv,
        "recall" => m.recall,
        "specificity" => m.specificity,
        _ => m.auc,
    }
}
