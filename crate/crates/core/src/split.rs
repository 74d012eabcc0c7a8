//! Multilabel iterative stratification into a train and a test fold.
//!
//! Labels (or label pairs, in second-order mode) are processed rarest first.
//! Each report carrying the current label goes to the fold with the greatest
//! remaining desired count for that label, ties broken by remaining fold
//! capacity and then by a seeded draw. A refinement pass then swaps
//! train/test report pairs while that reduces the squared deviation of
//! per-label test counts from their targets; fold sizes are unchanged.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::LabelError;
use crate::labels::BinaryLabelMatrix;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.66;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratificationOrder {
    /// Single labels.
    First,
    /// Single labels and co-occurring label pairs.
    #[default]
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    pub order: StratificationOrder,
    /// Upper bound on refinement sweeps; 0 disables refinement.
    pub refine_passes: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            order: StratificationOrder::Second,
            refine_passes: 20,
        }
    }
}

pub fn stratified_split(
    matrix: &BinaryLabelMatrix,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitAssignment, LabelError> {
    stratified_split_with(matrix, train_fraction, seed, SplitOptions::default())
}

/// Label keys for each row: its positive columns, plus in second-order mode
/// every pair of them.
fn row_keys(matrix: &BinaryLabelMatrix, order: StratificationOrder) -> (Vec<Vec<usize>>, usize) {
    let n_cols = matrix.n_cols();
    let key_space = match order {
        StratificationOrder::First => n_cols,
        StratificationOrder::Second => n_cols + n_cols * n_cols,
    };
    let keys = (0..matrix.n_rows())
        .map(|r| {
            let pos: Vec<usize> = (0..n_cols).filter(|&c| matrix.get(r, c) == 1).collect();
            let mut keys = pos.clone();
            if order == StratificationOrder::Second {
                for (i, &a) in pos.iter().enumerate() {
                    for &b in &pos[i + 1..] {
                        keys.push(n_cols + a * n_cols + b);
                    }
                }
            }
            keys
        })
        .collect();
    (keys, key_space)
}

pub fn stratified_split_with(
    matrix: &BinaryLabelMatrix,
    train_fraction: f64,
    seed: u64,
    options: SplitOptions,
) -> Result<SplitAssignment, LabelError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(LabelError::BadFraction(train_fraction));
    }
    let n = matrix.n_rows();
    if n == 0 {
        return Err(LabelError::EmptyMatrix);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratios = [train_fraction, 1.0 - train_fraction];
    let (keys, key_space) = row_keys(matrix, options.order);

    let mut remaining = vec![0usize; key_space];
    for row in &keys {
        for &k in row {
            remaining[k] += 1;
        }
    }
    let mut desired: Vec<Vec<f64>> = ratios
        .iter()
        .map(|r| remaining.iter().map(|&c| c as f64 * r).collect())
        .collect();
    let mut capacity: Vec<f64> = ratios.iter().map(|r| n as f64 * r).collect();

    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); key_space];
    let mut order_rows: Vec<usize> = (0..n).collect();
    order_rows.shuffle(&mut rng);
    for &r in &order_rows {
        for &k in &keys[r] {
            rows_of[k].push(r);
        }
    }

    let mut fold: Vec<Option<usize>> = vec![None; n];
    let mut unassigned = n;

    let pick = |cands: &[usize], rng: &mut ChaCha8Rng| cands[rng.gen_range(0..cands.len())];
    while let Some(label) = (0..key_space)
        .filter(|&k| remaining[k] > 0)
        .min_by_key(|&k| (remaining[k], k))
    {
        for &r in &rows_of[label] {
            if fold[r].is_some() {
                continue;
            }
            let best = desired[0][label].max(desired[1][label]);
            let mut cands: Vec<usize> = (0..2).filter(|&f| desired[f][label] == best).collect();
            if cands.len() > 1 {
                let cap = capacity[0].max(capacity[1]);
                cands.retain(|&f| capacity[f] == cap);
            }
            let f = pick(&cands, &mut rng);
            fold[r] = Some(f);
            unassigned -= 1;
            capacity[f] -= 1.0;
            for &k in &keys[r] {
                desired[f][k] -= 1.0;
                remaining[k] -= 1;
            }
        }
    }

    if unassigned > 0 {
        for &r in &order_rows {
            if fold[r].is_none() {
                let cap = capacity[0].max(capacity[1]);
                let cands: Vec<usize> = (0..2).filter(|&f| capacity[f] == cap).collect();
                let f = pick(&cands, &mut rng);
                fold[r] = Some(f);
                capacity[f] -= 1.0;
            }
        }
    }

    let mut in_test: Vec<bool> = fold.iter().map(|f| *f == Some(1)).collect();
    refine(
        matrix,
        &mut in_test,
        1.0 - train_fraction,
        options.refine_passes,
    );

    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (id, &t) in matrix.row_ids().iter().zip(&in_test) {
        if t {
            test_ids.push(id.clone());
        } else {
            train_ids.push(id.clone());
        }
    }
    Ok(SplitAssignment {
        seed,
        train_fraction,
        train_ids,
        test_ids,
    })
}

/// Best-improvement pair swaps on per-label test-count deviation.
fn refine(matrix: &BinaryLabelMatrix, in_test: &mut [bool], test_fraction: f64, passes: usize) {
    let n_cols = matrix.n_cols();
    let positives: Vec<Vec<usize>> = (0..matrix.n_rows())
        .map(|r| (0..n_cols).filter(|&c| matrix.get(r, c) == 1).collect())
        .collect();
    let mut dev: Vec<f64> = matrix
        .column_sums()
        .iter()
        .map(|&s| -(s as f64 * test_fraction).round())
        .collect();
    for (r, pos) in positives.iter().enumerate() {
        if in_test[r] {
            for &c in pos {
                dev[c] += 1.0;
            }
        }
    }
    let mut delta = vec![0.0f64; n_cols];
    for _ in 0..passes {
        let mut improved = false;
        for a in 0..in_test.len() {
            if in_test[a] {
                continue;
            }
            // a moves train -> test, b moves test -> train.
            let mut best: Option<(f64, usize)> = None;
            for b in 0..in_test.len() {
                if !in_test[b] {
                    continue;
                }
                for &c in &positives[a] {
                    delta[c] += 1.0;
                }
                for &c in &positives[b] {
                    delta[c] -= 1.0;
                }
                let mut gain = 0.0;
                for &c in positives[a].iter().chain(&positives[b]) {
                    let d = std::mem::take(&mut delta[c]);
                    gain += (dev[c] + d).powi(2) - dev[c].powi(2);
                }
                if gain < -1e-9 && best.is_none_or(|(g, _)| gain < g) {
                    best = Some((gain, b));
                }
            }
            if let Some((_, b)) = best {
                in_test[a] = true;
                in_test[b] = false;
                for &c in &positives[a] {
                    dev[c] += 1.0;
                }
                for &c in &positives[b] {
                    dev[c] -= 1.0;
                }
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}
