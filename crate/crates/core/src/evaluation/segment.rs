//! Local decoding and partition agreement.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::inference::{FitResult, Posteriors};

/// Most probable state at each time; ties go to the lowest state index.
pub fn segment(post: &Posteriors) -> Vec<usize> {
    (0..post.len())
        .map(|t| {
            let row = post.state_row(t);
            let mut best = 0;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn segment_fit(fit: &FitResult) -> Vec<usize> {
    segment(&fit.posteriors)
}

fn choose2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1 when both partitions are identical, including the case where
/// both put every item in one cluster.
pub fn ari<A, B>(labels_a: &[A], labels_b: &[B]) -> Result<f64>
where
    A: Eq + std::hash::Hash,
    B: Eq + std::hash::Hash,
{
    if labels_a.len() != labels_b.len() {
        return Err(Error::InvalidInput(format!(
            "labelings differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    let n = labels_a.len() as f64;
    let mut cells: HashMap<(&A, &B), f64> = HashMap::new();
    let mut rows: HashMap<&A, f64> = HashMap::new();
    let mut cols: HashMap<&B, f64> = HashMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        *cells.entry((a, b)).or_default() += 1.0;
        *rows.entry(a).or_default() += 1.0;
        *cols.entry(b).or_default() += 1.0;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = if n > 1.0 { sum_a * sum_b / choose2(n) } else { 0.0 };
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(if index == max_index { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}
