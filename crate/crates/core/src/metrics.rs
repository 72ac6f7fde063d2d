//! Partition agreement and response-quality rates.

use std::collections::HashMap;
use std::hash::Hash;

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1.0 when both labelings are trivially identical in structure
/// (e.g. a single cluster each), where the index is otherwise undefined.
pub fn adjusted_rand_index<A, B>(left: &[A], right: &[B]) -> f64
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    assert_eq!(left.len(), right.len(), "labelings must cover the same items");
    let n = left.len() as u64;
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (a, b) in left.iter().zip(right) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Fraction of responses flagged as hallucination suspects.
pub fn suspect_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}
