//! Inertia sweep over k and the elbow rule.
//!
//! `drop(k) = inertia(k-1) - inertia(k)`. A k qualifies when its next drop
//! falls below half of its own, `drop(k+1) / drop(k) < 0.5`; among those the
//! sharpest falloff (smallest ratio) wins, ties to the smaller k. When none
//! qualifies, or the data has no spread at all, the answer is `k_min`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kmeans::{farthest_point, kmeans_restarts, refine_from, KMeansParams, KMeansResult};
use super::{ClusterConfig, ClusterError};
use crate::exec::ExecMode;

pub const ELBOW_RATIO: f64 = 0.5;
/// Drops smaller than this fraction of the baseline inertia count as flat.
pub const FLAT_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub k: usize,
    pub inertia_by_k: BTreeMap<usize, f64>,
    /// Inertia at `k_min - 1` when that is at least 1; anchors `drop(k_min)`.
    pub baseline_inertia: Option<f64>,
    #[serde(skip)]
    pub runs: BTreeMap<usize, KMeansResult>,
}

fn params(config: &ClusterConfig, k: usize) -> KMeansParams {
    KMeansParams {
        k,
        seed: config.seed,
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
    }
}

/// Runs k-means for every k in `[k_min, k_max]` (plus `k_min - 1` as a
/// baseline) and picks k by the elbow rule.
pub fn sweep_k<P: AsRef<[f64]> + Sync>(
    points: &[P],
    config: &ClusterConfig,
    exec: ExecMode,
) -> Result<KSweep, ClusterError> {
    config.validate()?;
    if points.len() < config.k_max {
        return Err(ClusterError::TooFewPoints {
            points: points.len(),
            k: config.k_max,
        });
    }
    let first = config.k_min.saturating_sub(1).max(1);
    let ks: Vec<usize> = (first..=config.k_max).collect();
    let results = exec.map(&ks, |&k| kmeans_restarts(points, params(config, k), config.restarts, ExecMode::Sequential));
    let mut runs = BTreeMap::new();
    for (k, r) in ks.iter().zip(results) {
        runs.insert(*k, r?);
    }

    // Restarts can land in a worse local optimum at k+1 than at k. Warm-start
    // k+1 from the k solution plus its farthest point, which can only lower
    // inertia, and keep whichever run is better.
    for k in first + 1..=config.k_max {
        let prev = &runs[&(k - 1)];
        if runs[&k].inertia <= prev.inertia {
            continue;
        }
        let mut init = prev.centroids.clone();
        init.push(points[farthest_point(points, prev)].as_ref().to_vec());
        let warm = refine_from(points, init, params(config, k), ExecMode::Sequential);
        if warm.inertia < runs[&k].inertia {
            runs.insert(k, warm);
        }
    }

    let inertia: BTreeMap<usize, f64> = runs.iter().map(|(k, r)| (*k, r.inertia)).collect();
    let baseline_inertia = (first < config.k_min).then(|| inertia[&first]);
    let k = elbow(&inertia, config.k_min, config.k_max);
    let inertia_by_k = inertia.into_iter().filter(|(k, _)| *k >= config.k_min).collect();
    runs.retain(|key, _| *key >= config.k_min);
    Ok(KSweep {
        k,
        inertia_by_k,
        baseline_inertia,
        runs,
    })
}

/// The elbow rule over an inertia table that may include `k_min - 1`.
pub fn elbow(inertia: &BTreeMap<usize, f64>, k_min: usize, k_max: usize) -> usize {
    let scale = inertia.values().copied().fold(0.0, f64::max);
    if !(scale > 0.0) {
        return k_min;
    }
    let flat = FLAT_FRACTION * scale;
    let drop = |k: usize| -> Option<f64> { Some(inertia.get(&(k - 1))? - inertia.get(&k)?) };
    let mut best: Option<(usize, f64)> = None;
    for k in k_min.max(2)..k_max {
        let (Some(here), Some(next)) = (drop(k), drop(k + 1)) else {
            continue;
        };
        if here <= flat {
            continue;
        }
        let ratio = next.max(0.0) / here;
        if ratio < ELBOW_RATIO && best.map_or(true, |(_, r)| ratio < r) {
            best = Some((k, ratio));
        }
    }
    best.map_or(k_min, |(k, _)| k)
}

pub fn choose_k<P: AsRef<[f64]> + Sync>(points: &[P], config: &ClusterConfig) -> Result<usize, ClusterError> {
    Ok(sweep_k(points, config, ExecMode::default())?.k)
}
