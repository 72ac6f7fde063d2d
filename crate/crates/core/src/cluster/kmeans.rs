//! Deterministic Lloyd's k-means with k-means++ seeding, finished by
//! single-point transfer sweeps that leave a Lloyd fixed point whenever
//! moving one point lowers inertia.
//!
//! All floating-point accumulation runs left to right in point-index order,
//! so a fixed `(points, k, seed)` gives bitwise-identical output regardless
//! of [`ExecMode`]. Only the per-point assignment step fans out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::exec::ExecMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment, update and transfer sweep, in order.
    pub history: Vec<f64>,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x - y;
        acc + d * d
    })
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn inertia_of<P: AsRef<[f64]>>(points: &[P], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .fold(0.0, |acc, (p, &a)| acc + squared_distance(p.as_ref(), &centroids[a]))
}

fn means<P: AsRef<[f64]>>(points: &[P], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        debug_assert!(n > 0, "empty cluster reached the update step");
        let n = n.max(1) as f64;
        s.iter_mut().for_each(|x| *x /= n);
    }
    sums
}

fn plus_plus_init<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), points[chosen[0]].as_ref()))
        .collect();
    while chosen.len() < k {
        let total = d2.iter().fold(0.0, |a, b| a + b);
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive mass has a positive entry")
        } else {
            // Every remaining point coincides with a chosen one.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p.as_ref(), points[next].as_ref());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen.iter().map(|&i| points[i].as_ref().to_vec()).collect()
}

/// Gives every empty cluster the point farthest from its own centroid,
/// drawn only from clusters that keep at least one member.
fn repair_empty<P: AsRef<[f64]>>(
    points: &[P],
    assignments: &mut [usize],
    distances: &mut [f64],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            if best.map_or(true, |b| distances[i] > distances[b]) {
                best = Some(i);
            }
        }
        let i = best.expect("at least k points guarantee a donor cluster");
        sizes[assignments[i]] -= 1;
        sizes[j] = 1;
        assignments[i] = j;
        distances[i] = 0.0;
        centroids[j] = points[i].as_ref().to_vec();
    }
}

fn assign<P: AsRef<[f64]> + Sync>(
    points: &[P],
    centroids: &[Vec<f64>],
    exec: ExecMode,
) -> (Vec<usize>, Vec<f64>) {
    let pairs = exec.map(points, |p| nearest(p.as_ref(), centroids));
    pairs.into_iter().unzip()
}

fn check_points<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<(), ClusterError> {
    if k == 0 || points.len() < k {
        return Err(ClusterError::TooFewPoints {
            points: points.len(),
            k,
        });
    }
    let dim = points[0].as_ref().len();
    if dim == 0 || points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(ClusterError::InvalidInput("points must share a nonzero dimension".into()));
    }
    if points.iter().any(|p| p.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(ClusterError::InvalidInput("non-finite coordinate".into()));
    }
    Ok(())
}

pub fn kmeans<P: AsRef<[f64]> + Sync>(points: &[P], params: KMeansParams) -> Result<KMeansResult, ClusterError> {
    kmeans_with(points, params, ExecMode::default())
}

/// Single run from one k-means++ seeding. `stream` selects an independent
/// random stream under the same seed (used for restarts).
fn run_once<P: AsRef<[f64]> + Sync>(
    points: &[P],
    params: KMeansParams,
    stream: u64,
    exec: ExecMode,
) -> Result<KMeansResult, ClusterError> {
    check_points(points, params.k)?;
    if !(params.tolerance > 0.0) {
        return Err(ClusterError::InvalidInput("tolerance must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);

    let centroids = plus_plus_init(points, params.k, &mut rng);
    Ok(refine_from(points, centroids, params, exec))
}

pub fn kmeans_with<P: AsRef<[f64]> + Sync>(
    points: &[P],
    params: KMeansParams,
    exec: ExecMode,
) -> Result<KMeansResult, ClusterError> {
    run_once(points, params, 0, exec)
}

/// Best of `restarts` independent seedings (lowest inertia, ties to the
/// earliest restart). Restarts run concurrently under [`ExecMode::Parallel`].
pub fn kmeans_restarts<P: AsRef<[f64]> + Sync>(
    points: &[P],
    params: KMeansParams,
    restarts: usize,
    exec: ExecMode,
) -> Result<KMeansResult, ClusterError> {
    let runs = exec.map_range(restarts.max(1), |r| {
        // The inner assignment step stays sequential; restarts are the
        // coarser, better-balanced unit of parallel work here.
        run_once(points, params, r as u64, ExecMode::Sequential)
    });
    let mut best: Option<KMeansResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Lloyd iterations from explicit starting centroids (no seeding).
pub(crate) fn refine_from<P: AsRef<[f64]> + Sync>(
    points: &[P],
    mut centroids: Vec<Vec<f64>>,
    params: KMeansParams,
    exec: ExecMode,
) -> KMeansResult {
    let k = centroids.len();
    let dim = centroids[0].len();
    let (mut assignments, mut distances) = assign(points, &centroids, exec);
    repair_empty(points, &mut assignments, &mut distances, &mut centroids);
    let mut history = vec![inertia_of(points, &assignments, &centroids)];
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let updated = means(points, &assignments, k, dim);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        history.push(inertia_of(points, &assignments, &centroids));
        let (mut next, mut next_d) = assign(points, &centroids, exec);
        repair_empty(points, &mut next, &mut next_d, &mut centroids);
        let changed = next != assignments;
        assignments = next;
        history.push(inertia_of(points, &assignments, &centroids));
        if !changed && shift < params.tolerance {
            break;
        }
    }
    let mut centroids = means(points, &assignments, k, dim);
    let mut inertia = inertia_of(points, &assignments, &centroids);
    while transfer_pass(points, &mut assignments, &mut centroids) {
        let polished = inertia_of(points, &assignments, &centroids);
        if polished >= inertia {
            break;
        }
        inertia = polished;
        history.push(inertia);
    }
    let centroids = means(points, &assignments, k, dim);
    let inertia = inertia_of(points, &assignments, &centroids);
    KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
        history,
    }
}

/// One sweep of single-point transfers (Hartigan). A point leaves cluster
/// `a` for `b` when `n_b/(n_b+1)·|x-c_b|² < n_a/(n_a-1)·|x-c_a|²`, which is
/// exactly the condition for the move to lower inertia. Centroids are kept
/// current during the sweep and recomputed exactly at its end. Returns
/// whether any point moved.
fn transfer_pass<P: AsRef<[f64]>>(points: &[P], assignments: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let x = p.as_ref();
        let a = assignments[i];
        if sizes[a] < 2 {
            continue;
        }
        let na = sizes[a] as f64;
        let leave = na / (na - 1.0) * squared_distance(x, &centroids[a]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = sizes[b] as f64;
            let join = nb / (nb + 1.0) * squared_distance(x, &centroids[b]);
            if join < best.map_or(leave, |(_, v)| v) {
                best = Some((b, join));
            }
        }
        // Demand a relative margin so rounding cannot cycle a point.
        let Some((b, join)) = best else { continue };
        if leave - join <= 1e-12 * leave {
            continue;
        }
        let (nb, na_new) = (sizes[b] as f64, na - 1.0);
        for d in 0..dim {
            centroids[a][d] = (centroids[a][d] * na - x[d]) / na_new;
            centroids[b][d] = (centroids[b][d] * nb + x[d]) / (nb + 1.0);
        }
        sizes[a] -= 1;
        sizes[b] += 1;
        assignments[i] = b;
        moved = true;
    }
    if moved {
        let fresh = means(points, assignments, k, dim);
        centroids.iter_mut().zip(fresh).for_each(|(c, f)| *c = f);
    }
    moved
}

/// Index of the point farthest from its assigned centroid (ties: lowest).
pub(crate) fn farthest_point<P: AsRef<[f64]>>(points: &[P], result: &KMeansResult) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (p, &a)) in points.iter().zip(&result.assignments).enumerate() {
        let d = squared_distance(p.as_ref(), &result.centroids[a]);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]]
    }

    #[test]
    fn k1_is_mean_and_total_ss() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let r = kmeans(&pts, KMeansParams::new(1, 9)).unwrap();
        assert_eq!(r.centroids, vec![vec![3.0, 3.0]]);
        // (4+1) + (0+9) + (4+4)
        assert_eq!(r.inertia, 22.0);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans(&pts, KMeansParams::new(7, 3)).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(r.cluster_sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn square_splits_left_right() {
        for seed in 0..20 {
            let r = kmeans_restarts(&square(), KMeansParams::new(2, seed), 4, ExecMode::Sequential).unwrap();
            assert_eq!(r.assignments[0], r.assignments[1]);
            assert_eq!(r.assignments[2], r.assignments[3]);
            assert_ne!(r.assignments[0], r.assignments[2]);
            assert!((r.inertia - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transfer_leaves_a_lloyd_fixed_point() {
        // {0,2} | {3.2} is stable under Lloyd (inertia 2); moving 2 across gives 0.72.
        let pts = vec![vec![0.0], vec![2.0], vec![3.2]];
        let r = refine_from(&pts, vec![vec![1.0], vec![3.2]], KMeansParams::new(2, 0), ExecMode::Sequential);
        assert_eq!(r.assignments, vec![0, 1, 1]);
        assert!((r.inertia - 0.72).abs() < 1e-12);
        assert_eq!(r.history.first(), Some(&2.0));
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_points_never_leave_empty_clusters() {
        let pts = vec![vec![2.0, 2.0]; 10];
        let r = kmeans(&pts, KMeansParams::new(4, 1)).unwrap();
        assert!(r.cluster_sizes().iter().all(|&s| s > 0));
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        let err = kmeans(&square(), KMeansParams::new(5, 0)).unwrap_err();
        assert!(matches!(err, ClusterError::TooFewPoints { points: 4, k: 5 }));
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(kmeans(&ragged, KMeansParams::new(1, 0)), Err(ClusterError::InvalidInput(_))));
        let nan = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(kmeans(&nan, KMeansParams::new(1, 0)), Err(ClusterError::InvalidInput(_))));
    }

    #[test]
    fn refine_from_warm_start_never_worse() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i / 7) as f64]).collect();
        let base = kmeans(&pts, KMeansParams::new(2, 5)).unwrap();
        let mut init = base.centroids.clone();
        init.push(pts[farthest_point(&pts, &base)].clone());
        let warm = refine_from(&pts, init, KMeansParams::new(3, 5), ExecMode::Sequential);
        assert!(warm.inertia <= base.inertia);
    }
}
