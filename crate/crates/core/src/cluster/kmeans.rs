use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterError, ClusteringParams};
use crate::features::FisherVector;

/// Outcome of clustering a story's vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Squared distance from each image to its own centroid.
    pub distances: BTreeMap<String, f64>,
    pub inertia: f64,
    /// Index of the winning restart.
    pub restart: usize,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// One Lloyd run from one k-means++ seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every centroid update, in order.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding; returns indices of the chosen points.
///
/// When every remaining point coincides with a chosen center the next center
/// is drawn uniformly from the unchosen indices.
pub fn kmeans_plus_plus<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    if n == 0 || k == 0 {
        return chosen;
    }
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k.min(n) {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).expect("total > 0"))
        } else {
            let taken: HashSet<usize> = chosen.iter().copied().collect();
            let free: Vec<usize> = (0..n).filter(|i| !taken.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, points[next]));
        }
    }
    chosen
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            centroids
                .iter()
                .enumerate()
                .map(|(c, cen)| (c, sq_dist(p, cen)))
                .fold(
                    (0, f64::INFINITY),
                    |best, cur| if cur.1 < best.1 { cur } else { best },
                )
        })
        .unzip()
}

/// Give every empty cluster the point farthest from its centroid, taken from a
/// cluster that still has more than one member.
fn repair_empty(labels: &mut [usize], dist: &[f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut moved = vec![false; labels.len()];
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| !moved[i] && sizes[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = donor {
            sizes[labels[i]] -= 1;
            labels[i] = empty;
            sizes[empty] += 1;
            moved[i] = true;
        }
    }
}

fn centroids_of(points: &[&[f64]], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn inertia_of(points: &[&[f64]], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

/// A single Lloyd run. Restart `r` draws its seeding from stream `r` of a
/// ChaCha generator keyed by `seed`.
pub fn lloyd_restart(
    points: &[&[f64]],
    k: usize,
    seed: u64,
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> RestartResult {
    let dim = points.first().map(|p| p.len()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let seeds = kmeans_plus_plus(points, k, &mut rng);
    let initial: Vec<Vec<f64>> = seeds.iter().map(|&i| points[i].to_vec()).collect();

    let (mut labels, dist) = assign(points, &initial);
    repair_empty(&mut labels, &dist, k);
    let mut trace = Vec::new();
    let mut iter = 0;
    loop {
        let centroids = centroids_of(points, &labels, k, dim);
        let inertia = inertia_of(points, &labels, &centroids);
        let prev = trace.last().copied();
        trace.push(inertia);
        let stalled = prev.is_some_and(|p: f64| p - inertia <= tol * p);
        if iter >= max_iter || stalled {
            return RestartResult {
                labels,
                centroids,
                inertia,
                inertia_trace: trace,
            };
        }
        let (mut next, dist) = assign(points, &centroids);
        repair_empty(&mut next, &dist, k);
        if next == labels {
            return RestartResult {
                labels,
                centroids,
                inertia,
                inertia_trace: trace,
            };
        }
        labels = next;
        iter += 1;
    }
}

/// Best-of-restarts K-means on raw points. Restarts run in parallel; the
/// winner is the lowest `(inertia, restart index)`.
pub fn kmeans_points(
    points: &[&[f64]],
    params: &ClusteringParams,
) -> Result<(usize, RestartResult), ClusterError> {
    params.validate()?;
    if points.len() < params.k || points.is_empty() {
        return Err(ClusterError::TooFewPoints {
            points: points.len(),
            k: params.k,
        });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }
    let runs: Vec<(usize, RestartResult)> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            (
                r,
                lloyd_restart(points, params.k, params.seed, r, params.max_iter, params.tol),
            )
        })
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.1.inertia.total_cmp(&b.1.inertia).then(a.0.cmp(&b.0)))
        .expect("restarts >= 1"))
}

/// Cluster Fisher vectors. Input order does not matter: vectors are sorted
/// by `image_id` first.
pub fn kmeans(
    vectors: &[FisherVector],
    params: &ClusteringParams,
) -> Result<ClusterAssignment, ClusterError> {
    let mut sorted: Vec<&FisherVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(ClusterError::DuplicateImage(w[0].image_id.clone()));
    }
    let points: Vec<&[f64]> = sorted.iter().map(|v| v.values.as_slice()).collect();
    let (restart, best) = kmeans_points(&points, params)?;
    let mut labels = BTreeMap::new();
    let mut distances = BTreeMap::new();
    for ((v, &l), p) in sorted.iter().zip(&best.labels).zip(&points) {
        labels.insert(v.image_id.clone(), l);
        distances.insert(v.image_id.clone(), sq_dist(p, &best.centroids[l]));
    }
    Ok(ClusterAssignment {
        labels,
        centroids: best.centroids,
        distances,
        inertia: best.inertia,
        restart,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(id: &str, values: Vec<f64>) -> FisherVector {
        FisherVector {
            image_id: id.into(),
            values,
            normalized: false,
        }
    }

    #[test]
    fn k1_is_the_mean() {
        let vs = vec![
            fv("a", vec![0.0, 0.0]),
            fv("b", vec![2.0, 0.0]),
            fv("c", vec![1.0, 3.0]),
        ];
        let out = kmeans(&vs, &ClusteringParams::with_k(1)).unwrap();
        assert_eq!(out.centroids, vec![vec![1.0, 1.0]]);
        // total variance (per point, summed over dims) times count
        let var = (1.0 + 1.0 + 0.0) / 3.0 + (1.0 + 1.0 + 4.0) / 3.0;
        assert!((out.inertia - var * 3.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_count() {
        let vs: Vec<_> = (0..5)
            .map(|i| fv(&format!("v{i}"), vec![i as f64, (i * i) as f64]))
            .collect();
        let out = kmeans(&vs, &ClusteringParams::with_k(5)).unwrap();
        assert_eq!(out.inertia, 0.0);
        let labels: HashSet<usize> = out.labels.values().copied().collect();
        assert_eq!(labels.len(), 5);
    }

    #[test]
    fn too_few_points() {
        let vs = vec![fv("a", vec![0.0])];
        assert_eq!(
            kmeans(&vs, &ClusteringParams::with_k(2)),
            Err(ClusterError::TooFewPoints { points: 1, k: 2 })
        );
    }

    #[test]
    fn empty_clusters_get_repaired() {
        // Five identical points and K = 3: seeding collapses, repair fills.
        let vs: Vec<_> = (0..5).map(|i| fv(&format!("v{i}"), vec![1.0, 1.0])).collect();
        let out = kmeans(&vs, &ClusteringParams::with_k(3)).unwrap();
        let used: HashSet<usize> = out.labels.values().copied().collect();
        assert_eq!(used.len(), 3);
        assert_eq!(out.inertia, 0.0);
    }

    fn points_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 4..30)
    }

    proptest! {
        #[test]
        fn inertia_trace_non_increasing(pts in points_strategy(), k in 1usize..4, seed in 0u64..1000) {
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let run = lloyd_restart(&refs, k.min(refs.len()), seed, 0, 100, 0.0);
            for w in run.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
        }

        #[test]
        fn best_restart_dominates(pts in points_strategy(), seed in 0u64..1000) {
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let params = ClusteringParams { k: 3, seed, restarts: 5, ..Default::default() };
            let (_, best) = kmeans_points(&refs, &params).unwrap();
            for r in 0..5 {
                let run = lloyd_restart(&refs, 3, seed, r, params.max_iter, params.tol);
                prop_assert!(best.inertia <= run.inertia);
            }
        }

        #[test]
        fn centroids_are_member_means(pts in points_strategy(), seed in 0u64..1000) {
            let vs: Vec<_> = pts.iter().enumerate().map(|(i, p)| fv(&format!("p{i:03}"), p.clone())).collect();
            let out = kmeans(&vs, &ClusteringParams { k: 3, seed, ..Default::default() }).unwrap();
            for c in 0..3 {
                let members: Vec<&FisherVector> = vs.iter().filter(|v| out.labels[&v.image_id] == c).collect();
                if members.is_empty() { continue; }
                for d in 0..3 {
                    let mean = members.iter().map(|v| v.values[d]).sum::<f64>() / members.len() as f64;
                    prop_assert!((out.centroids[c][d] - mean).abs() < 1e-9);
                }
            }
            prop_assert!(out.inertia >= 0.0);
            let dsum: f64 = out.distances.values().sum();
            prop_assert!((dsum - out.inertia).abs() < 1e-9 * out.inertia.max(1.0));
        }

        #[test]
        fn input_order_irrelevant(pts in points_strategy(), seed in 0u64..1000, rot in 0usize..30) {
            let vs: Vec<_> = pts.iter().enumerate().map(|(i, p)| fv(&format!("p{i:03}"), p.clone())).collect();
            let mut shuffled = vs.clone();
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.reverse();
            let params = ClusteringParams { k: 2, seed, ..Default::default() };
            prop_assert_eq!(kmeans(&vs, &params).unwrap(), kmeans(&shuffled, &params).unwrap());
        }
    }
}
