use super::{kmeans_points, ClusterError, ClusteringParams};
use crate::features::FisherVector;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette coefficient (Euclidean). Points alone in their cluster
/// score 0.
pub fn mean_silhouette(points: &[&[f64]], labels: &[usize]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(points[i], points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Highest score wins; on a tie the smaller K is kept. `scores` must be in
/// ascending K order.
pub fn select_best_k(scores: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, s) in scores {
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((k, s)),
        }
    }
    best.map(|b| b.0)
}

/// The default search window: `[2, min(8, n - 1)]`, or `None` when fewer
/// than three vectors make a range impossible.
pub fn default_k_range(n: usize) -> Option<(usize, usize)> {
    (n >= 3).then(|| (2, 8.min(n - 1)))
}

/// K in `[k_min, k_max]` maximizing the mean silhouette of the K-means
/// partition, together with every score computed.
pub fn choose_k(
    vectors: &[FisherVector],
    k_min: usize,
    k_max: usize,
    params: &ClusteringParams,
) -> Result<(usize, Vec<(usize, f64)>), ClusterError> {
    let n = vectors.len();
    if k_min < 2 || k_max < k_min || k_max + 1 > n {
        return Err(ClusterError::RangeInvalid {
            k_min,
            k_max,
            points: n,
        });
    }
    let mut sorted: Vec<&FisherVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let points: Vec<&[f64]> = sorted.iter().map(|v| v.values.as_slice()).collect();
    let mut scores = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let p = ClusteringParams { k, ..*params };
        let (_, run) = kmeans_points(&points, &p)?;
        scores.push((k, mean_silhouette(&points, &run.labels)));
    }
    let k = select_best_k(&scores).expect("non-empty range");
    Ok((k, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[(f64, f64)], per: usize, seed: u64) -> Vec<FisherVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut out = Vec::new();
        for (c, (x, y)) in centers.iter().enumerate() {
            for i in 0..per {
                out.push(FisherVector {
                    image_id: format!("b{c}-{i:02}"),
                    values: vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)],
                    normalized: false,
                });
            }
        }
        out
    }

    #[test]
    fn three_blobs_pick_three() {
        let vs = blobs(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], 8, 4);
        let (k, scores) = choose_k(&vs, 2, 6, &ClusteringParams::default()).unwrap();
        assert_eq!(scores.len(), 5);
        assert_eq!(k, 3);
        let best = scores.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        assert_eq!(scores[1].1, best);
    }

    #[test]
    fn single_candidate_range() {
        let vs = blobs(&[(0.0, 0.0), (10.0, 0.0)], 5, 9);
        assert_eq!(choose_k(&vs, 2, 2, &ClusteringParams::default()).unwrap().0, 2);
    }

    #[test]
    fn ties_go_to_smaller_k() {
        assert_eq!(select_best_k(&[(2, 0.5), (3, 0.5), (4, 0.1)]), Some(2));
        assert_eq!(select_best_k(&[(2, 0.4), (3, 0.5)]), Some(3));
        assert_eq!(select_best_k(&[]), None);
    }

    #[test]
    fn invalid_ranges() {
        let vs = blobs(&[(0.0, 0.0)], 4, 1);
        let p = ClusteringParams::default();
        assert!(matches!(
            choose_k(&vs, 1, 3, &p),
            Err(ClusterError::RangeInvalid { .. })
        ));
        assert!(matches!(
            choose_k(&vs, 2, 4, &p),
            Err(ClusterError::RangeInvalid { .. })
        ));
        assert!(matches!(
            choose_k(&vs, 3, 2, &p),
            Err(ClusterError::RangeInvalid { .. })
        ));
        assert_eq!(default_k_range(2), None);
        assert_eq!(default_k_range(5), Some((2, 4)));
        assert_eq!(default_k_range(30), Some((2, 8)));
    }

    #[test]
    fn silhouette_of_perfect_split() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![0.0], vec![5.0], vec![5.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert!((mean_silhouette(&refs, &[0, 0, 1, 1]) - 1.0).abs() < 1e-12);
        assert_eq!(mean_silhouette(&refs, &[0, 1, 2, 3]), 0.0);
    }
}
