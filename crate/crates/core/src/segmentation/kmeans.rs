//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Upper bound on empty-cluster reseeds within one restart.
const MAX_RESEEDS: usize = 50;

pub(crate) struct Clustering {
    /// Labels renumbered in order of first appearance.
    pub labels: Vec<usize>,
    pub k_effective: usize,
    pub inertia: f64,
    pub diagnostics: Vec<String>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centres.iter().enumerate() {
        let d = sq_dist(point, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<f64>>> {
    let mut centres = vec![points[rng.random_range(0..points.len())].clone()];
    while centres.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centres).1).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        centres.push(points[pick].clone());
    }
    Some(centres)
}

/// One seeded Lloyd run. `None` when it cannot keep `k` clusters populated.
fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<usize>, f64)> {
    let dim = points[0].len();
    let mut centres = plus_plus_init(points, k, rng)?;
    let mut labels = vec![usize::MAX; points.len()];
    let mut reseeds = 0;
    for _ in 0..max_iter {
        let mut changed = false;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let (c, _) = nearest(p, &centres);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            reseeds += 1;
            if reseeds > MAX_RESEEDS {
                return None;
            }
            // Move the empty centre onto the point worst served by its own centre.
            let (far, dist) = points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| sq_dist(p, &centres[l]))
                .enumerate()
                .fold(
                    (0, -1.0),
                    |best, (i, d)| if d > best.1 { (i, d) } else { best },
                );
            if dist <= 0.0 {
                return None;
            }
            centres[empty] = points[far].clone();
            labels[far] = usize::MAX;
            continue;
        }
        for ((centre, sum), &count) in centres.iter_mut().zip(&sums).zip(&counts) {
            for (c, s) in centre.iter_mut().zip(sum) {
                *c = s / count as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centres[l]))
        .sum();
    Some((labels, inertia))
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Best of `restarts` seeded runs by inertia (earliest wins ties). When no
/// run keeps all `k` clusters populated the cluster count is lowered.
pub(crate) fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    restarts: usize,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> Clustering {
    let mut diagnostics = Vec::new();
    let mut k_eff = k.min(points.len()).max(1);
    loop {
        if k_eff == 1 {
            let centre: Vec<f64> = (0..points[0].len())
                .map(|d| points.iter().map(|p| p[d]).sum::<f64>() / points.len() as f64)
                .collect();
            let inertia = points.iter().map(|p| sq_dist(p, &centre)).sum();
            return Clustering {
                labels: vec![0; points.len()],
                k_effective: 1,
                inertia,
                diagnostics,
            };
        }
        let mut best: Option<(Vec<usize>, f64)> = None;
        for _ in 0..restarts.max(1) {
            if let Some((labels, inertia)) = lloyd(points, k_eff, max_iter, rng) {
                if best.as_ref().is_none_or(|b| inertia < b.1) {
                    best = Some((labels, inertia));
                }
            }
        }
        if let Some((labels, inertia)) = best {
            return Clustering {
                labels: canonical(&labels),
                k_effective: k_eff,
                inertia,
                diagnostics,
            };
        }
        diagnostics.push(format!(
            "k-means could not populate {k_eff} clusters; retrying with {}",
            k_eff - 1
        ));
        k_eff -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn separates_obvious_groups() {
        let points: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let group = (i / 10) as f64 * 10.0;
                vec![group + (i % 10) as f64 * 0.01, -group]
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = kmeans(&points, 3, 10, 100, &mut rng);
        assert_eq!(c.k_effective, 3);
        let expected: Vec<usize> = (0..30).map(|i| i / 10).collect();
        assert_eq!(c.labels, expected);
    }

    #[test]
    fn duplicate_points_lower_the_cluster_count() {
        let points = vec![vec![1.0, 1.0]; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = kmeans(&points, 3, 5, 100, &mut rng);
        assert_eq!(c.k_effective, 1);
        assert_eq!(c.labels, vec![0; 6]);
        assert!(!c.diagnostics.is_empty());
    }

    #[test]
    fn same_seed_same_result() {
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![((i * 37) % 11) as f64, ((i * 13) % 7) as f64])
            .collect();
        let a = kmeans(&points, 4, 20, 100, &mut ChaCha8Rng::seed_from_u64(9));
        let b = kmeans(&points, 4, 20, 100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia, b.inertia);
    }
}
