use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SaliencyError;

pub const MAX_ITERATIONS: usize = 300;
pub const TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

/// `max(2, round(sqrt(n)))`, capped at `n`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(2).min(n)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Points are clustered in lexicographic order so the result does not depend
/// on how the caller ordered them. An emptied cluster keeps its last centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans, SaliencyError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(SaliencyError::InvalidK { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(SaliencyError::InvalidArgument("points must be finite and of equal length".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a].iter().zip(&points[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted: Vec<&[f64]> = order.iter().map(|&i| points[i].as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![sorted[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = sorted.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = sorted[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(&sorted) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }

    let mut assign = vec![0; n];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (a, p) in assign.iter_mut().zip(&sorted) {
            *a = nearest(p, &centroids);
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(&sorted) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(dist2(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        if shift < TOLERANCE {
            break;
        }
    }
    for (a, p) in assign.iter_mut().zip(&sorted) {
        *a = nearest(p, &centroids);
    }

    let mut assignment = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        assignment[orig] = assign[pos];
    }
    Ok(KMeans { centroids, assignment, iterations })
}

/// Outlier score of every point: distance to its own centroid. A point that
/// forms a cluster on its own scores its distance to the nearest other centroid.
pub fn kmeans_scores(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<f64>, SaliencyError> {
    let km = kmeans(points, k, seed)?;
    let mut sizes = vec![0usize; km.centroids.len()];
    for &a in &km.assignment {
        sizes[a] += 1;
    }
    Ok(points
        .iter()
        .zip(&km.assignment)
        .map(|(p, &a)| {
            if sizes[a] == 1 && km.centroids.len() > 1 {
                km.centroids
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != a)
                    .map(|(_, c)| dist2(p, c))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            } else {
                dist2(p, &km.centroids[a]).sqrt()
            }
        })
        .collect())
}
