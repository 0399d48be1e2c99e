//! Lloyd's k-means with k-means++ seeding and restarts.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERS: usize = 300;
pub const CENTROID_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub wcss: f64,
    /// Within-cluster sum of squares after each Lloyd iteration of the
    /// winning restart.
    pub wcss_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_plus_plus(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn assign(x: ArrayView2<f64>, centroids: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let (best, dist) = centroids
            .rows()
            .into_iter()
            .enumerate()
            .map(|(c, row)| (c, sq_dist(x.row(i), row)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        *label = best;
        wcss += dist;
    }
    wcss
}

fn lloyd(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let (n, dim) = x.dim();
    let mut centroids = seed_plus_plus(x, k, rng);
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut wcss = assign(x, &centroids, &mut labels);

    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            sums.row_mut(c).scaled_add(1.0, &x.row(i));
            counts[c] += 1;
        }
        // Empty clusters take the point farthest from its current centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, sq_dist(x.row(i), centroids.row(labels[i]))))
                .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            if let Some((i, _)) = far {
                let old = labels[i];
                sums.row_mut(old).scaled_add(-1.0, &x.row(i));
                counts[old] -= 1;
                sums.row_mut(c).assign(&x.row(i));
                counts[c] = 1;
                labels[i] = c;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new = &sums.row(c) / counts[c] as f64;
            shift = shift.max(sq_dist(new.view(), centroids.row(c)).sqrt());
            centroids.row_mut(c).assign(&new);
        }
        wcss = assign(x, &centroids, &mut labels);
        trace.push(wcss);
        if shift < CENTROID_TOL {
            break;
        }
    }

    KMeansResult {
        assignments: labels,
        centroids,
        wcss,
        wcss_trace: trace,
    }
}

/// Best-of-`restarts` k-means by within-cluster sum of squares.
pub fn kmeans(x: ArrayView2<f64>, clusters: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = x.nrows();
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidParam(format!(
            "cluster count {clusters} must lie in [1, {n}]"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidParam("restarts must be at least 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point coordinates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let run = lloyd(x, clusters, &mut rng);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
