//! Seeded k-means: k-means++ seeding, Lloyd iterations, best of several restarts.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k×d centroid matrix.
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Output of a single Lloyd run from fixed initial centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub result: KMeansResult,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Clusters the rows of `points` into `k` groups.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("points must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let init = kmeans_plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, MAX_ITERATIONS, SHIFT_TOLERANCE).result;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means++ seeding: each new centre is drawn with probability proportional to the
/// squared distance to the nearest centre already chosen.
pub fn kmeans_plus_plus(points: &Array2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can run past the last positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(pick)));
        }
    }
    centroids
}

/// Lloyd iterations from `centroids` until no centroid moves more than `tol`.
pub fn lloyd(points: &Array2<f64>, mut centroids: Array2<f64>, max_iter: usize, tol: f64) -> LloydRun {
    let n = points.nrows();
    let k = centroids.nrows();
    let mut labels = vec![0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut inertia = 0.0;
        for (i, p) in points.outer_iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            inertia += d;
        }
        trace.push(inertia);

        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut sizes = vec![0usize; k];
        for (i, p) in points.outer_iter().enumerate() {
            let mut row = sums.row_mut(labels[i]);
            row += &p;
            sizes[labels[i]] += 1;
        }
        let mut updated = centroids.clone();
        for c in 0..k {
            if sizes[c] > 0 {
                let mean = &sums.row(c) / sizes[c] as f64;
                updated.row_mut(c).assign(&mean);
            } else {
                // re-seed an empty cluster at the point worst served by its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(labels[a]));
                        let db = sq_dist(points.row(b), centroids.row(labels[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty input");
                updated.row_mut(c).assign(&points.row(far));
            }
        }
        let shift = centroids
            .outer_iter()
            .zip(updated.outer_iter())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < tol {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, p) in points.outer_iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        inertia += d;
    }
    trace.push(inertia);
    LloydRun {
        result: KMeansResult {
            labels,
            centroids,
            inertia,
            iterations,
        },
        inertia_trace: trace,
    }
}
