//! Seeded k-means used to initialize the mixture.

use nalgebra::DMatrix;
use rand::Rng;

fn sq_dist(x: &DMatrix<f64>, row: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..x.ncols())
        .map(|j| {
            let d = x[(row, j)] - centers[(c, j)];
            d * d
        })
        .sum()
}

fn nearest(x: &DMatrix<f64>, row: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist(x, row, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: the first center is uniform, later centers are drawn
/// with probability proportional to squared distance to the nearest chosen
/// center.
pub fn plus_plus_centers<R: Rng>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.set_row(0, &x.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(x, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &x.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(x, i, &centers, c));
        }
    }
    centers
}

/// Runs k-means++ seeding followed by `iterations` Lloyd steps and returns
/// the final hard labels. Empty clusters keep their previous center.
pub fn kmeans_labels<R: Rng>(
    x: &DMatrix<f64>,
    k: usize,
    iterations: usize,
    rng: &mut R,
) -> Vec<usize> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut centers = plus_plus_centers(x, k, rng);
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(x, i, &centers).0).collect();
    for _ in 0..iterations {
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            let mut s = sums.row_mut(c);
            s += x.row(i);
        }
        for c in (0..k).filter(|&c| counts[c] > 0) {
            let mean = sums.row(c) / counts[c] as f64;
            centers.set_row(c, &mean);
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(x, i, &centers).0).collect();
        let done = next == labels;
        labels = next;
        if done {
            break;
        }
    }
    labels
}
