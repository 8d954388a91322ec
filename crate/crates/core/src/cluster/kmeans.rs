use rand::Rng;

use crate::matrix::{sq_dist, Matrix};
use crate::seed::Rng as SeededRng;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub wcss: f64,
    /// Within-cluster sum of squares after each Lloyd iteration of the
    /// winning restart.
    pub history: Vec<f64>,
}

fn nearest(x: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist(x, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut SeededRng) -> Matrix {
    let n = x.nrows();
    let mut centers = Matrix::zeros(k, x.ncols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x.rows_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    chosen = i;
                    break;
                }
                t -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(x.row(pick));
        for (i, r) in x.rows_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

fn update_centers(x: &Matrix, labels: &[usize], k: usize) -> (Matrix, Vec<usize>) {
    let p = x.ncols();
    let mut centers = Matrix::zeros(k, p);
    let mut counts = vec![0usize; k];
    for (r, &l) in x.rows_iter().zip(labels) {
        counts[l] += 1;
        for (c, &v) in centers.row_mut(l).iter_mut().zip(r) {
            *c += v;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            centers.row_mut(c).iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    (centers, counts)
}

fn wcss(x: &Matrix, labels: &[usize], centers: &Matrix) -> f64 {
    x.rows_iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, centers.row(l)))
        .sum()
}

fn lloyd(x: &Matrix, k: usize, max_iter: usize, rng: &mut SeededRng) -> KMeansFit {
    let mut centers = plus_plus_init(x, k, rng);
    let mut labels: Vec<usize> = x.rows_iter().map(|r| nearest(r, &centers).0).collect();
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let (mut c, counts) = update_centers(x, &labels, k);
        // An empty cluster takes the point farthest from its own center.
        for e in (0..k).filter(|&e| counts[e] == 0) {
            let far = (0..x.nrows())
                .max_by(|&a, &b| {
                    sq_dist(x.row(a), c.row(labels[a]))
                        .total_cmp(&sq_dist(x.row(b), c.row(labels[b])))
                })
                .expect("non-empty input");
            labels[far] = e;
            let (c2, _) = update_centers(x, &labels, k);
            c = c2;
        }
        centers = c;
        history.push(wcss(x, &labels, &centers));
        let next: Vec<usize> = x.rows_iter().map(|r| nearest(r, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let w = *history.last().unwrap_or(&wcss(x, &labels, &centers));
    KMeansFit {
        labels,
        centers,
        wcss: w,
        history,
    }
}

/// k-means++ seeding, Lloyd iterations until the assignment is stable or
/// `max_iter`, best of `restarts` by within-cluster sum of squares.
pub fn kmeans(
    x: &Matrix,
    k: usize,
    restarts: usize,
    max_iter: usize,
    rng: &mut SeededRng,
) -> KMeansFit {
    assert!(k >= 1 && x.nrows() >= k, "kmeans needs at least k points");
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = lloyd(x, k, max_iter, rng);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}
