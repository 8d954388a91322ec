//! Internal (geometry-only) validity indices, following the clusterCrit
//! definitions.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cluster::ClusterAssignment;
use crate::matrix::{dist, sq_dist, Distances, Matrix};

pub const INTERNAL_NAMES: [&str; 17] = [
    "between_cluster_scatter",
    "banfeld_raftery",
    "ball_hall",
    "pbm",
    "det_ratio",
    "log_det_ratio",
    "ksq_detw",
    "score",
    "silhouette",
    "log_ss_ratio",
    "c_index",
    "dunn",
    "ray_turi",
    "calinski_harabasz",
    "trace_wib",
    "davies_bouldin",
    "within_cluster_scatter",
];

/// Pairwise geometry of one subsample, shared by all clustering methods.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub dists: Distances,
    /// prefix sums of the ascending pairwise distances (i < j)
    sorted_prefix: Vec<f64>,
}

impl Geometry {
    pub fn new(x: &Matrix) -> Geometry {
        let dists = Distances::new(x);
        let n = dists.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            pairs.extend_from_slice(&dists.row(i)[i + 1..]);
        }
        pairs.sort_unstable_by(|a, b| a.total_cmp(b));
        let mut sorted_prefix = Vec::with_capacity(pairs.len() + 1);
        let mut acc = 0.0;
        sorted_prefix.push(0.0);
        for v in pairs {
            acc += v;
            sorted_prefix.push(acc);
        }
        Geometry {
            dists,
            sorted_prefix,
        }
    }

    fn smallest_sum(&self, m: usize) -> f64 {
        self.sorted_prefix[m]
    }

    fn largest_sum(&self, m: usize) -> f64 {
        let t = self.sorted_prefix.len() - 1;
        self.sorted_prefix[t] - self.sorted_prefix[t - m]
    }
}

/// Log-determinant via Cholesky; `-inf` for a singular matrix.
fn log_det(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

fn trace_inv_product(w: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if let Some(c) = w.clone().cholesky() {
        return c.solve(b).trace();
    }
    // Moore-Penrose fallback for singular within-group scatter.
    let eig = SymmetricEigen::new(w.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let tol = max * 1e-12 * w.nrows() as f64;
    let mut acc = 0.0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(i);
            acc += (v.transpose() * b * v)[(0, 0)] / lambda;
        }
    }
    acc
}

/// The 17 internal indices in schema order. Values are raw: degenerate
/// cases yield NaN or infinities, which callers sanitize.
pub fn internal_indices(x: &Matrix, a: &ClusterAssignment, geo: &Geometry) -> [f64; 17] {
    let n = x.nrows();
    let p = x.ncols();
    let k = a.k.max(1);
    let nk = a.sizes();
    let labels = &a.labels;

    let mut g = vec![0.0; p];
    let mut gk = Matrix::zeros(k, p);
    for (r, &l) in x.rows_iter().zip(labels) {
        for j in 0..p {
            g[j] += r[j];
            gk.row_mut(l)[j] += r[j];
        }
    }
    g.iter_mut().for_each(|v| *v /= n as f64);
    for c in 0..k {
        let s = nk[c].max(1) as f64;
        gk.row_mut(c).iter_mut().for_each(|v| *v /= s);
    }

    let mut wg_tr = vec![0.0; k];
    let mut e_w = 0.0;
    let mut e_t = 0.0;
    let mut wcd_k = vec![0.0; k];
    for (r, &l) in x.rows_iter().zip(labels) {
        let d2 = sq_dist(r, gk.row(l));
        wg_tr[l] += d2;
        e_w += d2.sqrt();
        wcd_k[l] += d2.sqrt();
        e_t += dist(r, &g);
    }
    let wgss: f64 = wg_tr.iter().sum();
    let bgss: f64 = (0..k)
        .map(|c| nk[c] as f64 * sq_dist(gk.row(c), &g))
        .sum();

    let mut centroid_min_sq = f64::INFINITY;
    let mut centroid_max = 0.0f64;
    for c in 0..k {
        for c2 in (c + 1)..k {
            let d2 = sq_dist(gk.row(c), gk.row(c2));
            centroid_min_sq = centroid_min_sq.min(d2);
            centroid_max = centroid_max.max(d2.sqrt());
        }
    }

    // Scatter matrices restricted to columns with non-zero total variance;
    // constant columns would make every determinant vanish.
    let active: Vec<usize> = (0..p)
        .filter(|&j| x.rows_iter().any(|r| (r[j] - g[j]).abs() > 1e-12))
        .collect();
    let q = active.len();
    let mut wg = DMatrix::<f64>::zeros(q, q);
    let mut tm = DMatrix::<f64>::zeros(q, q);
    for (r, &l) in x.rows_iter().zip(labels) {
        for (ai, &j1) in active.iter().enumerate() {
            let dw1 = r[j1] - gk.get(l, j1);
            let dt1 = r[j1] - g[j1];
            for (bi, &j2) in active.iter().enumerate().skip(ai) {
                wg[(ai, bi)] += dw1 * (r[j2] - gk.get(l, j2));
                tm[(ai, bi)] += dt1 * (r[j2] - g[j2]);
            }
        }
    }
    for ai in 0..q {
        for bi in 0..ai {
            wg[(ai, bi)] = wg[(bi, ai)];
            tm[(ai, bi)] = tm[(bi, ai)];
        }
    }
    let ld_w = log_det(&wg);
    let ld_t = log_det(&tm);
    let ld_ratio = if ld_t.is_finite() || ld_w.is_finite() {
        ld_t - ld_w
    } else {
        f64::NAN
    };

    let multi = k >= 2;
    let nan_unless_multi = |v: f64| if multi { v } else { f64::NAN };

    let between = bgss;
    let banfeld = (0..k)
        .filter(|&c| nk[c] > 0)
        .map(|c| nk[c] as f64 * (wg_tr[c] / nk[c] as f64).ln())
        .sum::<f64>();
    let ball_hall = (0..k).map(|c| wg_tr[c] / nk[c].max(1) as f64).sum::<f64>() / k as f64;
    let pbm = nan_unless_multi(((e_t / e_w) * centroid_max / k as f64).powi(2));
    let det_ratio = ld_ratio.exp();
    let log_det_ratio = n as f64 * ld_ratio;
    let ksq_detw = (k * k) as f64 * ld_w.exp();
    let bcd = (0..k)
        .map(|c| nk[c] as f64 * dist(gk.row(c), &g))
        .sum::<f64>()
        / (n * k) as f64;
    let wcd = (0..k)
        .map(|c| wcd_k[c] / nk[c].max(1) as f64)
        .sum::<f64>();
    let score = 1.0 - 1.0 / (bcd - wcd).exp().exp();
    let log_ss_ratio = nan_unless_multi((bgss / wgss).ln());
    let ray_turi = nan_unless_multi((wgss / n as f64) / centroid_min_sq);
    let ch = nan_unless_multi(((n - k) as f64 / (k as f64 - 1.0)) * bgss / wgss);
    let trace_wib = nan_unless_multi(trace_inv_product(&wg, &(&tm - &wg)));
    let db = if multi {
        let delta: Vec<f64> = (0..k).map(|c| wcd_k[c] / nk[c].max(1) as f64).collect();
        (0..k)
            .map(|c| {
                (0..k)
                    .filter(|&c2| c2 != c)
                    .map(|c2| (delta[c] + delta[c2]) / dist(gk.row(c), gk.row(c2)))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / k as f64
    } else {
        f64::NAN
    };

    let (silhouette, c_index, dunn) = if multi {
        pair_indices(a, geo, &nk)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    [
        between,
        banfeld,
        ball_hall,
        pbm,
        det_ratio,
        log_det_ratio,
        ksq_detw,
        score,
        silhouette,
        log_ss_ratio,
        c_index,
        dunn,
        ray_turi,
        ch,
        trace_wib,
        db,
        wgss,
    ]
}

/// Silhouette (mean of per-cluster means), C-index and Dunn from the
/// pairwise distances.
fn pair_indices(a: &ClusterAssignment, geo: &Geometry, nk: &[usize]) -> (f64, f64, f64) {
    let n = a.labels.len();
    let k = a.k;
    let d = &geo.dists;
    let mut sil_sum = vec![0.0; k];
    let mut sums = vec![0.0; k];
    let mut within_sum = 0.0;
    let mut n_within = 0usize;
    let mut max_diam = 0.0f64;
    let mut min_between = f64::INFINITY;
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let li = a.labels[i];
        let row = d.row(i);
        for (j, &dij) in row.iter().enumerate() {
            let lj = a.labels[j];
            sums[lj] += dij;
            if j > i {
                if lj == li {
                    within_sum += dij;
                    n_within += 1;
                    max_diam = max_diam.max(dij);
                } else {
                    min_between = min_between.min(dij);
                }
            }
        }
        let s = if nk[li] <= 1 {
            0.0
        } else {
            let ai = sums[li] / (nk[li] - 1) as f64;
            let bi = (0..k)
                .filter(|&c| c != li && nk[c] > 0)
                .map(|c| sums[c] / nk[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = ai.max(bi);
            if m > 0.0 {
                (bi - ai) / m
            } else {
                0.0
            }
        };
        sil_sum[li] += s;
    }
    let silhouette = (0..k)
        .map(|c| sil_sum[c] / nk[c].max(1) as f64)
        .sum::<f64>()
        / k as f64;
    let c_index = if n_within == 0 {
        f64::NAN
    } else {
        let lo = geo.smallest_sum(n_within);
        let hi = geo.largest_sum(n_within);
        (within_sum - lo) / (hi - lo)
    };
    let dunn = min_between / max_diam;
    (silhouette, c_index, dunn)
}
