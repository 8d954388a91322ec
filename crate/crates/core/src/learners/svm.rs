//! C-SVC with an RBF kernel, trained by SMO with second-order working-set
//! selection.

use serde::{Deserialize, Serialize};

use crate::data::POSITIVE;
use crate::matrix::{sq_dist, Matrix};

const TAU: f64 = 1e-12;
pub const SMO_EPS: f64 = 1e-3;

/// `1 / (p * var)` where `var` is the variance of all entries of `x`.
pub fn default_gamma(x: &Matrix) -> f64 {
    let p = x.ncols().max(1) as f64;
    let v = x.as_slice();
    if v.is_empty() {
        return 1.0 / p;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
    if var > 0.0 {
        1.0 / (p * var)
    } else {
        1.0 / p
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// Kernel rows over a training set, from a precomputed Gram matrix when
/// one fits in memory.
pub(crate) struct Gram<'a> {
    x: &'a Matrix,
    rows: &'a [usize],
    gamma: f64,
    full: Option<&'a [f64]>,
    n_full: usize,
}

/// Gram matrices above this many points are computed row by row.
pub const MAX_PRECOMPUTED: usize = 3000;

pub(crate) fn gram_matrix(x: &Matrix, gamma: f64) -> Option<Vec<f64>> {
    let n = x.nrows();
    if n > MAX_PRECOMPUTED {
        return None;
    }
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Some(k)
}

impl<'a> Gram<'a> {
    pub(crate) fn new(x: &'a Matrix, rows: &'a [usize], gamma: f64, full: Option<&'a [f64]>) -> Gram<'a> {
        Gram {
            x,
            rows,
            gamma,
            full,
            n_full: x.nrows(),
        }
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        let ri = self.rows[i];
        match self.full {
            Some(k) => {
                let base = &k[ri * self.n_full..(ri + 1) * self.n_full];
                for (o, &r) in out.iter_mut().zip(self.rows) {
                    *o = base[r];
                }
            }
            None => {
                let xi = self.x.row(ri);
                for (o, &r) in out.iter_mut().zip(self.rows) {
                    *o = rbf(xi, self.x.row(r), self.gamma);
                }
            }
        }
    }
}

/// Dual solution over the training rows.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub gap: f64,
}

pub(crate) fn smo(gram: &Gram<'_>, y: &[f64], c: f64, eps: f64) -> DualSolution {
    let l = y.len();
    let mut alpha = vec![0.0; l];
    let mut g = vec![-1.0; l];
    let mut ki = vec![0.0; l];
    let mut kj = vec![0.0; l];
    let max_iter = (100 * l).max(100_000);
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    while iterations < max_iter {
        // first index: maximal violating candidate
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let v = if y[t] > 0.0 {
                if upper(alpha[t]) { continue } else { -g[t] }
            } else if lower(alpha[t]) {
                continue;
            } else {
                g[t]
            };
            if v > gmax {
                gmax = v;
                i = t;
            }
        }
        if i == usize::MAX {
            gap = 0.0;
            break;
        }
        gram.row(i, &mut ki);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..l {
            let (grad_diff, v) = if y[t] > 0.0 {
                if lower(alpha[t]) {
                    continue;
                }
                (gmax + g[t], g[t])
            } else {
                if upper(alpha[t]) {
                    continue;
                }
                (gmax - g[t], -g[t])
            };
            gmax2 = gmax2.max(v);
            if grad_diff > 0.0 {
                // K_ii = K_tt = 1 for the RBF kernel
                let quad = 2.0 - 2.0 * ki[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -grad_diff * grad_diff / quad;
                if obj < best_obj {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        gap = gmax + gmax2;
        if gap < eps || j == usize::MAX {
            break;
        }
        iterations += 1;
        gram.row(j, &mut kj);
        let qij = y[i] * y[j] * ki[j];
        let (oi, oj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (2.0 + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - oi, alpha[j] - oj);
        for t in 0..l {
            g[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    // offset
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = y[t] * g[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    DualSolution {
        alpha,
        rho,
        iterations,
        gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support: Matrix,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub c: f64,
}

impl SvmModel {
    pub fn fit(x: &Matrix, y: &[i8], c: f64, gamma: f64) -> SvmModel {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let full = gram_matrix(x, gamma);
        let gram = Gram::new(x, &rows, gamma, full.as_deref());
        Self::fit_gram(x, y, &rows, &gram, c, gamma)
    }

    pub(crate) fn fit_gram(x: &Matrix, y: &[i8], rows: &[usize], gram: &Gram<'_>, c: f64, gamma: f64) -> SvmModel {
        let ys: Vec<f64> = rows.iter().map(|&r| if y[r] == POSITIVE { 1.0 } else { -1.0 }).collect();
        let sol = smo(gram, &ys, c, SMO_EPS);
        if sol.gap >= SMO_EPS {
            log::debug!("smo stopped after {} iterations with gap {:.2e}", sol.iterations, sol.gap);
        }
        let sv: Vec<usize> = (0..rows.len()).filter(|&t| sol.alpha[t] > 0.0).collect();
        SvmModel {
            support: x.select_rows(&sv.iter().map(|&t| rows[t]).collect::<Vec<_>>()),
            coef: sv.iter().map(|&t| sol.alpha[t] * ys[t]).collect(),
            rho: sol.rho,
            gamma,
            c,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .rows_iter()
            .zip(&self.coef)
            .map(|(s, a)| a * rbf(s, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        if self.decision(x) >= 0.0 {
            POSITIVE
        } else {
            -POSITIVE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn instance(seed: u64, n: usize) -> (Matrix, Vec<i8>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y: Vec<i8> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| if (r[0] * r[1] > 0.0) ^ (i % 7 == 0) { 1 } else { -1 })
            .collect();
        (Matrix::from_rows(&rows), y)
    }

    /// Projected gradient on the dual: projection onto the box with the
    /// equality constraint via bisection on its multiplier.
    fn qp_oracle(k: &[f64], y: &[f64], c: f64) -> Vec<f64> {
        let l = y.len();
        let project = |v: &[f64]| -> Vec<f64> {
            let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(a, yi)| (a - mu * yi).clamp(0.0, c)).collect() };
            let s = |mu: f64| at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if s(mid) > 0.0 { lo = mid } else { hi = mid }
            }
            at(0.5 * (lo + hi))
        };
        let lmax: f64 = (0..l).map(|i| (0..l).map(|j| k[i * l + j].abs()).sum::<f64>()).fold(0.0, f64::max);
        let step = 1.0 / lmax;
        let mut a = vec![0.0; l];
        for _ in 0..200_000 {
            let grad: Vec<f64> = (0..l)
                .map(|i| (0..l).map(|j| y[i] * y[j] * k[i * l + j] * a[j]).sum::<f64>() - 1.0)
                .collect();
            let v: Vec<f64> = a.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            a = project(&v);
        }
        a
    }

    #[test]
    fn decision_values_match_qp_oracle() {
        for seed in 0..4 {
            let (x, y) = instance(seed, 16);
            let gamma = 0.5;
            let c = 1.0;
            let k = gram_matrix(&x, gamma).unwrap();
            let ys: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
            let a = qp_oracle(&k, &ys, c);
            let l = ys.len();
            let f0 = |t: usize| (0..l).map(|j| a[j] * ys[j] * k[t * l + j]).sum::<f64>();
            let free: Vec<usize> = (0..l).filter(|&t| a[t] > 1e-6 && a[t] < c - 1e-6).collect();
            assert!(!free.is_empty());
            let rho = free.iter().map(|&t| f0(t) - ys[t]).sum::<f64>() / free.len() as f64;
            let m = SvmModel::fit(&x, &y, c, gamma);
            for q in [[0.3, 0.4], [-1.0, 1.5], [1.7, 1.9], [-0.2, -0.9]] {
                let want = (0..l).map(|j| a[j] * ys[j] * rbf(x.row(j), &q, gamma)).sum::<f64>() - rho;
                let got = m.decision(&q);
                assert!((got - want).abs() < 1e-3, "seed {seed}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn kkt_holds_at_exit() {
        let (x, y) = instance(11, 20);
        let gamma = default_gamma(&x);
        let k = gram_matrix(&x, gamma).unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let gram = Gram::new(&x, &rows, gamma, Some(&k));
        let ys: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
        for c in [0.1, 1.0, 10.0] {
            let sol = smo(&gram, &ys, c, SMO_EPS);
            assert!(sol.gap < SMO_EPS);
            assert!((sol.alpha.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-9);
            for t in 0..20 {
                let f = (0..20).map(|j| sol.alpha[j] * ys[j] * k[t * 20 + j]).sum::<f64>() - sol.rho;
                let m = ys[t] * f;
                let a = sol.alpha[t];
                assert!((0.0..=c).contains(&a));
                if a <= 0.0 {
                    assert!(m >= 1.0 - 1e-3, "c={c} t={t} margin {m}");
                } else if a >= c {
                    assert!(m <= 1.0 + 1e-3, "c={c} t={t} margin {m}");
                } else {
                    assert!((m - 1.0).abs() <= 1e-3, "c={c} t={t} margin {m}");
                }
            }
        }
    }

    #[test]
    fn gamma_rule() {
        // standardized columns have unit variance when flattened
        let x = Matrix::from_rows(&[[1.0; 10], [-1.0; 10]]);
        assert!((default_gamma(&x) - 0.1).abs() < 1e-12);
    }
}
