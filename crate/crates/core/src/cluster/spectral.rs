//! Normalized spectral clustering with an RBF affinity.

use nalgebra::{DMatrix, SymmetricEigen};

use super::kmeans;
use crate::error::{CiamsError, Result};
use crate::matrix::{Distances, Matrix};
use crate::seed::Rng;

/// Median of the pairwise squared distances; falls back to the mean of the
/// positive ones when more than half the pairs coincide.
fn median_sq_bandwidth(d: &Distances) -> f64 {
    let n = d.len();
    let mut sq = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = d.get(i, j);
            sq.push(v * v);
        }
    }
    let mid = sq.len() / 2;
    let (_, m, _) = sq.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let m = *m;
    if m > 0.0 {
        return m;
    }
    let pos: Vec<f64> = sq.into_iter().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        1.0
    } else {
        pos.iter().sum::<f64>() / pos.len() as f64
    }
}

pub fn spectral(d: &Distances, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = d.len();
    let sigma2 = median_sq_bandwidth(d);
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let v = d.get(i, j);
            (-(v * v) / sigma2).exp()
        }
    });
    spectral_from_affinity(w, k, rng)
}

/// Bottom-`k` eigenvectors of the symmetric normalized Laplacian of `w`,
/// row-normalized, then k-means.
pub fn spectral_from_affinity(w: DMatrix<f64>, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = w.nrows();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = w.row(i).sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    // The smallest eigenvalues of I - D^-1/2 W D^-1/2 are the largest of
    // D^-1/2 W D^-1/2, so decompose the latter.
    let m = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| CiamsError::MethodFailure("spectral eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut emb = Matrix::zeros(n, k);
    for (c, &e) in order.iter().take(k).enumerate() {
        // fix the sign so the embedding does not depend on solver internals
        let col = eig.eigenvectors.column(e);
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            emb.set(i, c, sign * col[i]);
        }
    }
    for i in 0..n {
        let norm = emb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            emb.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
    }
    if !emb.is_finite() {
        return Err(CiamsError::MethodFailure("non-finite spectral embedding".into()));
    }
    Ok(kmeans(&emb, k, 10, 300, rng).labels)
}
