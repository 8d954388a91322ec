//! The four clustering methods that induce partitions for index computation.

mod hdbscan;
mod kmeans;
mod spectral;
mod ward;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CiamsError, Result};
use crate::matrix::{Distances, Matrix};

pub use hdbscan::hdbscan;
pub use kmeans::{kmeans, KMeansFit};
pub use spectral::{spectral, spectral_from_affinity};
pub use ward::{ward_cut, ward_linkage, Merge};

/// Clustering method. The declaration order is the schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClusterMethod {
    KMeans,
    Agglomerative,
    Spectral,
    Hdbscan,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 4] = [
        ClusterMethod::KMeans,
        ClusterMethod::Agglomerative,
        ClusterMethod::Spectral,
        ClusterMethod::Hdbscan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClusterMethod::KMeans => "kmeans",
            ClusterMethod::Agglomerative => "agglomerative",
            ClusterMethod::Spectral => "spectral",
            ClusterMethod::Hdbscan => "hdbscan",
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ClusterMethod {
    type Err = CiamsError;
    fn from_str(s: &str) -> Result<Self> {
        ClusterMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| CiamsError::Config(format!("unknown clustering method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub min_cluster_size_fraction: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 2,
            min_cluster_size_fraction: 0.01,
        }
    }
}

impl ClusterConfig {
    pub fn hdbscan_min_cluster_size(&self, h: usize) -> usize {
        ((self.min_cluster_size_fraction * h as f64).ceil() as usize).max(5)
    }
}

/// A partition of the subsample rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub method: ClusterMethod,
    /// Final cluster id per point, in `[0, k)`.
    pub labels: Vec<usize>,
    /// Effective number of non-empty clusters.
    pub k: usize,
    /// Points HDBSCAN left unassigned before noise resolution.
    pub noise_mask: Vec<bool>,
}

impl ClusterAssignment {
    /// Builds an assignment with ids renumbered by first appearance.
    pub fn from_labels(method: ClusterMethod, labels: &[usize]) -> ClusterAssignment {
        let (labels, k) = canonical(labels);
        let n = labels.len();
        ClusterAssignment {
            method,
            labels,
            k,
            noise_mask: vec![false; n],
        }
    }

    fn single(method: ClusterMethod, n: usize) -> ClusterAssignment {
        ClusterAssignment {
            method,
            labels: vec![0; n],
            k: 1,
            noise_mask: vec![false; n],
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

fn canonical(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn all_identical(x: &Matrix) -> bool {
    x.nrows() == 0 || x.rows_iter().all(|r| r == x.row(0))
}

/// Clusters `x`; `dists` must be the pairwise distances of `x`.
pub fn cluster_with_distances(
    x: &Matrix,
    dists: &Distances,
    method: ClusterMethod,
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = x.nrows();
    if method != ClusterMethod::Hdbscan && n < cfg.k {
        return Err(CiamsError::InvalidInput(format!(
            "cannot form {} clusters from {} points",
            cfg.k, n
        )));
    }
    if !x.is_finite() {
        return Err(CiamsError::InvalidInput("non-finite features".into()));
    }
    if all_identical(x) {
        return Ok(ClusterAssignment::single(method, n));
    }
    let mut rng = crate::seed::rng(seed);
    let a = match method {
        ClusterMethod::KMeans => {
            let fit = kmeans(x, cfg.k, 10, 300, &mut rng);
            ClusterAssignment::from_labels(method, &fit.labels)
        }
        ClusterMethod::Agglomerative => {
            let merges = ward_linkage(x);
            ClusterAssignment::from_labels(method, &ward_cut(n, &merges, cfg.k))
        }
        ClusterMethod::Spectral => {
            let labels = spectral(dists, cfg.k, &mut rng)?;
            ClusterAssignment::from_labels(method, &labels)
        }
        ClusterMethod::Hdbscan => {
            let m = cfg.hdbscan_min_cluster_size(n);
            let raw = hdbscan(dists, m, m);
            let noise_mask: Vec<bool> = raw.iter().map(Option::is_none).collect();
            let labels: Vec<usize> = raw.iter().map(|l| l.unwrap_or(0)).collect();
            let a = ClusterAssignment {
                method,
                k: 0,
                labels,
                noise_mask,
            };
            resolve_noise(&a, dists)
        }
    };
    Ok(a)
}

pub fn cluster(
    x: &Matrix,
    method: ClusterMethod,
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<ClusterAssignment> {
    let d = Distances::new(x);
    cluster_with_distances(x, &d, method, cfg, seed)
}

/// Gives every noise point the cluster of its nearest non-noise point.
/// All-noise input collapses to a single cluster.
pub fn resolve_noise(a: &ClusterAssignment, dists: &Distances) -> ClusterAssignment {
    let n = a.labels.len();
    let core: Vec<usize> = (0..n).filter(|&i| !a.noise_mask[i]).collect();
    if core.is_empty() {
        return ClusterAssignment {
            noise_mask: a.noise_mask.clone(),
            ..ClusterAssignment::single(a.method, n)
        };
    }
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if !a.noise_mask[i] {
                return a.labels[i];
            }
            let row = dists.row(i);
            let nearest = core
                .iter()
                .copied()
                .min_by(|&p, &q| row[p].total_cmp(&row[q]).then(p.cmp(&q)))
                .expect("non-empty");
            a.labels[nearest]
        })
        .collect();
    let (labels, k) = canonical(&labels);
    ClusterAssignment {
        method: a.method,
        labels,
        k,
        noise_mask: a.noise_mask.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(n_each: usize, sep: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = crate::seed::rng(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for c in 0..2 {
            for _ in 0..n_each {
                let off = if c == 0 { 0.0 } else { sep };
                rows.push(vec![off + noise.sample(&mut rng), noise.sample(&mut rng)]);
                truth.push(c);
            }
        }
        // interleave so that label order is not trivially aligned
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let truth = idx.iter().map(|&i| truth[i]).collect();
        (Matrix::from_rows(&rows), truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        canonical(a).0 == canonical(b).0
    }

    #[test]
    fn every_method_recovers_separated_blobs() {
        let (x, truth) = blobs(40, 20.0, 3);
        for m in ClusterMethod::ALL {
            let a = cluster(&x, m, &ClusterConfig::default(), 11).unwrap();
            assert!(same_partition(&a.labels, &truth), "{m}");
            assert_eq!(a.k, 2);
            assert!(a.sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn identical_rows_give_single_cluster() {
        let x = Matrix::from_rows(&vec![vec![1.0, 2.0]; 10]);
        for m in ClusterMethod::ALL {
            let a = cluster(&x, m, &ClusterConfig::default(), 0).unwrap();
            assert_eq!(a.k, 1);
            assert!(a.labels.iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn too_few_points_is_an_error() {
        let x = Matrix::from_rows(&[[1.0]]);
        assert!(cluster(&x, ClusterMethod::KMeans, &ClusterConfig::default(), 0).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (x, _) = blobs(30, 1.0, 9);
        for m in ClusterMethod::ALL {
            let cfg = ClusterConfig::default();
            assert_eq!(cluster(&x, m, &cfg, 5).unwrap(), cluster(&x, m, &cfg, 5).unwrap());
        }
    }

    #[test]
    fn resolve_noise_cases() {
        let x = Matrix::from_rows(&[[0.0], [0.1], [5.0], [5.2], [0.2]]);
        let d = Distances::new(&x);
        let clean = ClusterAssignment::from_labels(ClusterMethod::Hdbscan, &[0, 0, 1, 1, 0]);
        assert_eq!(resolve_noise(&clean, &d), clean);

        let mut noisy = clean.clone();
        noisy.noise_mask[4] = true;
        noisy.labels[4] = 1;
        let r = resolve_noise(&noisy, &d);
        assert_eq!(r.labels, vec![0, 0, 1, 1, 0]);
        assert!(r.noise_mask[4]);

        let mut all = clean.clone();
        all.noise_mask = vec![true; 5];
        let r = resolve_noise(&all, &d);
        assert_eq!(r.k, 1);
        assert_eq!(r.labels, vec![0; 5]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in ClusterMethod::ALL {
            assert_eq!(m.as_str().parse::<ClusterMethod>().unwrap(), m);
        }
        assert!("dbscan".parse::<ClusterMethod>().is_err());
    }

    #[test]
    fn hdbscan_min_cluster_size_rule() {
        let c = ClusterConfig::default();
        assert_eq!(c.hdbscan_min_cluster_size(100), 5);
        assert_eq!(c.hdbscan_min_cluster_size(500), 5);
        assert_eq!(c.hdbscan_min_cluster_size(501), 6);
        assert_eq!(c.hdbscan_min_cluster_size(1000), 10);
    }
}
