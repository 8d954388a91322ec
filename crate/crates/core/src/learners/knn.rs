//! k-nearest-neighbour voting.

use serde::{Deserialize, Serialize};

use crate::data::{class_counts, POSITIVE};
use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Matrix,
    pub labels: Vec<i8>,
}

/// `round(majority / minority)` clamped to `[1, n - 1]`.
pub fn imbalance_k(labels: &[i8]) -> usize {
    let (neg, pos) = class_counts(labels);
    let (maj, min) = (neg.max(pos), neg.min(pos));
    let r = if min == 0 { 1.0 } else { maj as f64 / min as f64 };
    let cap = labels.len().saturating_sub(1).max(1);
    (r.round() as usize).clamp(1, cap)
}

impl KnnModel {
    pub fn fit(x: &Matrix, y: &[i8], k: usize) -> KnnModel {
        KnnModel {
            k: k.clamp(1, y.len().max(1)),
            points: x.clone(),
            labels: y.to_vec(),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        let mut d: Vec<(f64, usize)> = self
            .points
            .rows_iter()
            .enumerate()
            .map(|(i, r)| (sq_dist(r, x), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        let near = &mut d[..k];
        near.sort_by(cmp);
        let votes: i64 = near.iter().map(|&(_, i)| i64::from(self.labels[i])).sum();
        match votes.cmp(&0) {
            std::cmp::Ordering::Greater => POSITIVE,
            std::cmp::Ordering::Less => -POSITIVE,
            std::cmp::Ordering::Equal => self.labels[near[0].1],
        }
    }
}
