//! Random forest of Gini trees with majority voting.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{grow, nodes_depth, path_labels, predict_nodes, CartNode, FeatureSampler};
use crate::data::POSITIVE;
use crate::matrix::Matrix;
use crate::seed;

pub const N_TREES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Vec<CartNode>>,
    pub max_depth: usize,
}

pub fn mtry(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).max(1)
}

impl RandomForest {
    /// Grows `n_trees` unpruned trees on bootstrap draws of the rows.
    pub fn fit(x: &Matrix, y: &[i8], n_trees: usize, seed: u64) -> RandomForest {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Self::fit_rows(x, y, &rows, n_trees, seed)
    }

    /// As [`RandomForest::fit`], using only the given rows of `x`.
    pub fn fit_rows(x: &Matrix, y: &[i8], pool: &[usize], n_trees: usize, seed: u64) -> RandomForest {
        let n = pool.len();
        let m = mtry(x.ncols());
        let trees: Vec<Vec<CartNode>> = (0..n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(seed, t as u64));
                let rows: Vec<usize> = (0..n).map(|_| pool[rng.random_range(0..n)]).collect();
                grow(x, y, &rows, Some(FeatureSampler { mtry: m, rng: &mut rng }))
            })
            .collect();
        let max_depth = trees.iter().map(|t| nodes_depth(t)).max().unwrap_or(0);
        RandomForest { trees, max_depth }
    }

    pub fn full_depth(&self) -> usize {
        self.trees.iter().map(|t| nodes_depth(t)).max().unwrap_or(0)
    }

    pub fn truncated(mut self, depth: usize) -> RandomForest {
        self.max_depth = depth;
        self
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        let votes: i64 = self
            .trees
            .iter()
            .map(|t| i64::from(predict_nodes(t, x, self.max_depth)))
            .sum();
        if votes >= 0 {
            POSITIVE
        } else {
            -POSITIVE
        }
    }

    /// Vote margins for every depth limit `0..=max_depth` in one pass.
    pub(crate) fn depth_votes(&self, x: &[f64], max_depth: usize, votes: &mut Vec<i64>) {
        votes.clear();
        votes.resize(max_depth + 1, 0);
        let mut path = Vec::new();
        for t in &self.trees {
            path_labels(t, x, &mut path);
            for (d, v) in votes.iter_mut().enumerate() {
                *v += i64::from(path[d.min(path.len() - 1)]);
            }
        }
    }
}
