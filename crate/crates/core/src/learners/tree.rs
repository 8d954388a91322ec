//! CART classification trees (Gini impurity) with depth truncation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::POSITIVE;
use crate::matrix::Matrix;
use crate::seed::Rng;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub depth: u32,
    /// Majority label of the training rows reaching this node.
    pub label: i8,
}

impl CartNode {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

/// Threshold strictly separating `lo < hi` with `x <= t` going left.
pub(crate) fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn majority(pos: usize, neg: usize) -> i8 {
    if pos >= neg {
        POSITIVE
    } else {
        -POSITIVE
    }
}

/// Feature sampling for random forests.
pub(crate) struct FeatureSampler<'a> {
    pub mtry: usize,
    pub rng: &'a mut Rng,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split_on(x: &Matrix, y: &[i8], rows: &[usize], f: usize, buf: &mut Vec<(f64, bool)>) -> Option<Split> {
    buf.clear();
    buf.extend(rows.iter().map(|&r| (x.get(r, f), y[r] == POSITIVE)));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let m = buf.len() as f64;
    let total_pos = buf.iter().filter(|e| e.1).count() as f64;
    let mut lp = 0.0;
    let mut best: Option<Split> = None;
    for i in 0..buf.len() - 1 {
        if buf[i].1 {
            lp += 1.0;
        }
        if buf[i].0 == buf[i + 1].0 {
            continue;
        }
        let nl = (i + 1) as f64;
        let nr = m - nl;
        let ln = nl - lp;
        let rp = total_pos - lp;
        let rn = nr - rp;
        // m * weighted Gini of the children
        let imp = nl - (lp * lp + ln * ln) / nl + nr - (rp * rp + rn * rn) / nr;
        if best.as_ref().is_none_or(|b| imp < b.impurity) {
            best = Some(Split {
                feature: f,
                threshold: split_threshold(buf[i].0, buf[i + 1].0),
                impurity: imp,
            });
        }
    }
    best
}

fn find_split(
    x: &Matrix,
    y: &[i8],
    rows: &[usize],
    sampler: &mut Option<FeatureSampler<'_>>,
    buf: &mut Vec<(f64, bool)>,
) -> Option<Split> {
    let p = x.ncols();
    let mut best: Option<Split> = None;
    let mut consider = |f: usize, best: &mut Option<Split>| -> bool {
        match best_split_on(x, y, rows, f, buf) {
            Some(s) => {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    *best = Some(s);
                }
                true
            }
            None => false,
        }
    };
    match sampler {
        None => {
            for f in 0..p {
                consider(f, &mut best);
            }
        }
        Some(s) => {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(s.rng);
            let mut usable = 0;
            for f in order {
                if consider(f, &mut best) {
                    usable += 1;
                }
                if usable >= s.mtry {
                    break;
                }
            }
        }
    }
    best
}

/// Grows a tree until every leaf is pure or unsplittable. `rows` may
/// contain repeats (bootstrap draws).
pub(crate) fn grow(x: &Matrix, y: &[i8], rows: &[usize], mut sampler: Option<FeatureSampler<'_>>) -> Vec<CartNode> {
    let mut nodes: Vec<CartNode> = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut buf = Vec::with_capacity(rows.len());
    let push = |nodes: &mut Vec<CartNode>, rows: &[usize], depth: u32| -> usize {
        let pos = rows.iter().filter(|&&r| y[r] == POSITIVE).count();
        nodes.push(CartNode {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            depth,
            label: majority(pos, rows.len() - pos),
        });
        nodes.len() - 1
    };
    let root = push(&mut nodes, rows, 0);
    stack.push((root, rows.to_vec()));
    while let Some((id, rows)) = stack.pop() {
        let pos = rows.iter().filter(|&&r| y[r] == POSITIVE).count();
        if pos == 0 || pos == rows.len() {
            continue;
        }
        let Some(split) = find_split(x, y, &rows, &mut sampler, &mut buf) else {
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| x.get(i, split.feature) <= split.threshold);
        let depth = nodes[id].depth + 1;
        let li = push(&mut nodes, &l, depth);
        let ri = push(&mut nodes, &r, depth);
        let n = &mut nodes[id];
        n.feature = split.feature as u32;
        n.threshold = split.threshold;
        n.left = li as u32;
        n.right = ri as u32;
        // right first so the left subtree is expanded first
        stack.push((ri, r));
        stack.push((li, l));
    }
    nodes
}

/// Labels of the nodes visited by `x`, indexed by depth.
pub(crate) fn path_labels(nodes: &[CartNode], x: &[f64], out: &mut Vec<i8>) {
    out.clear();
    let mut i = 0;
    loop {
        let n = &nodes[i];
        out.push(n.label);
        if n.is_leaf() {
            return;
        }
        i = if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
    }
}

pub(crate) fn predict_nodes(nodes: &[CartNode], x: &[f64], max_depth: usize) -> i8 {
    let mut i = 0;
    loop {
        let n = &nodes[i];
        if n.is_leaf() || n.depth as usize >= max_depth {
            return n.label;
        }
        i = if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
    }
}

pub(crate) fn nodes_depth(nodes: &[CartNode]) -> usize {
    nodes.iter().map(|n| n.depth as usize).max().unwrap_or(0)
}

/// A fitted classification tree, evaluated up to `max_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<CartNode>,
    pub max_depth: usize,
}

impl DecisionTree {
    /// Grows a full tree on all rows.
    pub fn fit(x: &Matrix, y: &[i8]) -> DecisionTree {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let nodes = grow(x, y, &rows, None);
        let max_depth = nodes_depth(&nodes);
        DecisionTree { nodes, max_depth }
    }

    /// Depth of the grown (untruncated) tree.
    pub fn full_depth(&self) -> usize {
        nodes_depth(&self.nodes)
    }

    pub fn truncated(mut self, depth: usize) -> DecisionTree {
        self.max_depth = depth;
        self
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        predict_nodes(&self.nodes, x, self.max_depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stump_semantics() {
        let x = Matrix::from_rows(&[[0.1, 5.0], [0.2, 1.0], [0.8, 2.0], [0.9, 7.0]]);
        let y = [-1, -1, 1, 1];
        let t = DecisionTree::fit(&x, &y);
        assert_eq!(t.full_depth(), 1);
        assert_eq!(t.nodes[0].feature, 0);
        assert!((t.nodes[0].threshold - 0.5).abs() < 1e-12);
        assert_eq!(t.predict_row(&[0.9, 0.0]), 1);
        assert_eq!(t.predict_row(&[0.3, 0.0]), -1);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let y = [-1, 1, 1, -1];
        let t = DecisionTree::fit(&x, &y);
        for (i, r) in x.rows_iter().enumerate() {
            assert_eq!(t.predict_row(r), y[i]);
        }
        assert_eq!(t.full_depth(), 2);
        let stump = t.truncated(0);
        assert_eq!(stump.predict_row(&[0.0, 0.0]), 1);
    }

    proptest! {
        #[test]
        fn full_tree_fits_distinct_points(pts in prop::collection::btree_set((0i32..50, 0i32..50), 2..40), bits in prop::collection::vec(prop::bool::ANY, 40)) {
            let rows: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a as f64, b as f64]).collect();
            let x = Matrix::from_rows(&rows);
            let y: Vec<i8> = (0..rows.len()).map(|i| if bits[i] { 1 } else { -1 }).collect();
            let t = DecisionTree::fit(&x, &y);
            for (i, r) in x.rows_iter().enumerate() {
                prop_assert_eq!(t.predict_row(r), y[i]);
            }
            let pruned = t.clone().truncated(t.full_depth() / 2);
            prop_assert!(pruned.max_depth <= t.full_depth());
        }
    }
}
