//! Second-order gradient-boosted trees: a logistic classifier and a
//! squared-error regressor sharing one exact, level-wise tree builder.

use serde::{Deserialize, Serialize};

use super::cv::{group_kfold, kfold, Fold};
use super::tree::split_threshold;
use crate::data::POSITIVE;
use crate::error::{CiamsError, Result};
use crate::matrix::Matrix;

const LEAF: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegTree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
}

/// Per-feature (value, row) pairs sorted by value, restricted to a row set.
pub struct SortedColumns {
    cols: Vec<Vec<(f64, u32)>>,
}

impl SortedColumns {
    pub fn new(x: &Matrix, rows: &[usize]) -> SortedColumns {
        let cols = (0..x.ncols())
            .map(|f| {
                let mut c: Vec<(f64, u32)> = rows.iter().map(|&r| (x.get(r, f), r as u32)).collect();
                c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                c
            })
            .collect();
        SortedColumns { cols }
    }
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn leaf(value: f64) -> RegNode {
    RegNode {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        value,
        gain: 0.0,
    }
}

/// Grows one tree level by level on gradient `g` and hessian `h`
/// (both indexed by row of `x`).
pub fn build_tree(x: &Matrix, sorted: &SortedColumns, rows: &[usize], g: &[f64], h: &[f64], params: &TreeParams) -> RegTree {
    let lambda = params.lambda;
    let mut node_of = vec![NONE; x.nrows()];
    for &r in rows {
        node_of[r] = 0;
    }
    let (g0, h0) = rows.iter().fold((0.0, 0.0), |a, &r| (a.0 + g[r], a.1 + h[r]));
    let mut nodes = vec![leaf(-g0 / (h0 + lambda))];
    let mut open: Vec<(u32, f64, f64)> = vec![(0, g0, h0)];
    let mut slot: Vec<u32> = vec![0];

    for _ in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        let mut best: Vec<Option<Best>> = vec![None; k];
        let mut gl = vec![0.0; k];
        let mut hl = vec![0.0; k];
        let mut last = vec![f64::NAN; k];
        for (f, col) in sorted.cols.iter().enumerate() {
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &(v, r) in col {
                let nid = node_of[r as usize];
                if nid == NONE {
                    continue;
                }
                let s = slot[nid as usize] as usize;
                if !last[s].is_nan() && v > last[s] {
                    let (_, gt, ht) = open[s];
                    let hr = ht - hl[s];
                    if hl[s] >= params.min_child_weight && hr >= params.min_child_weight {
                        let gr = gt - gl[s];
                        let gain = gl[s] * gl[s] / (hl[s] + lambda) + gr * gr / (hr + lambda) - gt * gt / (ht + lambda);
                        if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Best {
                                gain,
                                feature: f,
                                threshold: split_threshold(last[s], v),
                            });
                        }
                    }
                }
                gl[s] += g[r as usize];
                hl[s] += h[r as usize];
                last[s] = v;
            }
        }
        // apply splits
        let mut children = vec![(NONE, NONE); k];
        for (s, b) in best.iter().enumerate() {
            if let Some(b) = b {
                let id = open[s].0 as usize;
                let l = nodes.len() as u32;
                nodes.push(leaf(0.0));
                nodes.push(leaf(0.0));
                let n = &mut nodes[id];
                n.feature = b.feature as u32;
                n.threshold = b.threshold;
                n.left = l;
                n.right = l + 1;
                n.gain = b.gain;
                children[s] = (l, l + 1);
            }
        }
        slot.resize(nodes.len(), NONE);
        let mut sums = vec![(0.0, 0.0); nodes.len()];
        for &r in rows {
            let nid = node_of[r];
            if nid == NONE {
                continue;
            }
            let s = slot[nid as usize] as usize;
            match children[s] {
                (NONE, _) => node_of[r] = NONE,
                (l, rt) => {
                    let b = best[s].expect("split recorded");
                    let c = if x.get(r, b.feature) <= b.threshold { l } else { rt };
                    node_of[r] = c;
                    sums[c as usize].0 += g[r];
                    sums[c as usize].1 += h[r];
                }
            }
        }
        let mut next = Vec::new();
        for &(l, rt) in &children {
            if l == NONE {
                continue;
            }
            for c in [l, rt] {
                let (gs, hs) = sums[c as usize];
                nodes[c as usize].value = -gs / (hs + lambda);
                next.push((c, gs, hs));
            }
        }
        for (i, &(c, _, _)) in next.iter().enumerate() {
            slot[c as usize] = i as u32;
        }
        open = next;
    }
    RegTree { nodes }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic-loss boosted classifier in the style of XGBoost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedClassifier {
    pub trees: Vec<RegTree>,
    pub eta: f64,
    pub max_depth: usize,
}

pub const BOOST_ROUNDS: usize = 100;
pub const BOOST_ETA: f64 = 0.3;

impl BoostedClassifier {
    pub fn fit(x: &Matrix, y: &[i8], max_depth: usize) -> BoostedClassifier {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let sorted = SortedColumns::new(x, &rows);
        Self::fit_rows(x, y, &rows, &sorted, max_depth)
    }

    pub(crate) fn fit_rows(x: &Matrix, y: &[i8], rows: &[usize], sorted: &SortedColumns, max_depth: usize) -> BoostedClassifier {
        let params = TreeParams {
            max_depth,
            lambda: 1.0,
            min_child_weight: 1.0,
        };
        let n = x.nrows();
        let mut margin = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut trees = Vec::with_capacity(BOOST_ROUNDS);
        for _ in 0..BOOST_ROUNDS {
            for &r in rows {
                let p = sigmoid(margin[r]);
                let t = if y[r] == POSITIVE { 1.0 } else { 0.0 };
                g[r] = p - t;
                h[r] = (p * (1.0 - p)).max(1e-16);
            }
            let tree = build_tree(x, sorted, rows, &g, &h, &params);
            for &r in rows {
                margin[r] += BOOST_ETA * tree.predict(x.row(r));
            }
            trees.push(tree);
        }
        BoostedClassifier {
            trees,
            eta: BOOST_ETA,
            max_depth,
        }
    }

    /// Deepest tree actually grown.
    pub fn realized_depth(&self) -> usize {
        self.trees.iter().map(RegTree::depth).max().unwrap_or(0)
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| self.eta * t.predict(x)).sum()
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        if self.margin(x) >= 0.0 {
            POSITIVE
        } else {
            -POSITIVE
        }
    }
}

pub const GBT_ROUNDS: usize = 200;
pub const GBT_LEARNING_RATE: f64 = 0.1;
pub const GBT_PATIENCE: usize = 20;

/// Squared-error boosted regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBTRegressor {
    pub trees: Vec<RegTree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub max_depth: usize,
    pub n_features: usize,
    /// Total split gain per input feature.
    pub feature_gain: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl GbtParams {
    pub fn with_depth(max_depth: usize) -> GbtParams {
        GbtParams {
            rounds: GBT_ROUNDS,
            learning_rate: GBT_LEARNING_RATE,
            tree: TreeParams {
                max_depth,
                lambda: 1.0,
                min_child_weight: 1.0,
            },
        }
    }
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

impl GBTRegressor {
    pub fn constant(value: f64, n_features: usize) -> GBTRegressor {
        GBTRegressor {
            trees: Vec::new(),
            learning_rate: GBT_LEARNING_RATE,
            base_score: value,
            max_depth: 0,
            n_features,
            feature_gain: vec![0.0; n_features],
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(CiamsError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| self.learning_rate * t.predict(x)).sum::<f64>()
    }

    /// Boosts for exactly `params.rounds` rounds on the given rows.
    /// `monitor` receives the training loss after each round.
    pub fn boost(x: &Matrix, y: &[f64], params: &GbtParams, mut monitor: impl FnMut(usize, &GBTRegressor)) -> GBTRegressor {
        let n = x.nrows();
        if n == 0 || is_constant(y) {
            return GBTRegressor::constant(y.first().copied().unwrap_or(0.0), x.ncols());
        }
        let rows: Vec<usize> = (0..n).collect();
        let sorted = SortedColumns::new(x, &rows);
        let base = y.iter().sum::<f64>() / n as f64;
        let mut model = GBTRegressor {
            base_score: base,
            max_depth: params.tree.max_depth,
            learning_rate: params.learning_rate,
            ..GBTRegressor::constant(base, x.ncols())
        };
        let mut pred = vec![base; n];
        let mut g = vec![0.0; n];
        let h = vec![1.0; n];
        for round in 0..params.rounds {
            for r in 0..n {
                g[r] = pred[r] - y[r];
            }
            let tree = build_tree(x, &sorted, &rows, &g, &h, &params.tree);
            for r in 0..n {
                pred[r] += params.learning_rate * tree.predict(x.row(r));
            }
            for node in &tree.nodes {
                if node.feature != LEAF {
                    model.feature_gain[node.feature as usize] += node.gain;
                }
            }
            model.trees.push(tree);
            monitor(round, &model);
        }
        model
    }
}

/// Cross-validation outcome of the depth search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtCvReport {
    pub depth: usize,
    pub rounds: usize,
    /// Pooled out-of-fold R² of the chosen depth.
    pub cv_r2: f64,
    pub degenerate: bool,
}

fn r2(y: &[f64], p: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let res: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    if tot == 0.0 {
        0.0
    } else {
        1.0 - res / tot
    }
}

struct FoldState {
    xt: Matrix,
    yt: Vec<f64>,
    xv: Matrix,
    sorted: SortedColumns,
    pt: Vec<f64>,
    pv: Vec<f64>,
}

impl FoldState {
    fn new(x: &Matrix, y: &[f64], fold: &Fold) -> FoldState {
        let xt = x.select_rows(&fold.train);
        let yt: Vec<f64> = fold.train.iter().map(|&i| y[i]).collect();
        let rows: Vec<usize> = (0..xt.nrows()).collect();
        let sorted = SortedColumns::new(&xt, &rows);
        let base = yt.iter().sum::<f64>() / yt.len() as f64;
        FoldState {
            xv: x.select_rows(&fold.valid),
            pt: vec![base; yt.len()],
            pv: vec![base; fold.valid.len()],
            xt,
            yt,
            sorted,
        }
    }

    fn step(&mut self, params: &GbtParams) {
        let rows: Vec<usize> = (0..self.yt.len()).collect();
        let g: Vec<f64> = self.pt.iter().zip(&self.yt).map(|(p, y)| p - y).collect();
        let h = vec![1.0; g.len()];
        let tree = build_tree(&self.xt, &self.sorted, &rows, &g, &h, &params.tree);
        for (r, p) in self.pt.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(self.xt.row(r));
        }
        for (r, p) in self.pv.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(self.xv.row(r));
        }
    }
}

/// Boosts all folds in lockstep and early-stops on the pooled out-of-fold
/// squared error. Returns the best round count (0 means the training mean)
/// and the pooled out-of-fold predictions at that round.
fn cv_curve(x: &Matrix, y: &[f64], folds: &[Fold], depth: usize) -> (usize, Vec<f64>) {
    let params = GbtParams::with_depth(depth);
    let mut states: Vec<FoldState> = folds.iter().map(|f| FoldState::new(x, y, f)).collect();
    let pooled = |states: &[FoldState]| {
        let mut oof = vec![0.0; y.len()];
        for (st, f) in states.iter().zip(folds) {
            for (&i, &v) in f.valid.iter().zip(&st.pv) {
                oof[i] = v;
            }
        }
        oof
    };
    let sse = |oof: &[f64]| oof.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
    let first = pooled(&states);
    let mut best = (0usize, sse(&first), first);
    for round in 0..params.rounds {
        for st in states.iter_mut() {
            if !is_constant(&st.yt) {
                st.step(&params);
            }
        }
        let oof = pooled(&states);
        let loss = sse(&oof);
        if loss < best.1 {
            best = (round + 1, loss, oof);
        } else if round + 1 - best.0 >= GBT_PATIENCE {
            break;
        }
    }
    (best.0, best.2)
}

fn fit_with_folds(x: &Matrix, y: &[f64], folds: &[Fold], depth_grid: &[usize]) -> Result<(GBTRegressor, GbtCvReport)> {
    if x.nrows() != y.len() {
        return Err(CiamsError::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if depth_grid.is_empty() {
        return Err(CiamsError::InvalidInput("empty depth grid".into()));
    }
    if y.is_empty() || is_constant(y) {
        let c = y.first().copied().unwrap_or(0.0);
        return Ok((
            GBTRegressor::constant(c, x.ncols()),
            GbtCvReport {
                depth: 0,
                rounds: 0,
                cv_r2: 0.0,
                degenerate: true,
            },
        ));
    }
    let mut best: Option<GbtCvReport> = None;
    for &depth in depth_grid {
        let (rounds, oof) = cv_curve(x, y, folds, depth);
        let score = r2(y, &oof);
        if best.as_ref().is_none_or(|b| score > b.cv_r2) {
            best = Some(GbtCvReport {
                depth,
                rounds,
                cv_r2: score,
                degenerate: false,
            });
        }
    }
    let report = best.expect("non-empty grid");
    let params = GbtParams {
        rounds: report.rounds,
        ..GbtParams::with_depth(report.depth)
    };
    Ok((GBTRegressor::boost(x, y, &params, |_, _| {}), report))
}

/// Tunes tree depth by k-fold CV R² and refits on all rows.
pub fn fit_gbt_regressor(x: &Matrix, y: &[f64], depth_grid: &[usize], folds: usize, seed: u64) -> Result<GBTRegressor> {
    if y.len() < 2 * folds.max(2) && !is_constant(y) {
        return Err(CiamsError::InvalidInput(format!(
            "{} rows are too few for {folds}-fold tuning",
            y.len()
        )));
    }
    let folds = kfold(y.len(), folds.max(2), seed);
    fit_with_folds(x, y, &folds, depth_grid).map(|r| r.0)
}

/// As [`fit_gbt_regressor`], with folds that keep each group intact.
pub fn fit_gbt_regressor_grouped(
    x: &Matrix,
    y: &[f64],
    groups: &[String],
    depth_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<(GBTRegressor, GbtCvReport)> {
    let folds = group_kfold(groups, folds.max(2), seed)?;
    fit_with_folds(x, y, &folds, depth_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_target() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]);
        let y = [0.7; 6];
        let g = fit_gbt_regressor(&x, &y, &[2, 3], 3, 1).unwrap();
        assert!(g.trees.is_empty());
        for v in [-10.0, 0.0, 3.3, 99.0] {
            assert_eq!(g.predict(&[v]).unwrap(), 0.7);
        }
        assert!(g.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_combination_of_trees() {
        let mut g = GBTRegressor::constant(0.5, 1);
        g.trees.push(RegTree { nodes: vec![leaf(0.2)] });
        g.learning_rate = 0.1;
        assert!((g.predict(&[3.0]).unwrap() - 0.52).abs() < 1e-15);
    }

    #[test]
    fn single_stump_matches_exhaustive_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = xs.iter().map(|&v| if v > 0.37 { 2.0 } else { -1.0 } + rng.random_range(-0.3..0.3)).collect();
        let x = Matrix::from_vec(60, 1, xs.clone());
        let params = GbtParams {
            rounds: 1,
            learning_rate: 1.0,
            tree: TreeParams {
                max_depth: 1,
                lambda: 0.0,
                min_child_weight: 1.0,
            },
        };
        let g = GBTRegressor::boost(&x, &y, &params, |_, _| {});
        // brute force: every cut between consecutive sorted values
        let mut order: Vec<usize> = (0..60).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
        for cut in 1..60 {
            let (l, r) = order.split_at(cut);
            let ml = l.iter().map(|&i| y[i]).sum::<f64>() / l.len() as f64;
            let mr = r.iter().map(|&i| y[i]).sum::<f64>() / r.len() as f64;
            let sse: f64 = l.iter().map(|&i| (y[i] - ml).powi(2)).sum::<f64>() + r.iter().map(|&i| (y[i] - mr).powi(2)).sum::<f64>();
            if sse < best.0 {
                best = (sse, xs[l[cut - 1]], ml, mr);
            }
        }
        for &v in &xs {
            let want = if v <= best.1 { best.2 } else { best.3 };
            assert!((g.predict(&[v]).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn training_loss_never_increases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<[f64; 3]> = (0..120).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[2]).collect();
        let x = Matrix::from_rows(&rows);
        let mut losses = Vec::new();
        GBTRegressor::boost(&x, &y, &GbtParams::with_depth(3), |_, m| {
            let l: f64 = rows.iter().zip(&y).map(|(r, t)| (m.predict_unchecked(r) - t).powi(2)).sum();
            losses.push(l);
        });
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn learns_a_linear_signal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + rng.random_range(-0.01..0.01)).collect();
            (Matrix::from_rows(&rows), y)
        };
        let (x, y) = make(&mut rng, 500);
        let g = fit_gbt_regressor(&x, &y, &[2, 3, 4, 6], 3, 1).unwrap();
        let (xt, yt) = make(&mut rng, 300);
        let pred: Vec<f64> = xt.rows_iter().map(|r| g.predict(r).unwrap()).collect();
        assert!(r2(&yt, &pred) >= 0.95, "r2 = {}", r2(&yt, &pred));
        assert!(g.feature_gain[0] > g.feature_gain[1]);
    }

    #[test]
    fn classifier_separates_blobs() {
        let rows: Vec<[f64; 2]> = (0..60).map(|i| {
            let t = i as f64;
            if i % 2 == 0 { [t.sin(), t.cos()] } else { [5.0 + t.sin(), 5.0 + t.cos()] }
        }).collect();
        let y: Vec<i8> = (0..60).map(|i| if i % 2 == 0 { -1 } else { 1 }).collect();
        let x = Matrix::from_rows(&rows);
        let m = BoostedClassifier::fit(&x, &y, 2);
        assert!(m.realized_depth() <= 2);
        for (r, &l) in x.rows_iter().zip(&y) {
            assert_eq!(m.predict_row(r), l);
        }
    }
}
