//! The six classifier families, their tuning grids, and the boosted
//! regression trees used by the mapper.

mod boost;
pub mod cv;
mod forest;
mod knn;
mod logistic;
mod svm;
mod tree;

pub use boost::{
    build_tree, fit_gbt_regressor, fit_gbt_regressor_grouped, BoostedClassifier, GBTRegressor, GbtCvReport, GbtParams,
    RegNode, RegTree, SortedColumns, TreeParams,
};
pub use forest::{mtry, RandomForest, N_TREES};
pub use knn::{imbalance_k, KnnModel};
pub use logistic::LogisticModel;
pub use svm::{default_gamma, rbf, SvmModel};
pub use tree::{CartNode, DecisionTree};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use self::cv::{effective_folds, stratified_folds, Fold};
use self::tree::{grow, nodes_depth, path_labels};
use crate::data::Dataset;
use crate::error::{CiamsError, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::stats::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    DecisionTree,
    RandomForest,
    LogisticRegression,
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "XGBoost")]
    XgBoost,
    #[serde(rename = "SVM")]
    Svm,
}

impl ModelClass {
    pub const ALL: [ModelClass; 6] = [
        ModelClass::DecisionTree,
        ModelClass::RandomForest,
        ModelClass::LogisticRegression,
        ModelClass::Knn,
        ModelClass::XgBoost,
        ModelClass::Svm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelClass::DecisionTree => "DecisionTree",
            ModelClass::RandomForest => "RandomForest",
            ModelClass::LogisticRegression => "LogisticRegression",
            ModelClass::Knn => "KNN",
            ModelClass::XgBoost => "XGBoost",
            ModelClass::Svm => "SVM",
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ModelClass {
    type Err = CiamsError;

    fn from_str(s: &str) -> Result<ModelClass> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "");
        ModelClass::ALL
            .into_iter()
            .find(|m| m.as_str().to_ascii_lowercase() == key)
            .or(match key.as_str() {
                "dt" | "tree" => Some(ModelClass::DecisionTree),
                "rf" | "forest" => Some(ModelClass::RandomForest),
                "lr" | "logistic" => Some(ModelClass::LogisticRegression),
                "xgb" | "xgboostlike" => Some(ModelClass::XgBoost),
                _ => None,
            })
            .ok_or_else(|| CiamsError::InvalidInput(format!("unknown model class {s:?}")))
    }
}

pub const LR_L1_RATIOS: [f64; 3] = [0.25, 0.5, 0.75];
pub const LR_STRENGTHS: [f64; 3] = [1.0, 0.1, 0.01];
pub const SVM_C: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const BOOST_DEPTHS: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];
pub const DEFAULT_FOLDS: usize = 5;

/// A grid point of one model class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    Tree { depth: usize },
    Forest { depth: usize },
    Logistic { lambda: f64, l1_ratio: f64 },
    Knn { k: usize },
    Boost { depth: usize },
    Svm { c: f64, gamma: f64 },
}

impl Hyper {
    pub fn to_map(self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match self {
            Hyper::Tree { depth } | Hyper::Forest { depth } => vec![("max_depth", depth as f64)],
            Hyper::Logistic { lambda, l1_ratio } => vec![("lambda", lambda), ("l1_ratio", l1_ratio)],
            Hyper::Knn { k } => vec![("k", k as f64)],
            Hyper::Boost { depth } => vec![("max_depth", depth as f64)],
            Hyper::Svm { c, gamma } => vec![("c", c), ("gamma", gamma)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// A fitted model of any class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Classifier {
    Tree(DecisionTree),
    Forest(RandomForest),
    Logistic(LogisticModel),
    Knn(KnnModel),
    Boost(BoostedClassifier),
    Svm(SvmModel),
}

impl Classifier {
    pub fn fit(x: &Matrix, y: &[i8], hyper: Hyper, seed: u64) -> Classifier {
        match hyper {
            Hyper::Tree { depth } => Classifier::Tree(DecisionTree::fit(x, y).truncated(depth)),
            Hyper::Forest { depth } => Classifier::Forest(RandomForest::fit(x, y, N_TREES, seed).truncated(depth)),
            Hyper::Logistic { lambda, l1_ratio } => Classifier::Logistic(LogisticModel::fit(x, y, lambda, l1_ratio)),
            Hyper::Knn { k } => Classifier::Knn(KnnModel::fit(x, y, k)),
            Hyper::Boost { depth } => Classifier::Boost(BoostedClassifier::fit(x, y, depth)),
            Hyper::Svm { c, gamma } => Classifier::Svm(SvmModel::fit(x, y, c, gamma)),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        match self {
            Classifier::Tree(m) => m.predict_row(x),
            Classifier::Forest(m) => m.predict_row(x),
            Classifier::Logistic(m) => m.predict_row(x),
            Classifier::Knn(m) => m.predict_row(x),
            Classifier::Boost(m) => m.predict_row(x),
            Classifier::Svm(m) => m.predict_row(x),
        }
    }
}

/// Outcome of the grid search for one model class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub model_class: ModelClass,
    pub hyper: Hyper,
    pub cv_score: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedClassifier {
    pub model_class: ModelClass,
    pub model: Classifier,
    pub chosen_hyperparameters: BTreeMap<String, f64>,
    pub cv_f1: f64,
    pub n_features: usize,
}

impl TunedClassifier {
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        if x.len() != self.n_features {
            return Err(CiamsError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.model.predict_row(x))
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<i8>> {
        if x.nrows() > 0 && x.ncols() != self.n_features {
            return Err(CiamsError::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(x.rows_iter().map(|r| self.model.predict_row(r)).collect())
    }
}

fn labels_of(y: &[i8], rows: &[usize]) -> Vec<i8> {
    rows.iter().map(|&r| y[r]).collect()
}

/// Mean fold score for each candidate; `predict(fold, candidate, row)`.
struct Scores {
    sums: Vec<f64>,
    folds: usize,
}

impl Scores {
    fn new(n: usize) -> Scores {
        Scores {
            sums: vec![0.0; n],
            folds: 0,
        }
    }

    /// First candidate with the highest mean; candidates are ordered from
    /// lowest to highest capacity so ties favour the simpler model.
    fn best(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &s) in self.sums.iter().enumerate() {
            let m = s / self.folds as f64;
            if m > best.1 {
                best = (i, m);
            }
        }
        best
    }
}

fn tune_tree(x: &Matrix, y: &[i8], folds: &[Fold], metric: Metric) -> (Hyper, f64) {
    let trees: Vec<Vec<CartNode>> = folds.iter().map(|f| grow(x, y, &f.train, None)).collect();
    let dmax = trees.iter().map(|t| nodes_depth(t)).max().unwrap_or(0).max(1);
    let mut scores = Scores::new(dmax);
    let mut path = Vec::new();
    for (f, t) in folds.iter().zip(&trees) {
        let truth = labels_of(y, &f.valid);
        let paths: Vec<Vec<i8>> = f
            .valid
            .iter()
            .map(|&r| {
                path_labels(t, x.row(r), &mut path);
                path.clone()
            })
            .collect();
        for d in 1..=dmax {
            let pred: Vec<i8> = paths.iter().map(|p| p[d.min(p.len() - 1)]).collect();
            scores.sums[d - 1] += metric.score(&truth, &pred);
        }
        scores.folds += 1;
    }
    let (i, s) = scores.best();
    (Hyper::Tree { depth: i + 1 }, s)
}

fn tune_forest(x: &Matrix, y: &[i8], folds: &[Fold], metric: Metric, seed: u64) -> (Hyper, f64) {
    let forests: Vec<RandomForest> = folds
        .iter()
        .enumerate()
        .map(|(i, f)| RandomForest::fit_rows(x, y, &f.train, N_TREES, seed::derive(seed, i as u64)))
        .collect();
    let dmax = forests.iter().map(RandomForest::full_depth).max().unwrap_or(0).max(1);
    let mut scores = Scores::new(dmax);
    let mut votes = Vec::new();
    for (f, forest) in folds.iter().zip(&forests) {
        let truth = labels_of(y, &f.valid);
        let all: Vec<Vec<i64>> = f
            .valid
            .iter()
            .map(|&r| {
                forest.depth_votes(x.row(r), dmax, &mut votes);
                votes.clone()
            })
            .collect();
        for d in 1..=dmax {
            let pred: Vec<i8> = all.iter().map(|v| if v[d] >= 0 { 1 } else { -1 }).collect();
            scores.sums[d - 1] += metric.score(&truth, &pred);
        }
        scores.folds += 1;
    }
    let (i, s) = scores.best();
    (Hyper::Forest { depth: i + 1 }, s)
}

fn tune_logistic(x: &Matrix, y: &[i8], folds: &[Fold], metric: Metric) -> (Hyper, f64) {
    // candidate order: strongest penalty first, then by mix
    let grid: Vec<(f64, f64)> = LR_STRENGTHS
        .iter()
        .flat_map(|&l| LR_L1_RATIOS.iter().map(move |&m| (l, m)))
        .collect();
    let mut scores = Scores::new(grid.len());
    for f in folds {
        let xt = x.select_rows(&f.train);
        let yt = labels_of(y, &f.train);
        let truth = labels_of(y, &f.valid);
        for &mix in &LR_L1_RATIOS {
            let mut warm: Option<LogisticModel> = None;
            for &lambda in &LR_STRENGTHS {
                let (m, _) = LogisticModel::fit_from(&xt, &yt, lambda, mix, warm.as_ref());
                let pred: Vec<i8> = f.valid.iter().map(|&r| m.predict_row(x.row(r))).collect();
                let i = grid.iter().position(|&g| g == (lambda, mix)).expect("grid point");
                scores.sums[i] += metric.score(&truth, &pred);
                warm = Some(m);
            }
        }
        scores.folds += 1;
    }
    let (i, s) = scores.best();
    (
        Hyper::Logistic {
            lambda: grid[i].0,
            l1_ratio: grid[i].1,
        },
        s,
    )
}

fn tune_knn(x: &Matrix, y: &[i8], folds: &[Fold], metric: Metric) -> (Hyper, f64) {
    let k = imbalance_k(y);
    let mut scores = Scores::new(1);
    for f in folds {
        let m = KnnModel::fit(&x.select_rows(&f.train), &labels_of(y, &f.train), k);
        let pred: Vec<i8> = f.valid.iter().map(|&r| m.predict_row(x.row(r))).collect();
        scores.sums[0] += metric.score(&labels_of(y, &f.valid), &pred);
        scores.folds += 1;
    }
    (Hyper::Knn { k }, scores.best().1)
}

fn tune_boost(x: &Matrix, y: &[i8], folds: &[Fold], metric: Metric) -> (Hyper, f64) {
    let sorted: Vec<SortedColumns> = folds.iter().map(|f| SortedColumns::new(x, &f.train)).collect();
    let mut scores = Scores::new(BOOST_DEPTHS.len());
    scores.folds = folds.len();
    let mut saturated: Option<f64> = None;
    for (i, &depth) in BOOST_DEPTHS.iter().enumerate() {
        if let Some(s) = saturated {
            // no tree reached the previous limit: deeper limits give the same models
            scores.sums[i] = s;
            continue;
        }
        let mut realized = 0;
        for (f, cols) in folds.iter().zip(&sorted) {
            let m = BoostedClassifier::fit_rows(x, y, &f.train, cols, depth);
            realized = realized.max(m.realized_depth());
            let pred: Vec<i8> = f.valid.iter().map(|&r| m.predict_row(x.row(r))).collect();
            scores.sums[i] += metric.score(&labels_of(y, &f.valid), &pred);
        }
        if realized < depth {
            saturated = Some(scores.sums[i]);
        }
    }
    let (i, s) = scores.best();
    (Hyper::Boost { depth: BOOST_DEPTHS[i] }, s)
}

fn tune_svm(x: &Matrix, y: &[i8], folds: &[Fold], metric: Metric) -> (Hyper, f64) {
    let gamma = default_gamma(x);
    let full = svm::gram_matrix(x, gamma);
    let mut scores = Scores::new(SVM_C.len());
    for f in folds {
        let gram = svm::Gram::new(x, &f.train, gamma, full.as_deref());
        let truth = labels_of(y, &f.valid);
        for (i, &c) in SVM_C.iter().enumerate() {
            let m = SvmModel::fit_gram(x, y, &f.train, &gram, c, gamma);
            let pred: Vec<i8> = f.valid.iter().map(|&r| m.predict_row(x.row(r))).collect();
            scores.sums[i] += metric.score(&truth, &pred);
        }
        scores.folds += 1;
    }
    let (i, s) = scores.best();
    (Hyper::Svm { c: SVM_C[i], gamma }, s)
}

fn check_inputs(x: &Matrix, y: &[i8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(CiamsError::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.ncols() == 0 {
        return Err(CiamsError::InvalidInput("dataset has no feature columns".into()));
    }
    if !x.is_finite() {
        return Err(CiamsError::InvalidInput("non-finite features".into()));
    }
    Ok(())
}

/// Grid search by stratified cross-validation, without a final refit.
pub fn tune(c: ModelClass, x: &Matrix, y: &[i8], folds: usize, seed: u64, metric: Metric) -> Result<Tuning> {
    check_inputs(x, y)?;
    let k = effective_folds(y, folds)?;
    let split = stratified_folds(y, k, seed::derive(seed, 0xf01d));
    let fseed = seed::derive(seed, c.index() as u64);
    let (hyper, cv_score) = match c {
        ModelClass::DecisionTree => tune_tree(x, y, &split, metric),
        ModelClass::RandomForest => tune_forest(x, y, &split, metric, fseed),
        ModelClass::LogisticRegression => tune_logistic(x, y, &split, metric),
        ModelClass::Knn => tune_knn(x, y, &split, metric),
        ModelClass::XgBoost => tune_boost(x, y, &split, metric),
        ModelClass::Svm => tune_svm(x, y, &split, metric),
    };
    Ok(Tuning {
        model_class: c,
        hyper,
        cv_score,
        folds: k,
    })
}

/// Tunes on `d` and refits the winning configuration on all of `d`.
pub fn fit_tuned(c: ModelClass, d: &Dataset, folds: usize, seed: u64) -> Result<TunedClassifier> {
    fit_tuned_with(c, &d.features, &d.labels, folds, seed, Metric::F1)
}

pub fn fit_tuned_with(
    c: ModelClass,
    x: &Matrix,
    y: &[i8],
    folds: usize,
    seed: u64,
    metric: Metric,
) -> Result<TunedClassifier> {
    let t = tune(c, x, y, folds, seed, metric)?;
    let model = Classifier::fit(x, y, t.hyper, seed::derive(seed, 0xf17));
    Ok(TunedClassifier {
        model_class: c,
        model,
        chosen_hyperparameters: t.hyper.to_map(),
        cv_f1: t.cv_score,
        n_features: x.ncols(),
    })
}
