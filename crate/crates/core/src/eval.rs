//! Dataset-level cross-validation of the whole pipeline and feature
//! importance of a fitted bundle.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::{load_corpus, Dataset, LoadOptions};
use crate::error::{CiamsError, Result};
use crate::fitness::{build_training_table, FitnessVector, TrainingRow, TrainingTable};
use crate::learners::ModelClass;
use crate::mapper::{fit_mappers, MapperBundle};
use crate::recommend::rank;
use crate::seed;
use crate::stats::{mae, meandiff_test, r2_score, spearman, MeanDiffTestResult};

pub const PASS_DELTA: f64 = 0.1;
pub const PASS_ALPHA: f64 = 0.05;

/// Outcome for one held-out dataset in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEval {
    pub dataset: String,
    pub repeat: usize,
    pub fold: usize,
    pub n_rows: usize,
    /// Mean of the exhaustive fitness vectors over the dataset's subsamples.
    pub true_fitness: [f64; 6],
    /// Mean of the predicted fitness vectors over the same subsamples.
    pub predicted_fitness: [f64; 6],
    pub true_top3: Vec<ModelClass>,
    pub predicted_top3: Vec<ModelClass>,
    pub top1_in_top3: bool,
    pub mae: [f64; 6],
    pub meandiff: Vec<MeanDiffTestResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Pooled over every held-out subsample row; 0 when the truth is constant.
    pub per_class_r2: [f64; 6],
    pub per_class_mae: [MeanStd; 6],
    /// Datasets whose per-class test passes.
    pub pass_counts: [usize; 6],
    /// Row: position in the true top3, column: position in the predicted top3.
    pub rank_confusion: [[usize; 3]; 3],
    pub top1_in_top3_recall: f64,
    pub n_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub methods: Vec<String>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub alpha: usize,
    pub metric: String,
    pub schema_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: EvalSettings,
    pub aggregate: Summary,
    pub per_repeat: Vec<Summary>,
    pub evaluations: Vec<DatasetEval>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CiamsError::Internal(e.to_string()))
    }
}

/// Evaluates every dataset in `dir`; see [`evaluate`].
pub fn evaluate_corpus(dir: &Path, cfg: &Config) -> Result<EvalReport> {
    let corpus = load_corpus(
        dir,
        &LoadOptions {
            impute: cfg.impute,
            ..LoadOptions::default()
        },
    )?;
    evaluate(&corpus, cfg)
}

/// Dataset-level folds: datasets are shuffled per repeat and dealt round
/// robin, so `folds == corpus.len()` is leave-one-dataset-out.
pub fn dataset_folds(n_datasets: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_datasets).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0; n_datasets];
    for (pos, &d) in order.iter().enumerate() {
        fold_of[d] = pos % folds;
    }
    fold_of
}

pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    if repeat == 0 {
        seed
    } else {
        seed::derive(seed, 0xe7a1 + repeat as u64)
    }
}

/// Repeated dataset-level cross-validation: train mappers on the rows of
/// the training datasets, predict every subsample of each held-out dataset
/// and compare with its exhaustive fitness.
pub fn evaluate(corpus: &[Dataset], cfg: &Config) -> Result<EvalReport> {
    evaluate_with_tables(corpus, cfg).map(|r| r.0)
}

/// As [`evaluate`], also returning the training table built for each repeat.
pub fn evaluate_with_tables(corpus: &[Dataset], cfg: &Config) -> Result<(EvalReport, Vec<TrainingTable>)> {
    cfg.validate()?;
    if corpus.len() < cfg.folds {
        return Err(CiamsError::InvalidInput(format!(
            "corpus has {} datasets, fewer than {} folds",
            corpus.len(),
            cfg.folds
        )));
    }
    if cfg.repeats == 0 {
        return Err(CiamsError::Config("repeats must be positive".into()));
    }
    let mut evaluations = Vec::new();
    let mut per_repeat = Vec::new();
    let mut pooled: Vec<RowPair> = Vec::new();
    let mut tables = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let rs = repeat_seed(cfg.seed, r);
        log::info!("repeat {}/{}", r + 1, cfg.repeats);
        let table = build_training_table(corpus, cfg, rs)?;
        let names: Vec<String> = corpus.iter().map(|d| d.name.clone()).collect();
        let (evals, pairs) = cross_validate_table(&table, &names, cfg, r, rs)?;
        per_repeat.push(summarize(&evals, &pairs));
        evaluations.extend(evals);
        pooled.extend(pairs);
        tables.push(table);
    }
    let report = EvalReport {
        settings: EvalSettings {
            methods: cfg.methods.iter().map(|m| m.to_string()).collect(),
            folds: cfg.folds,
            repeats: cfg.repeats,
            seed: cfg.seed,
            alpha: cfg.alpha,
            metric: cfg.metric.as_str().to_string(),
            schema_len: crate::indices::schema_for(&cfg.methods).len(),
        },
        aggregate: summarize(&evaluations, &pooled),
        per_repeat,
        evaluations,
    };
    Ok((report, tables))
}

pub type RowPair = (FitnessVector, FitnessVector);

/// One repeat of dataset-level cross-validation over a prebuilt table.
/// `datasets` fixes the fold assignment order.
pub fn cross_validate_table(
    table: &TrainingTable,
    datasets: &[String],
    cfg: &Config,
    repeat: usize,
    rs: u64,
) -> Result<(Vec<DatasetEval>, Vec<RowPair>)> {
    let fold_of = dataset_folds(datasets.len(), cfg.folds, seed::derive(rs, 1));
    let mut evals = Vec::new();
    let mut pairs = Vec::new();
    for f in 0..cfg.folds {
        let held: Vec<&str> = datasets
            .iter()
            .zip(&fold_of)
            .filter(|(_, &k)| k == f)
            .map(|(d, _)| d.as_str())
            .collect();
        let train = TrainingTable {
            schema: table.schema.clone(),
            rows: table
                .rows
                .iter()
                .filter(|row| !held.contains(&row.parent_name.as_str()))
                .cloned()
                .collect(),
        };
        let bundle = fit_mappers(&train, cfg.mapper_folds, &cfg.mapper_depth_grid, seed::derive2(rs, 2, f as u64))?;
        for name in held {
            let rows: Vec<&TrainingRow> = table.rows.iter().filter(|row| row.parent_name == name).collect();
            if rows.is_empty() {
                log::warn!("{name}: no usable subsamples, not evaluated");
                continue;
            }
            let preds = rows
                .iter()
                .map(|row| bundle.predict_fitness(&row.indices))
                .collect::<Result<Vec<_>>>()?;
            let truth: Vec<FitnessVector> = rows.iter().map(|row| row.fitness).collect();
            pairs.extend(truth.iter().zip(&preds).map(|(t, p)| (*t, *p)));
            evals.push(dataset_eval(name, repeat, f, &truth, &preds)?);
        }
    }
    Ok((evals, pairs))
}

fn top3(f: &FitnessVector) -> Vec<ModelClass> {
    rank(f).into_iter().take(3).map(|r| r.model_class).collect()
}

/// Scores one held-out dataset from its per-subsample truth and predictions.
pub fn dataset_eval(
    name: &str,
    repeat: usize,
    fold: usize,
    truth: &[FitnessVector],
    preds: &[FitnessVector],
) -> Result<DatasetEval> {
    let t = FitnessVector::mean(truth).ok_or_else(|| CiamsError::InvalidInput("no rows".into()))?;
    let p = FitnessVector::mean(preds).ok_or_else(|| CiamsError::InvalidInput("no rows".into()))?;
    let true_top3 = top3(&t);
    let predicted_top3 = top3(&p);
    let mut maes = [0.0; 6];
    let mut meandiff = Vec::with_capacity(6);
    for c in ModelClass::ALL {
        let tc: Vec<f64> = truth.iter().map(|v| v.get(c)).collect();
        let pc: Vec<f64> = preds.iter().map(|v| v.get(c)).collect();
        maes[c.index()] = mae(&pc, &tc);
        meandiff.push(meandiff_test(&pc, &tc, PASS_DELTA, PASS_ALPHA)?);
    }
    Ok(DatasetEval {
        dataset: name.to_string(),
        repeat,
        fold,
        n_rows: truth.len(),
        true_fitness: t.scores,
        predicted_fitness: p.scores,
        top1_in_top3: predicted_top3.contains(&true_top3[0]),
        true_top3,
        predicted_top3,
        mae: maes,
        meandiff,
    })
}

pub fn summarize(evals: &[DatasetEval], pairs: &[RowPair]) -> Summary {
    let mut per_class_r2 = [0.0; 6];
    let mut per_class_mae = [MeanStd { mean: 0.0, std: 0.0 }; 6];
    let mut pass_counts = [0; 6];
    for c in ModelClass::ALL {
        let i = c.index();
        let t: Vec<f64> = pairs.iter().map(|(t, _)| t.get(c)).collect();
        let p: Vec<f64> = pairs.iter().map(|(_, p)| p.get(c)).collect();
        per_class_r2[i] = r2_score(&t, &p).unwrap_or(0.0);
        let m: Vec<f64> = evals.iter().map(|e| e.mae[i]).collect();
        per_class_mae[i] = mean_std(&m);
        pass_counts[i] = evals.iter().filter(|e| e.meandiff[i].pass).count();
    }
    let mut rank_confusion = [[0; 3]; 3];
    for e in evals {
        for (ti, c) in e.true_top3.iter().enumerate() {
            if let Some(pi) = e.predicted_top3.iter().position(|x| x == c) {
                rank_confusion[ti][pi] += 1;
            }
        }
    }
    let hits = evals.iter().filter(|e| e.top1_in_top3).count();
    Summary {
        per_class_r2,
        per_class_mae,
        pass_counts,
        rank_confusion,
        top1_in_top3_recall: if evals.is_empty() { 0.0 } else { hits as f64 / evals.len() as f64 },
        n_evaluations: evals.len(),
    }
}

fn mean_std(v: &[f64]) -> MeanStd {
    if v.is_empty() {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub total_gain: f64,
    /// Rank correlation between the feature and the mean fitness of a row.
    pub spearman: f64,
}

/// The ten features with the largest split gain summed over all six
/// regressors, with their rank correlation to fitness.
pub fn feature_importance(bundle: &MapperBundle, table: &TrainingTable) -> Result<Vec<FeatureImportance>> {
    if table.schema != bundle.schema {
        return Err(CiamsError::SchemaMismatch("table and bundle schemas differ".into()));
    }
    let q = bundle.schema.len();
    let mut gain = vec![0.0; q];
    for r in &bundle.regressors {
        for (g, v) in gain.iter_mut().zip(&r.feature_gain) {
            *g += v;
        }
    }
    let fitness: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.fitness.scores.iter().sum::<f64>() / 6.0)
        .collect();
    let mut order: Vec<usize> = (0..q).filter(|&j| gain[j] > 0.0).collect();
    order.sort_by(|&a, &b| gain[b].total_cmp(&gain[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(10)
        .map(|j| {
            let col: Vec<f64> = table.rows.iter().map(|r| r.indices.values[j]).collect();
            FeatureImportance {
                feature: bundle.schema[j].clone(),
                total_gain: gain[j],
                spearman: if table.rows.len() < 2 { 0.0 } else { spearman(&col, &fitness) },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(s: [f64; 6]) -> FitnessVector {
        FitnessVector { scores: s }
    }

    #[test]
    fn leave_one_out_folds() {
        let f = dataset_folds(6, 6, 3);
        let mut sorted = f.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5]);
        let g = dataset_folds(7, 3, 3);
        for k in 0..3 {
            let c = g.iter().filter(|&&x| x == k).count();
            assert!(c == 2 || c == 3);
        }
    }

    #[test]
    fn constant_predictions_follow_tie_break() {
        // Predicted top3 is always DecisionTree, RandomForest, LogisticRegression,
        // so the hit rate is the share of datasets whose true best is one of them.
        let bests = [0usize, 1, 2, 3, 4, 5, 1, 4];
        let evals: Vec<DatasetEval> = bests
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let mut s = [0.5; 6];
                s[b] = 0.9;
                let truth = vec![fv(s); 3];
                let preds = vec![fv([0.7; 6]); 3];
                dataset_eval(&format!("d{i}"), 0, i, &truth, &preds).unwrap()
            })
            .collect();
        let s = summarize(&evals, &[]);
        let expected = bests.iter().filter(|&&b| b < 3).count() as f64 / bests.len() as f64;
        assert_eq!(s.top1_in_top3_recall, expected);
        for row in s.rank_confusion {
            assert!(row.iter().sum::<usize>() <= evals.len());
        }
        assert_eq!(s.rank_confusion[0].iter().sum::<usize>(), 4);
    }

    #[test]
    fn pass_counts_match_the_test_outcome() {
        let truth = vec![fv([0.8; 6]), fv([0.82; 6]), fv([0.78; 6])];
        let close = vec![fv([0.81; 6]), fv([0.8; 6]), fv([0.79; 6])];
        let far = vec![fv([0.3; 6]), fv([0.31; 6]), fv([0.29; 6])];
        let a = dataset_eval("a", 0, 0, &truth, &close).unwrap();
        let b = dataset_eval("b", 0, 1, &truth, &far).unwrap();
        let s = summarize(&[a.clone(), b.clone()], &[]);
        for i in 0..6 {
            assert!(a.meandiff[i].pass && !b.meandiff[i].pass);
            assert_eq!(s.pass_counts[i], 1);
        }
        assert!((s.per_class_mae[0].mean - (a.mae[0] + b.mae[0]) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_smaller_than_folds() {
        let cfg = Config {
            folds: 6,
            ..Config::default()
        };
        assert!(evaluate(&[], &cfg).is_err());
    }
}
