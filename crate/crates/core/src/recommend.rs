//! Ranking model classes for a new dataset, and the AutoML flow built on it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::{draw_subsamples, subsample_size, Dataset, Standardizer, Subsample};
use crate::error::{CiamsError, Result};
use crate::fitness::FitnessVector;
use crate::indices::{index_vector, methods_from_schema};
use crate::learners::{fit_tuned_with, ModelClass, TunedClassifier};
use crate::mapper::MapperBundle;
use crate::matrix::Matrix;
use crate::seed;
use crate::stats::hotelling_t2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleShot,
    #[default]
    Subsampled,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SingleShot => "single-shot",
            Mode::Subsampled => "subsampled",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = CiamsError;

    fn from_str(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "single-shot" | "singleshot" | "single" => Ok(Mode::SingleShot),
            "subsampled" | "subsamples" => Ok(Mode::Subsampled),
            _ => Err(CiamsError::InvalidInput(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub rank: usize,
    pub model_class: ModelClass,
    pub predicted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub mode: Mode,
    pub ranked: Vec<RankedClass>,
    pub n_subsamples_used: usize,
    pub n_subsamples_rejected: usize,
    /// Every subsample failed the representativeness filter and all were kept.
    pub filter_fallback: bool,
    /// Per-subsample predictions behind the average, in draw order.
    #[serde(skip)]
    pub per_subsample: Vec<FitnessVector>,
}

impl Recommendation {
    pub fn predicted(&self) -> FitnessVector {
        let mut scores = [0.0; 6];
        for r in &self.ranked {
            scores[r.model_class.index()] = r.predicted_f1;
        }
        FitnessVector { scores }
    }
}

/// Classes sorted by descending score; ties keep the fixed class order.
pub fn rank(f: &FitnessVector) -> Vec<RankedClass> {
    let mut order: Vec<ModelClass> = ModelClass::ALL.to_vec();
    order.sort_by(|a, b| f.get(*b).total_cmp(&f.get(*a)).then(a.cmp(b)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, c)| RankedClass {
            rank: i + 1,
            model_class: c,
            predicted_f1: f.get(c),
        })
        .collect()
}

pub fn top_k(rec: &Recommendation, k: usize) -> Result<Vec<ModelClass>> {
    if !(1..=rec.ranked.len()).contains(&k) {
        return Err(CiamsError::InvalidInput(format!(
            "k must be between 1 and {}",
            rec.ranked.len()
        )));
    }
    Ok(rec.ranked[..k].iter().map(|r| r.model_class).collect())
}

fn check_dataset(bundle: &MapperBundle, d: &Dataset, cfg: &Config) -> Result<()> {
    if !d.has_both_classes() {
        return Err(CiamsError::NotBinary(1));
    }
    if d.n() < cfg.k {
        return Err(CiamsError::InvalidInput(format!(
            "{} rows cannot form {} clusters",
            d.n(),
            cfg.k
        )));
    }
    methods_from_schema(&bundle.schema)?;
    Ok(())
}

/// Indices of the whole dataset, one prediction.
pub fn recommend_single_shot(bundle: &MapperBundle, d: &Dataset, cfg: &Config, seed: u64) -> Result<Recommendation> {
    check_dataset(bundle, d, cfg)?;
    let methods = methods_from_schema(&bundle.schema)?;
    let s = Subsample::whole(d);
    let iv = index_vector(&s, &methods, &cfg.cluster_config(), seed::derive(seed, 20));
    let f = bundle.predict_fitness(&iv)?;
    Ok(Recommendation {
        mode: Mode::SingleShot,
        ranked: rank(&f),
        n_subsamples_used: 1,
        n_subsamples_rejected: 0,
        filter_fallback: false,
        per_subsample: vec![f],
    })
}

/// Which subsamples the representativeness filter rejects at `alpha`.
pub fn hotelling_filter(d: &Dataset, subs: &[Subsample], alpha: f64) -> Vec<bool> {
    let parent = Standardizer::fit(&d.features)
        .transform(&d.features)
        .expect("same width");
    subs.iter()
        .map(|s| {
            let rows = parent.select_rows(&s.row_indices);
            match hotelling_t2(&rows, &parent, alpha) {
                Ok(r) => r.reject,
                Err(e) => {
                    log::debug!("{}: hotelling test skipped: {}", s.reference(), e);
                    false
                }
            }
        })
        .collect()
}

/// Bootstrap subsamples, representativeness filter, averaged predictions.
pub fn recommend_subsampled(bundle: &MapperBundle, d: &Dataset, cfg: &Config, seed: u64) -> Result<Recommendation> {
    check_dataset(bundle, d, cfg)?;
    let h = subsample_size(d.n());
    if d.n() < h {
        return Err(CiamsError::InvalidInput(format!(
            "{} rows are fewer than the subsample size {h}; use single-shot mode",
            d.n()
        )));
    }
    let methods = methods_from_schema(&bundle.schema)?;
    let subs = draw_subsamples(d, cfg.alpha, seed::derive(seed, 10))?;
    let rejected = hotelling_filter(d, &subs, cfg.hotelling_alpha);
    let n_rejected = rejected.iter().filter(|&&r| r).count();
    let fallback = n_rejected == subs.len();
    if fallback {
        log::warn!("{}: every subsample failed the Hotelling filter; keeping all", d.name);
    }
    let keep: Vec<&Subsample> = subs
        .iter()
        .zip(&rejected)
        .filter(|(_, &r)| fallback || !r)
        .map(|(s, _)| s)
        .collect();
    let ccfg = cfg.cluster_config();
    let per_subsample: Vec<FitnessVector> = keep
        .par_iter()
        .map(|s| {
            let iv = index_vector(s, &methods, &ccfg, seed::derive2(seed, 11, s.index as u64));
            bundle.predict_fitness(&iv)
        })
        .collect::<Result<_>>()?;
    let mean = FitnessVector::mean(&per_subsample).expect("at least one subsample");
    Ok(Recommendation {
        mode: Mode::Subsampled,
        ranked: rank(&mean),
        n_subsamples_used: keep.len(),
        n_subsamples_rejected: if fallback { 0 } else { n_rejected },
        filter_fallback: fallback,
        per_subsample,
    })
}

pub fn recommend(bundle: &MapperBundle, d: &Dataset, mode: Mode, cfg: &Config, seed: u64) -> Result<Recommendation> {
    match mode {
        Mode::SingleShot => recommend_single_shot(bundle, d, cfg, seed),
        Mode::Subsampled => recommend_subsampled(bundle, d, cfg, seed),
    }
}

/// Chosen classifier plus the statistics needed to apply it to new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoMLModel {
    pub recommendation: Recommendation,
    pub top3: Vec<ModelClass>,
    /// Cross-validated score of each evaluated class, in top3 order.
    pub cv_scores: Vec<(ModelClass, f64)>,
    pub chosen: TunedClassifier,
    pub standardizer: Standardizer,
    pub feature_names: Vec<String>,
    pub classes: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoMLResult {
    pub chosen: ModelClass,
    pub top3: Vec<ModelClass>,
    pub cv_f1_of_chosen: f64,
    pub cv_scores: Vec<(ModelClass, f64)>,
    pub predictions: Vec<i8>,
}

/// Index of the best score; the earliest wins ties.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Recommends on `labeled`, cross-validates only the top three classes and
/// keeps the best of them.
pub fn automl_fit(bundle: &MapperBundle, labeled: &Dataset, cfg: &Config, seed: u64) -> Result<AutoMLModel> {
    let mode = if labeled.n() >= subsample_size(labeled.n()) {
        Mode::Subsampled
    } else {
        log::warn!("{}: too few rows for subsampling, using single-shot mode", labeled.name);
        Mode::SingleShot
    };
    let rec = recommend(bundle, labeled, mode, cfg, seed::derive(seed, 30))?;
    let top3 = top_k(&rec, 3)?;
    let standardizer = Standardizer::fit(&labeled.features);
    let x = standardizer.transform(&labeled.features)?;
    let fitted: Vec<TunedClassifier> = top3
        .par_iter()
        .map(|&c| fit_tuned_with(c, &x, &labeled.labels, cfg.fitness_folds, seed::derive(seed, 31), cfg.metric))
        .collect::<Result<_>>()?;
    let cv: Vec<f64> = fitted.iter().map(|t| t.cv_f1).collect();
    let best = argmax_first(&cv);
    Ok(AutoMLModel {
        cv_scores: top3.iter().copied().zip(cv).collect(),
        top3,
        chosen: fitted.into_iter().nth(best).expect("three fits"),
        recommendation: rec,
        standardizer,
        feature_names: labeled.feature_names.clone(),
        classes: labeled.classes.clone(),
    })
}

impl AutoMLModel {
    /// Labels for raw (unstandardized) rows.
    pub fn predict(&self, unlabeled: &Matrix) -> Result<Vec<i8>> {
        if unlabeled.nrows() == 0 {
            return Ok(Vec::new());
        }
        let x = self.standardizer.transform(unlabeled)?;
        self.chosen.predict_matrix(&x)
    }

    pub fn label_symbol(&self, label: i8) -> &str {
        if label == crate::data::POSITIVE {
            &self.classes[1]
        } else {
            &self.classes[0]
        }
    }

    pub fn result(&self, predictions: Vec<i8>) -> AutoMLResult {
        AutoMLResult {
            chosen: self.chosen.model_class,
            top3: self.top3.clone(),
            cv_f1_of_chosen: self.chosen.cv_f1,
            cv_scores: self.cv_scores.clone(),
            predictions,
        }
    }
}

pub fn automl_fit_predict(
    bundle: &MapperBundle,
    labeled: &Dataset,
    unlabeled: &Matrix,
    cfg: &Config,
    seed: u64,
) -> Result<AutoMLResult> {
    let model = automl_fit(bundle, labeled, cfg, seed)?;
    let predictions = model.predict(unlabeled)?;
    Ok(model.result(predictions))
}
