//! Shared plumbing behind the CLI verbs and the HTTP handlers, so both
//! surfaces produce identical bytes for identical inputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use ciams_core::data::{read_csv, read_unlabeled_csv, Dataset, LoadOptions};
use ciams_core::error::Result as CoreResult;
use ciams_core::learners::ModelClass;
use ciams_core::mapper::MapperBundle;
use ciams_core::matrix::Matrix;
use ciams_core::recommend::{recommend, AutoMLModel, Mode, RankedClass, Recommendation};
use ciams_core::Config;

/// Defaults, then the config file, then `CIAMS_SEED`, then explicit flags.
pub fn load_config(path: Option<&Path>, seed: Option<u64>, sets: &[String]) -> anyhow::Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    cfg = cfg.with_env_seed()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    for kv in sets {
        cfg.apply_str(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_options(cfg: &Config) -> LoadOptions {
    LoadOptions {
        impute: cfg.impute,
        ..LoadOptions::default()
    }
}

pub fn parse_dataset(bytes: &[u8], name: &str, cfg: &Config) -> CoreResult<Dataset> {
    read_csv(bytes, name, &load_options(cfg))
}

pub fn parse_unlabeled(bytes: &[u8], feature_names: &[String], cfg: &Config) -> CoreResult<Matrix> {
    read_unlabeled_csv(bytes, feature_names, cfg.impute)
}

pub fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

#[derive(Debug, Serialize)]
pub struct RecommendOutput<'a> {
    pub mode: Mode,
    pub seed: u64,
    pub n_subsamples_used: usize,
    pub n_subsamples_rejected: usize,
    pub filter_fallback: bool,
    pub ranked: &'a [RankedClass],
}

pub fn run_recommend(
    bundle: &MapperBundle,
    d: &Dataset,
    mode: Mode,
    cfg: &Config,
) -> CoreResult<Recommendation> {
    recommend(bundle, d, mode, cfg, cfg.seed)
}

/// The JSON document returned by `recommend --format json` and `POST /recommend`.
pub fn recommendation_json(rec: &Recommendation, top: usize, seed: u64) -> String {
    let out = RecommendOutput {
        mode: rec.mode,
        seed,
        n_subsamples_used: rec.n_subsamples_used,
        n_subsamples_rejected: rec.n_subsamples_rejected,
        filter_fallback: rec.filter_fallback,
        ranked: &rec.ranked[..top.clamp(1, rec.ranked.len())],
    };
    let mut s = serde_json::to_string_pretty(&out).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn recommendation_table(rec: &Recommendation, top: usize) -> String {
    let mut s = format!("{:<5} {:<20} {:>12}\n", "rank", "class", "predicted_f1");
    for r in &rec.ranked[..top.clamp(1, rec.ranked.len())] {
        s.push_str(&format!("{:<5} {:<20} {:>12.4}\n", r.rank, r.model_class, r.predicted_f1));
    }
    s.push_str(&format!(
        "mode={} subsamples_used={} rejected={}{}\n",
        rec.mode,
        rec.n_subsamples_used,
        rec.n_subsamples_rejected,
        if rec.filter_fallback { " (filter fallback)" } else { "" }
    ));
    s
}

pub fn write_recommendation_csv(rec: &Recommendation, top: usize, path: &Path) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_all(b"rank,class,predicted_f1\n")?;
    for r in &rec.ranked[..top.clamp(1, rec.ranked.len())] {
        writeln!(w, "{},{},{}", r.rank, r.model_class, r.predicted_f1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions_csv(model: &AutoMLModel, preds: &[i8], path: &Path) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_all(b"prediction\n")?;
    for &p in preds {
        writeln!(w, "{}", model.label_symbol(p))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct FitSummary {
    pub chosen: ModelClass,
    pub top3: Vec<ModelClass>,
    pub cv_f1_of_chosen: f64,
    pub cv_scores: Vec<(ModelClass, f64)>,
}

impl FitSummary {
    pub fn of(model: &AutoMLModel) -> FitSummary {
        FitSummary {
            chosen: model.chosen.model_class,
            top3: model.top3.clone(),
            cv_f1_of_chosen: model.chosen.cv_f1,
            cv_scores: model.cv_scores.clone(),
        }
    }
}

/// Where `serve` keeps session files unless told otherwise.
pub fn default_sessions_dir(model: &Path) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".sessions");
    model.with_file_name(name)
}
