//! `key=value` configuration shared by the CLI, the service and the library
//! entry points. Blank lines and lines starting with `#` are ignored.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterMethod;
use crate::error::{CiamsError, Result};
use crate::fitness::FitnessMetric;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Oversampling constant of the subsample-count rule.
    pub alpha: usize,
    /// Mean-impute blank or non-numeric feature cells instead of rejecting them.
    pub impute: bool,
    pub seed: u64,
    /// Active clustering methods, always kept in canonical order.
    pub methods: Vec<ClusterMethod>,
    pub k: usize,
    pub hdbscan_min_cluster_size_fraction: f64,
    /// Folds for classifier tuning inside the fitness oracle.
    pub fitness_folds: usize,
    pub metric: FitnessMetric,
    /// Folds for mapper hyperparameter tuning (grouped by parent dataset).
    pub mapper_folds: usize,
    pub mapper_depth_grid: Vec<usize>,
    pub folds: usize,
    pub repeats: usize,
    pub hotelling_alpha: f64,
    pub session_ttl_secs: u64,
    pub max_body_bytes: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: 5,
            impute: false,
            seed: DEFAULT_SEED,
            methods: ClusterMethod::ALL.to_vec(),
            k: 2,
            hdbscan_min_cluster_size_fraction: 0.01,
            fitness_folds: 5,
            metric: FitnessMetric::F1,
            mapper_folds: 3,
            mapper_depth_grid: vec![2, 3, 4, 6],
            folds: 6,
            repeats: 2,
            hotelling_alpha: 0.05,
            session_ttl_secs: 3600,
            max_body_bytes: 16 * 1024 * 1024,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CiamsError::Config(format!("invalid value '{v}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CiamsError::io(path, e))?;
        let mut cfg = Config::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CiamsError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = parse(key, v)?,
            "impute" => self.impute = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "clustering.methods" => {
                let mut methods: Vec<ClusterMethod> = parse_list(key, v)?;
                methods.sort();
                methods.dedup();
                if methods.is_empty() {
                    return Err(CiamsError::Config("clustering.methods is empty".into()));
                }
                self.methods = methods;
            }
            "clustering.k" => self.k = parse(key, v)?,
            "hdbscan.min_cluster_size_fraction" => {
                self.hdbscan_min_cluster_size_fraction = parse(key, v)?
            }
            "fitness.folds" => self.fitness_folds = parse(key, v)?,
            "fitness.metric" => self.metric = parse(key, v)?,
            "mapper.folds" => self.mapper_folds = parse(key, v)?,
            "mapper.depth_grid" => self.mapper_depth_grid = parse_list(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "hotelling.alpha" => self.hotelling_alpha = parse(key, v)?,
            "service.session_ttl_secs" => self.session_ttl_secs = parse(key, v)?,
            "service.max_body_bytes" => self.max_body_bytes = parse(key, v)?,
            _ => return Err(CiamsError::Config(format!("unknown key '{key}'"))),
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CiamsError::Config(m.to_string()));
        if self.alpha == 0 {
            return bad("alpha must be positive");
        }
        if self.k == 0 {
            return bad("clustering.k must be positive");
        }
        if !(self.hdbscan_min_cluster_size_fraction > 0.0
            && self.hdbscan_min_cluster_size_fraction < 1.0)
        {
            return bad("hdbscan.min_cluster_size_fraction must be in (0,1)");
        }
        if self.fitness_folds < 2 || self.mapper_folds < 2 || self.folds < 2 {
            return bad("fold counts must be at least 2");
        }
        if self.mapper_depth_grid.is_empty() {
            return bad("mapper.depth_grid is empty");
        }
        if !(self.hotelling_alpha > 0.0 && self.hotelling_alpha < 1.0) {
            return bad("hotelling.alpha must be in (0,1)");
        }
        Ok(())
    }

    /// Applies `CIAMS_SEED` if set.
    pub fn with_env_seed(mut self) -> Result<Config> {
        if let Ok(v) = std::env::var("CIAMS_SEED") {
            self.seed = parse("CIAMS_SEED", v.trim())?;
        }
        Ok(self)
    }

    pub fn cluster_config(&self) -> crate::cluster::ClusterConfig {
        crate::cluster::ClusterConfig {
            k: self.k,
            min_cluster_size_fraction: self.hdbscan_min_cluster_size_fraction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_lines() {
        let mut c = Config::default();
        c.apply_str("# comment\nalpha = 3\n\nclustering.methods=hdbscan,kmeans\nimpute=true\n")
            .unwrap();
        assert_eq!(c.alpha, 3);
        assert!(c.impute);
        assert_eq!(c.methods, vec![ClusterMethod::KMeans, ClusterMethod::Hdbscan]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = Config::default();
        assert!(c.apply_str("nope=1").is_err());
        assert!(c.apply_str("alpha=x").is_err());
        assert!(c.apply_str("alpha=0").is_err());
        assert!(c.apply_str("clustering.methods=kmeans,dbscan").is_err());
    }
}
