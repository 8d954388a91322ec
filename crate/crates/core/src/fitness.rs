//! The model-fitness oracle and the regression training table.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::{draw_subsamples, stratified_split, Dataset, SplitSpec, Subsample};
use crate::error::{CiamsError, Result};
use crate::indices::{index_vector, IndexVector};
use crate::learners::{tune, ModelClass};
use crate::seed;

pub use crate::stats::Metric as FitnessMetric;

/// Share of every corpus dataset used as its training partition.
pub const TRAIN_FRACTION: f64 = 0.7;

/// Best cross-validated score per model class, in [`ModelClass::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessVector {
    pub scores: [f64; 6],
}

impl FitnessVector {
    pub fn get(&self, c: ModelClass) -> f64 {
        self.scores[c.index()]
    }

    /// Element-wise mean of several vectors.
    pub fn mean(vs: &[FitnessVector]) -> Option<FitnessVector> {
        if vs.is_empty() {
            return None;
        }
        let mut scores = [0.0; 6];
        for v in vs {
            for (s, x) in scores.iter_mut().zip(v.scores) {
                *s += x;
            }
        }
        scores.iter_mut().for_each(|s| *s /= vs.len() as f64);
        Some(FitnessVector { scores })
    }
}

/// Tuned cross-validated score of every model class on one subsample.
pub fn model_fitness(s: &Subsample, folds: usize, seed: u64, metric: FitnessMetric) -> Result<FitnessVector> {
    let mut scores = [0.0; 6];
    for c in ModelClass::ALL {
        scores[c.index()] = tune(c, &s.features, &s.labels, folds, seed, metric)?.cv_score;
    }
    Ok(FitnessVector { scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub indices: IndexVector,
    pub fitness: FitnessVector,
    pub subsample_ref: String,
    pub parent_name: String,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTable {
    pub schema: Vec<String>,
    pub rows: Vec<TrainingRow>,
}

/// Stable per-dataset seed, independent of the dataset's corpus position.
pub fn dataset_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(seed::mix64(seed), |h, b| seed::mix64(h ^ u64::from(b)))
}

struct Job {
    sub: Subsample,
    parent: String,
    partition: Partition,
    seed: u64,
}

fn jobs_for(d: &Dataset, cfg: &Config, seed: u64) -> Result<Vec<Job>> {
    let ds = dataset_seed(seed, &d.name);
    let (train, test) = stratified_split(
        d,
        &SplitSpec {
            train_fraction: TRAIN_FRACTION,
            seed: seed::derive(ds, 1),
            stratified: true,
        },
    )?;
    let mut jobs = Vec::new();
    for (pi, (part, partition)) in [(train, Partition::Train), (test, Partition::Test)].into_iter().enumerate() {
        let mut part = part;
        part.name = format!("{}/{}", d.name, partition.as_str());
        let pseed = seed::derive2(ds, 2, pi as u64);
        for sub in draw_subsamples(&part, cfg.alpha, pseed)? {
            let s = seed::derive2(pseed, 3, sub.index as u64);
            jobs.push(Job {
                sub,
                parent: d.name.clone(),
                partition,
                seed: s,
            });
        }
    }
    Ok(jobs)
}

fn run_job(job: Job, cfg: &Config) -> Option<TrainingRow> {
    let indices = index_vector(&job.sub, &cfg.methods, &cfg.cluster_config(), seed::derive(job.seed, 1));
    match model_fitness(&job.sub, cfg.fitness_folds, seed::derive(job.seed, 2), cfg.metric) {
        Ok(fitness) => Some(TrainingRow {
            subsample_ref: job.sub.reference(),
            indices,
            fitness,
            parent_name: job.parent,
            partition: job.partition,
        }),
        Err(e) => {
            log::warn!("{}: skipping subsample: {}", job.sub.reference(), e);
            None
        }
    }
}

/// Training rows contributed by one dataset; depends only on the dataset,
/// the configuration and the seed.
pub fn dataset_rows(d: &Dataset, cfg: &Config, seed: u64) -> Result<Vec<TrainingRow>> {
    Ok(build_training_table(std::slice::from_ref(d), cfg, seed)?.rows)
}

/// Splits every dataset 70:30, subsamples both parts and computes index and
/// fitness vectors for every subsample.
pub fn build_training_table(corpus: &[Dataset], cfg: &Config, seed: u64) -> Result<TrainingTable> {
    if corpus.is_empty() {
        return Err(CiamsError::EmptyCorpus);
    }
    let mut jobs = Vec::new();
    for d in corpus {
        if !d.has_both_classes() {
            return Err(CiamsError::NotBinary(1));
        }
        jobs.extend(jobs_for(d, cfg, seed)?);
    }
    log::info!("computing {} subsample rows", jobs.len());
    let rows: Vec<TrainingRow> = jobs.into_par_iter().filter_map(|j| run_job(j, cfg)).collect();
    Ok(TrainingTable {
        schema: crate::indices::schema_for(&cfg.methods),
        rows,
    })
}

impl TrainingTable {
    pub fn from_rows(rows: Vec<TrainingRow>) -> Result<TrainingTable> {
        let schema = rows.first().map(|r| r.indices.schema.clone()).unwrap_or_default();
        if rows.iter().any(|r| r.indices.schema != schema) {
            return Err(CiamsError::SchemaMismatch("rows carry different schemas".into()));
        }
        Ok(TrainingTable { schema, rows })
    }

    pub fn parents(&self) -> Vec<String> {
        let mut p: Vec<String> = self.rows.iter().map(|r| r.parent_name.clone()).collect();
        p.sort();
        p.dedup();
        p
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.schema.clone();
        header.extend(ModelClass::ALL.iter().map(|c| format!("fitness:{c}")));
        header.extend(["subsample_ref", "parent_name", "partition"].map(String::from));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.indices.values.iter().map(|v| v.to_string()).collect();
            rec.extend(r.fitness.scores.iter().map(|v| v.to_string()));
            rec.push(r.subsample_ref.clone());
            rec.push(r.parent_name.clone());
            rec.push(r.partition.as_str().into());
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| CiamsError::Internal(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TrainingTable> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        if header.len() < 9 {
            return Err(CiamsError::SchemaMismatch("training table header too short".into()));
        }
        let q = header.len() - 9;
        let schema = header[..q].to_vec();
        crate::indices::methods_from_schema(&schema)?;
        let num = |s: &str, row: usize, col: usize| -> Result<f64> {
            s.trim().parse().map_err(|_| CiamsError::NonNumericCell { column: header[col].clone(), row })
        };
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(CiamsError::SchemaMismatch(format!("row {i} has {} fields", rec.len())));
            }
            let values = (0..q).map(|j| num(&rec[j], i, j)).collect::<Result<Vec<f64>>>()?;
            let mut scores = [0.0; 6];
            for (k, s) in scores.iter_mut().enumerate() {
                *s = num(&rec[q + k], i, q + k)?;
            }
            let partition = match &rec[q + 8] {
                "train" => Partition::Train,
                "test" => Partition::Test,
                other => return Err(CiamsError::InvalidInput(format!("unknown partition {other:?}"))),
            };
            rows.push(TrainingRow {
                indices: IndexVector {
                    values,
                    schema: schema.clone(),
                    subsample_ref: rec[q + 6].to_string(),
                },
                fitness: FitnessVector { scores },
                subsample_ref: rec[q + 6].to_string(),
                parent_name: rec[q + 7].to_string(),
                partition,
            });
        }
        Ok(TrainingTable { schema, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| CiamsError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<TrainingTable> {
        let f = std::fs::File::open(path).map_err(|e| CiamsError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::subsample_count;
    use crate::matrix::Matrix;

    fn noisy(n: usize, seed: u64, separable: bool) -> Dataset {
        use rand::Rng;
        let mut rng = seed::rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l: i8 = if i % 2 == 0 { 1 } else { -1 };
            let shift = if separable { 4.0 * f64::from(l) } else { 0.0 };
            rows.push(vec![shift + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            labels.push(l);
        }
        Dataset::new(format!("synthetic{seed}"), Matrix::from_rows(&rows), labels).unwrap()
    }

    #[test]
    fn separable_subsample_scores_high() {
        let s = Subsample::whole(&noisy(100, 1, true));
        let f = model_fitness(&s, 5, 3, FitnessMetric::F1).unwrap();
        assert!(f.scores.iter().all(|&v| v >= 0.95), "{f:?}");
        assert_eq!(f, model_fitness(&s, 5, 3, FitnessMetric::F1).unwrap());
    }

    #[test]
    fn row_count_follows_subsample_rule() {
        let cfg = Config {
            methods: vec![crate::cluster::ClusterMethod::KMeans],
            ..Config::default()
        };
        let corpus = [noisy(150, 2, true), noisy(120, 3, false)];
        let t = build_training_table(&corpus, &cfg, 5).unwrap();
        // 70:30 splits of 150 and 120 rows
        let expected: usize = [105, 45, 84, 36].iter().map(|&n| subsample_count(n, 100, 5)).sum();
        assert_eq!(t.rows.len(), expected);
        assert!(t.rows.iter().all(|r| r.indices.schema == t.schema && t.schema.len() == 40));
        assert_eq!(t.parents(), vec!["synthetic2".to_string(), "synthetic3".to_string()]);

        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TrainingTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = build_training_table(&[], &Config::default(), 0).unwrap_err();
        assert!(err.to_string().contains("empty corpus"));
    }

    #[test]
    fn fitness_mean() {
        let a = FitnessVector { scores: [0.6, 0.8, 0.5, 0.5, 0.5, 0.5] };
        let b = FitnessVector { scores: [0.8, 0.6, 0.5, 0.5, 0.5, 0.5] };
        let m = FitnessVector::mean(&[a, b]).unwrap();
        assert!((m.scores[0] - 0.7).abs() < 1e-12 && (m.scores[1] - 0.7).abs() < 1e-12);
    }
}
