//! Per-class fitness regressors and the `.ciams` bundle format.
//!
//! A bundle is a text header followed by a little-endian binary payload:
//!
//! ```text
//! CIAMS-BUNDLE
//! version: 1
//! schema: kmeans:between_cluster_scatter,...
//! meta: {"corpus":[...],"seed":42,...}
//! payload-bytes: 123456
//! sha256: <hex digest of every byte above this line plus the payload>
//! <payload>
//! ```
//!
//! The version is checked before the digest so that files written by a
//! newer format are reported as such rather than as corrupt.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CiamsError, Result};
use crate::fitness::{FitnessVector, TrainingTable};
use crate::indices::IndexVector;
use crate::learners::{fit_gbt_regressor_grouped, GBTRegressor, GbtCvReport, ModelClass, RegNode, RegTree};
use crate::matrix::Matrix;
use crate::seed;

pub const BUNDLE_MAGIC: &str = "CIAMS-BUNDLE";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub corpus: Vec<String>,
    pub seed: u64,
    /// Seconds since the Unix epoch (honours `SOURCE_DATE_EPOCH`).
    pub created_unix: u64,
    pub n_rows: usize,
    /// Cross-validation outcome per model class.
    pub reports: Vec<GbtCvReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperBundle {
    pub regressors: Vec<GBTRegressor>,
    pub schema: Vec<String>,
    pub version: u32,
    pub training_meta: TrainingMeta,
}

fn created_now() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Feature matrix and per-class targets of a table.
pub fn table_matrix(table: &TrainingTable) -> (Matrix, Vec<Vec<f64>>) {
    let q = table.schema.len();
    let mut data = Vec::with_capacity(table.rows.len() * q);
    for r in &table.rows {
        data.extend_from_slice(&r.indices.values);
    }
    let x = Matrix::from_vec(table.rows.len(), q, data);
    let ys = ModelClass::ALL
        .iter()
        .map(|c| table.rows.iter().map(|r| r.fitness.get(*c)).collect())
        .collect();
    (x, ys)
}

/// Fits one boosted regressor per model class with folds grouped by
/// parent dataset.
pub fn fit_mappers(table: &TrainingTable, folds: usize, depth_grid: &[usize], seed: u64) -> Result<MapperBundle> {
    if table.rows.is_empty() {
        return Err(CiamsError::InvalidInput("training table is empty".into()));
    }
    let parents = table.parents();
    if parents.len() < 2 {
        return Err(CiamsError::InvalidInput(
            "mapper tuning needs rows from at least two parent datasets".into(),
        ));
    }
    let (x, ys) = table_matrix(table);
    let groups: Vec<String> = table.rows.iter().map(|r| r.parent_name.clone()).collect();
    let fitted: Vec<(GBTRegressor, GbtCvReport)> = ys
        .par_iter()
        .enumerate()
        .map(|(i, y)| fit_gbt_regressor_grouped(&x, y, &groups, depth_grid, folds, seed::derive(seed, i as u64)))
        .collect::<Result<_>>()?;
    let (regressors, reports): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    Ok(MapperBundle {
        regressors,
        schema: table.schema.clone(),
        version: BUNDLE_VERSION,
        training_meta: TrainingMeta {
            corpus: parents,
            seed,
            created_unix: created_now(),
            n_rows: table.rows.len(),
            reports,
        },
    })
}

impl MapperBundle {
    /// Predicted fitness per class, clamped to [0, 1].
    pub fn predict_fitness(&self, iv: &IndexVector) -> Result<FitnessVector> {
        if iv.schema != self.schema {
            let detail = match iv.schema.iter().zip(&self.schema).position(|(a, b)| a != b) {
                Some(i) => format!("column {i}: expected {:?}, got {:?}", self.schema[i], iv.schema[i]),
                None => format!("expected {} columns, got {}", self.schema.len(), iv.schema.len()),
            };
            return Err(CiamsError::SchemaMismatch(detail));
        }
        let mut scores = [0.0; 6];
        for (s, r) in scores.iter_mut().zip(&self.regressors) {
            *s = r.predict(&iv.values)?.clamp(0.0, 1.0);
        }
        Ok(FitnessVector { scores })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        for r in &self.regressors {
            encode_regressor(r, &mut payload);
        }
        let meta = serde_json::to_string(&self.training_meta).map_err(|e| CiamsError::Internal(e.to_string()))?;
        if self.schema.iter().any(|s| s.contains([',', '\n'])) {
            return Err(CiamsError::InvalidInput("schema names may not contain ',' or newlines".into()));
        }
        let mut head = Vec::new();
        writeln!(head, "{BUNDLE_MAGIC}").expect("vec write");
        writeln!(head, "version: {}", self.version).expect("vec write");
        writeln!(head, "schema: {}", self.schema.join(",")).expect("vec write");
        writeln!(head, "meta: {meta}").expect("vec write");
        writeln!(head, "payload-bytes: {}", payload.len()).expect("vec write");
        let digest = Sha256::new().chain_update(&head).chain_update(&payload).finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        writeln!(head, "sha256: {hex}").expect("vec write");
        head.extend_from_slice(&payload);
        Ok(head)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MapperBundle> {
        let mut pos = 0;
        let mut line = |what: &str| -> Result<(String, usize)> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or(CiamsError::Truncated)?;
            let start = pos;
            pos += end + 1;
            let text = std::str::from_utf8(&rest[..end])
                .map_err(|_| CiamsError::MalformedBundle(format!("{what} line is not text")))?;
            Ok((text.to_string(), start))
        };
        let field = |text: &str, key: &str| -> Result<String> {
            text.strip_prefix(key)
                .and_then(|t| t.strip_prefix(": "))
                .map(String::from)
                .ok_or_else(|| CiamsError::MalformedBundle(format!("expected {key:?} line")))
        };
        let (magic, _) = line("magic")?;
        if magic != BUNDLE_MAGIC {
            return Err(CiamsError::MalformedBundle("not a bundle file".into()));
        }
        let (v, _) = line("version")?;
        let v = field(&v, "version")?;
        let version: u32 = v.trim().parse().map_err(|_| CiamsError::UnsupportedVersion(v.clone()))?;
        if version != BUNDLE_VERSION {
            return Err(CiamsError::UnsupportedVersion(version.to_string()));
        }
        let (schema, _) = line("schema")?;
        let schema = field(&schema, "schema")?;
        let (meta, _) = line("meta")?;
        let meta = field(&meta, "meta")?;
        let (len, _) = line("payload-bytes")?;
        let len: usize = field(&len, "payload-bytes")?
            .trim()
            .parse()
            .map_err(|_| CiamsError::MalformedBundle("bad payload length".into()))?;
        let (digest, digest_start) = line("sha256")?;
        let digest = field(&digest, "sha256")?;
        let payload = &bytes[pos..];
        if payload.len() < len {
            return Err(CiamsError::Truncated);
        }
        if payload.len() > len {
            return Err(CiamsError::MalformedBundle("trailing bytes after payload".into()));
        }
        let actual = Sha256::new()
            .chain_update(&bytes[..digest_start])
            .chain_update(payload)
            .finalize();
        let hex: String = actual.iter().map(|b| format!("{b:02x}")).collect();
        if hex != digest {
            return Err(CiamsError::ChecksumFailure);
        }
        let training_meta: TrainingMeta =
            serde_json::from_str(&meta).map_err(|e| CiamsError::MalformedBundle(e.to_string()))?;
        let schema: Vec<String> = if schema.is_empty() {
            Vec::new()
        } else {
            schema.split(',').map(String::from).collect()
        };
        let mut rd = Reader { buf: payload, pos: 0 };
        let regressors = (0..ModelClass::ALL.len())
            .map(|_| decode_regressor(&mut rd))
            .collect::<Result<Vec<_>>>()?;
        if rd.pos != payload.len() {
            return Err(CiamsError::MalformedBundle("payload has unread bytes".into()));
        }
        if regressors.iter().any(|r| r.n_features != schema.len()) {
            return Err(CiamsError::MalformedBundle("regressor width differs from schema".into()));
        }
        Ok(MapperBundle {
            regressors,
            schema,
            version,
            training_meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| CiamsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MapperBundle> {
        let bytes = std::fs::read(path).map_err(|e| CiamsError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Short identifier of the bundle contents.
    pub fn fingerprint(&self) -> String {
        match self.to_bytes() {
            Ok(b) => Sha256::digest(&b).iter().take(6).map(|x| format!("{x:02x}")).collect(),
            Err(_) => String::new(),
        }
    }
}

pub fn save_bundle(b: &MapperBundle, path: &Path) -> Result<()> {
    b.save(path)
}

pub fn load_bundle(path: &Path) -> Result<MapperBundle> {
    MapperBundle::load(path)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_regressor(r: &GBTRegressor, out: &mut Vec<u8>) {
    put_f64(out, r.base_score);
    put_f64(out, r.learning_rate);
    put_u32(out, r.max_depth as u32);
    put_u32(out, r.n_features as u32);
    for &g in &r.feature_gain {
        put_f64(out, g);
    }
    put_u32(out, r.trees.len() as u32);
    for t in &r.trees {
        put_u32(out, t.nodes.len() as u32);
        for n in &t.nodes {
            put_u32(out, n.feature);
            put_f64(out, n.threshold);
            put_u32(out, n.left);
            put_u32(out, n.right);
            put_f64(out, n.value);
            put_f64(out, n.gain);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.buf.len()).ok_or(CiamsError::Truncated)?;
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_bytes) > self.buf.len() - self.pos {
            return Err(CiamsError::MalformedBundle("count exceeds payload".into()));
        }
        Ok(n)
    }
}

fn decode_regressor(rd: &mut Reader<'_>) -> Result<GBTRegressor> {
    let base_score = rd.f64()?;
    let learning_rate = rd.f64()?;
    let max_depth = rd.u32()? as usize;
    let n_features = rd.count(8)?;
    let feature_gain = (0..n_features).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
    let n_trees = rd.count(4)?;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = rd.count(36)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(RegNode {
                feature: rd.u32()?,
                threshold: rd.f64()?,
                left: rd.u32()?,
                right: rd.u32()?,
                value: rd.f64()?,
                gain: rd.f64()?,
            });
        }
        // every split must point forward inside the tree and at a real feature
        for (i, n) in nodes.iter().enumerate() {
            if n.feature != u32::MAX
                && (n.feature as usize >= n_features
                    || n.left as usize <= i
                    || n.right as usize <= i
                    || n.left as usize >= n_nodes
                    || n.right as usize >= n_nodes)
            {
                return Err(CiamsError::MalformedBundle("invalid tree node".into()));
            }
        }
        if nodes.is_empty() {
            return Err(CiamsError::MalformedBundle("empty tree".into()));
        }
        trees.push(RegTree { nodes });
    }
    Ok(GBTRegressor {
        trees,
        learning_rate,
        base_score,
        max_depth,
        n_features,
        feature_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::{Partition, TrainingRow};
    use crate::indices::schema_for;
    use crate::cluster::ClusterMethod;
    use rand::Rng;

    fn synthetic_table(n_parents: usize, per_parent: usize, seed: u64) -> TrainingTable {
        let schema = schema_for(&[ClusterMethod::KMeans]);
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        for p in 0..n_parents {
            for i in 0..per_parent {
                let values: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
                let base = 0.2 + 0.6 / (1.0 + (-3.0 * values[5]).exp());
                let mut scores = [0.0; 6];
                for (k, s) in scores.iter_mut().enumerate() {
                    *s = (base + 0.02 * k as f64).clamp(0.0, 1.0);
                }
                scores[3] = 0.7;
                rows.push(TrainingRow {
                    indices: IndexVector { values, schema: schema.clone(), subsample_ref: format!("p{p}#{i}") },
                    fitness: FitnessVector { scores },
                    subsample_ref: format!("p{p}#{i}"),
                    parent_name: format!("p{p}"),
                    partition: Partition::Train,
                });
            }
        }
        TrainingTable { schema, rows }
    }

    fn small_bundle() -> (MapperBundle, TrainingTable) {
        let t = synthetic_table(4, 40, 1);
        (fit_mappers(&t, 3, &[2, 3], 7).unwrap(), t)
    }

    #[test]
    fn learns_smooth_target_and_flags_constant_class() {
        let (b, _) = small_bundle();
        let r = &b.training_meta.reports;
        assert!(r[0].cv_r2 >= 0.8, "{:?}", r[0]);
        assert!(r[3].degenerate && r[3].cv_r2 == 0.0);
        let probe = synthetic_table(1, 5, 99);
        for row in &probe.rows {
            let f = b.predict_fitness(&row.indices).unwrap();
            assert_eq!(f.scores[3], 0.7);
            assert!(f.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn single_parent_is_rejected() {
        assert!(fit_mappers(&synthetic_table(1, 20, 2), 3, &[2], 0).is_err());
    }

    #[test]
    fn predictions_are_clamped() {
        let (mut b, t) = small_bundle();
        b.regressors[1] = GBTRegressor::constant(1.13, 40);
        b.regressors[2] = GBTRegressor::constant(-0.4, 40);
        let f = b.predict_fitness(&t.rows[0].indices).unwrap();
        assert_eq!(f.scores[1], 1.0);
        assert_eq!(f.scores[2], 0.0);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (b, _) = small_bundle();
        let bytes = b.to_bytes().unwrap();
        let back = MapperBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        let probe = synthetic_table(1, 100, 5);
        for row in &probe.rows {
            let x = b.predict_fitness(&row.indices).unwrap();
            let y = back.predict_fitness(&row.indices).unwrap();
            for (p, q) in x.scores.iter().zip(y.scores) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn bumped_version_is_reported() {
        let (b, _) = small_bundle();
        let text = b.to_bytes().unwrap();
        let at = text.windows(10).position(|w| w == b"version: 1").unwrap() + 9;
        let mut bumped = text.clone();
        bumped[at] = b'2';
        let err = MapperBundle::from_bytes(&bumped).unwrap_err();
        assert!(err.to_string().contains("unsupported version"), "{err}");
    }

    #[test]
    fn edited_schema_fails_prediction() {
        let (mut b, t) = small_bundle();
        b.schema[7] = "kmeans:something_else".into();
        let err = b.predict_fitness(&t.rows[0].indices).unwrap_err();
        assert!(err.to_string().contains("schema mismatch"), "{err}");
    }

    #[test]
    fn every_single_byte_corruption_is_detected() {
        let t = synthetic_table(2, 12, 3);
        let b = fit_mappers(&t, 2, &[1], 1).unwrap();
        let bytes = b.to_bytes().unwrap();
        for i in 0..bytes.len() {
            let mut c = bytes.clone();
            c[i] ^= 0x01;
            assert!(MapperBundle::from_bytes(&c).is_err(), "byte {i} flip went unnoticed");
        }
        for cut in [1, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(MapperBundle::from_bytes(&bytes[..cut]).is_err());
        }
        let err = MapperBundle::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}
