//! Clustering validity indices and the meta-feature vector.

mod external;
mod internal;

pub use external::{external_indices, ContingencyTable, PairCounts, EXTERNAL_NAMES};
pub use internal::{internal_indices, Geometry, INTERNAL_NAMES};

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_with_distances, ClusterAssignment, ClusterConfig, ClusterMethod};
use crate::data::Subsample;
use crate::error::{CiamsError, Result};
use crate::seed;

/// Indices per clustering method.
pub const INDICES_PER_METHOD: usize = 40;

/// Replaces non-finite values with fixed sentinels.
pub fn sanitize(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else if x == f64::INFINITY {
        1e6
    } else if x == f64::NEG_INFINITY {
        -1e6
    } else {
        x
    }
}

/// Index names in block order: internal first, then external.
pub fn index_names() -> impl Iterator<Item = &'static str> {
    INTERNAL_NAMES.iter().chain(EXTERNAL_NAMES.iter()).copied()
}

/// Column names (`method:index`) for the given methods in canonical order.
pub fn schema_for(methods: &[ClusterMethod]) -> Vec<String> {
    canonical_methods(methods)
        .into_iter()
        .flat_map(|m| index_names().map(move |i| format!("{}:{}", m.as_str(), i)))
        .collect()
}

fn canonical_methods(methods: &[ClusterMethod]) -> Vec<ClusterMethod> {
    let mut m = methods.to_vec();
    m.sort();
    m.dedup();
    m
}

/// Recovers the active method set from a schema, checking it is exactly
/// the canonical layout for that set.
pub fn methods_from_schema(schema: &[String]) -> Result<Vec<ClusterMethod>> {
    let mut methods: Vec<ClusterMethod> = Vec::new();
    for col in schema {
        let (m, _) = col
            .split_once(':')
            .ok_or_else(|| CiamsError::SchemaMismatch(format!("bad column name {col:?}")))?;
        let m: ClusterMethod = m
            .parse()
            .map_err(|_| CiamsError::SchemaMismatch(format!("unknown method in {col:?}")))?;
        if methods.last() != Some(&m) {
            methods.push(m);
        }
    }
    if schema_for(&methods) != schema {
        return Err(CiamsError::SchemaMismatch(
            "columns are not in canonical order".into(),
        ));
    }
    Ok(methods)
}

/// The concatenated, sanitized index values of one subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexVector {
    pub values: Vec<f64>,
    pub schema: Vec<String>,
    pub subsample_ref: String,
}

impl IndexVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        self.schema
            .iter()
            .position(|c| c == column)
            .map(|i| self.values[i])
    }
}

/// All 40 raw index values for one assignment.
pub fn all_indices(s: &Subsample, a: &ClusterAssignment, geo: &Geometry) -> [f64; 40] {
    let mut out = [0.0; 40];
    out[..17].copy_from_slice(&internal_indices(&s.features, a, geo));
    out[17..].copy_from_slice(&external_indices(&s.labels, a));
    out
}

/// Clusters `s` with every active method and concatenates the index blocks.
///
/// A method that fails contributes a block of zeros.
pub fn index_vector(
    s: &Subsample,
    methods: &[ClusterMethod],
    cfg: &ClusterConfig,
    seed: u64,
) -> IndexVector {
    let methods = canonical_methods(methods);
    let geo = Geometry::new(&s.features);
    let mut values = Vec::with_capacity(methods.len() * INDICES_PER_METHOD);
    for &m in &methods {
        let msd = seed::derive(seed, m as u64);
        match cluster_with_distances(&s.features, &geo.dists, m, cfg, msd) {
            Ok(a) => values.extend(all_indices(s, &a, &geo).iter().map(|&v| sanitize(v))),
            Err(e) => {
                log::warn!("{}: {} clustering failed: {}", s.reference(), m, e);
                values.extend(std::iter::repeat_n(0.0, INDICES_PER_METHOD));
            }
        }
    }
    IndexVector {
        values,
        schema: schema_for(&methods),
        subsample_ref: s.reference(),
    }
}
