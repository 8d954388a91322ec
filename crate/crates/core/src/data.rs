//! Dataset ingestion, standardization, stratified splitting and bootstrap
//! subsampling.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{CiamsError, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const POSITIVE: i8 = 1;
pub const NEGATIVE: i8 = -1;

/// Labeled tabular dataset with binary labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<i8>,
    /// Original label symbols: `[negative, positive]`.
    pub classes: [String; 2],
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<i8>) -> Result<Dataset> {
        let p = features.ncols();
        let d = Dataset {
            name: name.into(),
            feature_names: (0..p).map(|j| format!("x{j}")).collect(),
            features,
            labels,
            classes: ["-1".to_string(), "+1".to_string()],
        };
        d.check()?;
        Ok(d)
    }

    fn check(&self) -> Result<()> {
        if self.features.nrows() != self.labels.len() {
            return Err(CiamsError::DimensionMismatch {
                expected: self.features.nrows(),
                got: self.labels.len(),
            });
        }
        if self.labels.iter().any(|&l| l != POSITIVE && l != NEGATIVE) {
            return Err(CiamsError::InvalidInput("labels must be -1 or +1".into()));
        }
        if !self.features.is_finite() {
            return Err(CiamsError::InvalidInput("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        class_counts(&self.labels)
    }

    pub fn has_both_classes(&self) -> bool {
        let (neg, pos) = self.class_counts();
        neg > 0 && pos > 0
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    pub fn label_symbol(&self, label: i8) -> &str {
        if label == POSITIVE {
            &self.classes[1]
        } else {
            &self.classes[0]
        }
    }
}

pub fn class_counts(labels: &[i8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == POSITIVE).count();
    (labels.len() - pos, pos)
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Named(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "last" {
            LabelColumn::Last
        } else {
            LabelColumn::Named(s.to_string())
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_column: LabelColumn,
    pub impute: bool,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "?")
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a dense numeric table; `None` marks a missing cell.
fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CiamsError::EmptyFile);
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(CiamsError::InvalidInput(format!(
                "row {} has {} cells, header has {}",
                rows.len() + 1,
                rec.len(),
                header.len()
            )));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(CiamsError::EmptyFile);
    }
    Ok((header, rows))
}

fn numeric_columns(
    header: &[String],
    rows: &[Vec<String>],
    cols: &[usize],
    impute: bool,
) -> Result<Matrix> {
    let n = rows.len();
    let p = cols.len();
    let mut x = Matrix::zeros(n, p);
    let mut missing = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let cell = row[c].as_str();
            match parse_cell(cell) {
                Some(v) => x.set(i, j, v),
                None if impute && is_missing(cell) => missing.push((i, j)),
                None => {
                    return Err(CiamsError::NonNumericCell {
                        column: header[c].clone(),
                        row: i + 1,
                    })
                }
            }
        }
    }
    if !missing.is_empty() {
        let mut sums = vec![0.0; p];
        let mut counts = vec![0usize; p];
        let mut is_missing = vec![false; n * p];
        for &(i, j) in &missing {
            is_missing[i * p + j] = true;
        }
        for i in 0..n {
            for j in 0..p {
                if !is_missing[i * p + j] {
                    sums[j] += x.get(i, j);
                    counts[j] += 1;
                }
            }
        }
        for &(i, j) in &missing {
            if counts[j] == 0 {
                return Err(CiamsError::NonNumericCell {
                    column: header[cols[j]].clone(),
                    row: i + 1,
                });
            }
            x.set(i, j, sums[j] / counts[j] as f64);
        }
    }
    Ok(x)
}

/// Parses a labeled CSV. The minority label symbol becomes +1; on an exact
/// tie the lexicographically smaller symbol does.
pub fn read_csv<R: Read>(reader: R, name: &str, opts: &LoadOptions) -> Result<Dataset> {
    let (header, rows) = read_table(reader)?;
    let label_idx = match &opts.label_column {
        LabelColumn::Last => header.len() - 1,
        LabelColumn::Named(n) => header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CiamsError::MissingLabelColumn(n.clone()))?,
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(r[label_idx].as_str()).or_default() += 1;
    }
    if counts.len() != 2 {
        return Err(CiamsError::NotBinary(counts.len()));
    }
    let mut syms: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic, so a stable sort by count keeps the
    // smaller symbol first on ties.
    syms.sort_by_key(|&(_, c)| c);
    let positive = syms[0].0.to_string();
    let negative = syms[1].0.to_string();

    let cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    if cols.is_empty() {
        return Err(CiamsError::InvalidInput("no feature columns".into()));
    }
    let features = numeric_columns(&header, &rows, &cols, opts.impute)?;
    let labels = rows
        .iter()
        .map(|r| if r[label_idx] == positive { POSITIVE } else { NEGATIVE })
        .collect();
    let d = Dataset {
        name: name.to_string(),
        feature_names: cols.iter().map(|&c| header[c].clone()).collect(),
        features,
        labels,
        classes: [negative, positive],
    };
    if d.n() < 2 {
        return Err(CiamsError::InvalidInput("need at least 2 rows".into()));
    }
    Ok(d)
}

pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| CiamsError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(f, &name, opts)
}

/// Loads every `*.csv` file of a directory, ordered by file name.
pub fn load_corpus(dir: &Path, opts: &LoadOptions) -> Result<Vec<Dataset>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CiamsError::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| CiamsError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CiamsError::EmptyCorpus);
    }
    paths.iter().map(|p| load_csv(p, opts)).collect()
}

/// Parses an unlabeled feature table. Columns are matched by name against
/// `feature_names` when every name is present, otherwise positionally.
pub fn read_unlabeled_csv<R: Read>(
    reader: R,
    feature_names: &[String],
    impute: bool,
) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let by_name: Option<Vec<usize>> = feature_names
        .iter()
        .map(|n| header.iter().position(|h| h == n))
        .collect();
    let cols = match by_name {
        Some(c) => c,
        None if header.len() == feature_names.len() => (0..header.len()).collect(),
        None => {
            return Err(CiamsError::DimensionMismatch {
                expected: feature_names.len(),
                got: header.len(),
            })
        }
    };
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, feature_names.len()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(CiamsError::InvalidInput(format!("row {} is ragged", bad + 1)));
    }
    numeric_columns(&header, &rows, &cols, impute)
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

const ZERO_VARIANCE: f64 = 1e-12;

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let means = x.column_means();
        let n = x.nrows().max(1) as f64;
        let mut var = vec![0.0; x.ncols()];
        for r in x.rows_iter() {
            for ((v, &a), &m) in var.iter_mut().zip(r).zip(&means) {
                *v += (a - m) * (a - m);
            }
        }
        let stds = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Standardizer { means, stds }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.means.len() {
            return Err(CiamsError::DimensionMismatch {
                expected: self.means.len(),
                got: x.ncols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.nrows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                let s = self.stds[j];
                *v = if s > ZERO_VARIANCE {
                    (*v - self.means[j]) / s
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

/// Zero mean, unit population variance per column; constant columns become 0.
pub fn standardize_matrix(x: &Matrix) -> Matrix {
    Standardizer::fit(x)
        .transform(x)
        .expect("standardizer fitted on the same matrix")
}

pub fn standardize(d: &Dataset) -> Dataset {
    Dataset {
        features: standardize_matrix(&d.features),
        ..d.clone()
    }
}

/// Subsample size policy.
pub fn subsample_size(n: usize) -> usize {
    match n {
        0..=500 => 100,
        501..=2000 => 300,
        _ => 500,
    }
}

/// `alpha * ceil(n / (0.63 h))`, evaluated in integers as
/// `ceil(100 n / (63 h))` so boundary cases are exact.
pub fn subsample_count(n: usize, h: usize, alpha: usize) -> usize {
    let num = 100 * n as u128;
    let den = 63 * h as u128;
    alpha * num.div_ceil(den).max(1) as usize
}

/// One stratified bootstrap draw from a parent dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsample {
    pub parent_name: String,
    pub index: usize,
    pub row_indices: Vec<usize>,
    /// Standardized with the subsample's own statistics.
    pub features: Matrix,
    pub labels: Vec<i8>,
}

impl Subsample {
    pub fn h(&self) -> usize {
        self.labels.len()
    }

    /// Wraps a whole dataset as a single "subsample" (single-shot mode).
    pub fn whole(d: &Dataset) -> Subsample {
        Subsample {
            parent_name: d.name.clone(),
            index: 0,
            row_indices: (0..d.n()).collect(),
            features: standardize_matrix(&d.features),
            labels: d.labels.clone(),
        }
    }

    pub fn reference(&self) -> String {
        format!("{}#{}", self.parent_name, self.index)
    }
}

fn class_rows(labels: &[i8]) -> (Vec<usize>, Vec<usize>) {
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == POSITIVE {
            pos.push(i)
        } else {
            neg.push(i)
        }
    }
    (neg, pos)
}

/// Draws `b` stratified bootstrap subsamples of size `h`.
pub fn draw_subsamples_sized(d: &Dataset, h: usize, b: usize, seed: u64) -> Result<Vec<Subsample>> {
    let (neg, pos) = class_rows(&d.labels);
    if neg.is_empty() || pos.is_empty() {
        return Err(CiamsError::ClassTooSmall(format!(
            "{}: a class has no members",
            d.name
        )));
    }
    if h < 2 {
        return Err(CiamsError::InvalidInput("subsample size must be >= 2".into()));
    }
    let n = d.n();
    // two per class where possible, so the subsample supports stratified CV
    let floor = if h >= 4 { 2 } else { 1 };
    let h_pos = ((h as f64 * pos.len() as f64 / n as f64).round() as usize).clamp(floor, h - floor);
    let h_neg = h - h_pos;
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(b);
    for index in 0..b {
        let mut rows = Vec::with_capacity(h);
        rows.extend((0..h_pos).map(|_| pos[rng.random_range(0..pos.len())]));
        rows.extend((0..h_neg).map(|_| neg[rng.random_range(0..neg.len())]));
        rows.shuffle(&mut rng);
        let raw = d.features.select_rows(&rows);
        out.push(Subsample {
            parent_name: d.name.clone(),
            index,
            labels: rows.iter().map(|&i| d.labels[i]).collect(),
            features: standardize_matrix(&raw),
            row_indices: rows,
        });
    }
    Ok(out)
}

/// Draws the policy number of subsamples at the policy size.
pub fn draw_subsamples(d: &Dataset, alpha: usize, seed: u64) -> Result<Vec<Subsample>> {
    let h = subsample_size(d.n());
    let b = subsample_count(d.n(), h, alpha);
    draw_subsamples_sized(d, h, b, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

fn row_key(d: &Dataset, i: usize, seed: u64) -> u64 {
    let mut h = seed::mix64(seed ^ d.labels[i] as u64);
    for v in d.features.row(i) {
        h = seed::mix64(h ^ v.to_bits());
    }
    h
}

fn row_cmp(d: &Dataset, a: usize, b: usize) -> std::cmp::Ordering {
    d.features
        .row(a)
        .iter()
        .zip(d.features.row(b))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Splits into disjoint train/test parts. Row selection depends only on row
/// content and the seed, never on row order.
pub fn stratified_split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CiamsError::InvalidInput("train_fraction must be in (0,1)".into()));
    }
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let (neg, pos) = class_rows(&d.labels);
        vec![pos, neg]
    } else {
        vec![(0..d.n()).collect()]
    };
    for g in &groups {
        if g.len() < 2 {
            return Err(CiamsError::ClassTooSmall(format!(
                "{}: need at least 2 rows per stratum",
                d.name
            )));
        }
    }
    // Largest-remainder allocation of the train total across strata.
    let total = (spec.train_fraction * d.n() as f64).round() as usize;
    let targets: Vec<f64> = groups
        .iter()
        .map(|g| spec.train_fraction * g.len() as f64)
        .collect();
    let mut alloc: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(alloc.iter().sum());
    for &g in order.iter().cycle().take(groups.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[g] < groups[g].len() {
            alloc[g] += 1;
            remaining -= 1;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, rows) in groups.iter().enumerate() {
        let take = alloc[g].clamp(1, rows.len() - 1);
        let mut keyed: Vec<(u64, usize)> =
            rows.iter().map(|&i| (row_key(d, i, spec.seed), i)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| row_cmp(d, a.1, b.1)));
        train.extend(keyed[..take].iter().map(|&(_, i)| i));
        test.extend(keyed[take..].iter().map(|&(_, i)| i));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.select(&train), d.select(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ds(rows: &[&[f64]], labels: &[i8]) -> Dataset {
        Dataset::new("t", Matrix::from_rows(rows), labels.to_vec()).unwrap()
    }

    fn load_str(s: &str, opts: &LoadOptions) -> Result<Dataset> {
        read_csv(s.as_bytes(), "t", opts)
    }

    #[test]
    fn minority_label_is_positive() {
        let d = load_str("x,y\n1,a\n2,a\n3,a\n4,b\n", &LoadOptions::default()).unwrap();
        assert_eq!(d.labels, vec![-1, -1, -1, 1]);
        assert_eq!(d.classes, ["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn balanced_tie_goes_to_smaller_symbol() {
        let d = load_str("x,y\n1,zed\n2,alp\n", &LoadOptions::default()).unwrap();
        assert_eq!(d.labels, vec![-1, 1]);
    }

    #[test]
    fn three_symbols_is_not_binary() {
        let e = load_str("x,y\n1,a\n2,b\n3,c\n", &LoadOptions::default()).unwrap_err();
        assert!(e.to_string().contains("not binary"), "{e}");
    }

    #[test]
    fn blank_cell_rejected_without_impute() {
        let e = load_str("x,z,y\n1,,a\n2,3,b\n", &LoadOptions::default()).unwrap_err();
        assert!(e.to_string().contains("non-numeric cell"), "{e}");
    }

    #[test]
    fn blank_cell_imputed_with_column_mean() {
        let opts = LoadOptions {
            impute: true,
            ..Default::default()
        };
        let d = load_str("x,z,y\n1,,a\n2,3,b\n3,5,a\n", &opts).unwrap();
        assert_eq!(d.features.get(0, 1), 4.0);
    }

    #[test]
    fn named_label_column_and_errors() {
        let opts = LoadOptions {
            label_column: LabelColumn::Named("cls".into()),
            ..Default::default()
        };
        let d = load_str("cls,x\na,1\nb,2\n", &opts).unwrap();
        assert_eq!(d.feature_names, vec!["x"]);
        assert!(matches!(
            load_str("c,x\na,1\nb,2\n", &opts),
            Err(CiamsError::MissingLabelColumn(_))
        ));
        assert!(matches!(
            load_str("", &LoadOptions::default()),
            Err(CiamsError::EmptyFile)
        ));
        assert!(matches!(
            load_str("x,y\n", &LoadOptions::default()),
            Err(CiamsError::EmptyFile)
        ));
        assert!(matches!(
            load_str("x,y\n1,a\n2,a\n", &LoadOptions::default()),
            Err(CiamsError::NotBinary(1))
        ));
        assert!(matches!(
            load_str("x,y\nfoo,a\n2,b\n", &LoadOptions::default()),
            Err(CiamsError::NonNumericCell { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_csv(Path::new("/nonexistent/x.csv"), &LoadOptions::default()).unwrap_err();
        assert!(matches!(e, CiamsError::Io { .. }));
    }

    #[test]
    fn standardize_hand_values() {
        let d = ds(&[&[1.0, 5.0], &[2.0, 5.0], &[3.0, 5.0]], &[1, -1, 1]);
        let s = standardize(&d);
        // (x - 2) / sqrt(2/3)
        assert_abs_diff_eq!(s.features.get(0, 0), -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(s.features.get(1, 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.features.get(2, 0), 1.224744871391589, epsilon = 1e-12);
        assert_eq!(s.features.column(1), vec![0.0, 0.0, 0.0]);
        let again = standardize(&s);
        for (a, b) in again.features.as_slice().iter().zip(s.features.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn size_policy() {
        assert_eq!(subsample_size(400), 100);
        assert_eq!(subsample_size(500), 100);
        assert_eq!(subsample_size(501), 300);
        assert_eq!(subsample_size(1473), 300);
        assert_eq!(subsample_size(2000), 300);
        assert_eq!(subsample_size(5000), 500);
    }

    #[test]
    fn count_policy() {
        assert_eq!(subsample_count(5000, 500, 5), 80);
        assert_eq!(subsample_count(400, 100, 5), 35);
        assert_eq!(subsample_count(63, 100, 1), 1);
        assert_eq!(subsample_count(64, 100, 1), 2);
    }

    fn blob(n: usize, pos: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let labels = (0..n).map(|i| if i < pos { 1 } else { -1 }).collect();
        Dataset::new("blob", Matrix::from_rows(&rows), labels).unwrap()
    }

    #[test]
    fn draw_counts_and_determinism() {
        let d = blob(5000, 1000);
        let a = draw_subsamples(&d, 5, 7).unwrap();
        assert_eq!(a.len(), 80);
        assert!(a.iter().all(|s| s.h() == 500));
        let b = draw_subsamples(&d, 5, 7).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.row_indices == y.row_indices));
        for s in &a {
            let (neg, pos) = class_counts(&s.labels);
            assert!(neg > 0 && pos > 0);
            assert!((pos as f64 - 500.0 * 0.2).abs() <= 1.0);
        }
    }

    #[test]
    fn draw_requires_both_classes() {
        let d = blob(10, 0);
        assert!(draw_subsamples(&d, 5, 1).is_err());
    }

    #[test]
    fn small_parent_still_gets_full_size_subsamples() {
        let d = blob(40, 10);
        let s = draw_subsamples(&d, 5, 3).unwrap();
        assert!(s.iter().all(|s| s.h() == 100));
    }

    #[test]
    fn split_balanced_seven_three() {
        let d = blob(10, 5);
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 1,
            stratified: true,
        };
        let (tr, te) = stratified_split(&d, &spec).unwrap();
        assert_eq!((tr.n(), te.n()), (7, 3));
        assert!(tr.has_both_classes() && te.has_both_classes());
        let (tr2, _) = stratified_split(&d, &spec).unwrap();
        assert_eq!(tr, tr2);
    }

    #[test]
    fn split_twenty_eighty() {
        let d = blob(100, 30);
        let spec = SplitSpec {
            train_fraction: 0.2,
            seed: 5,
            stratified: true,
        };
        let (tr, te) = stratified_split(&d, &spec).unwrap();
        assert_eq!((tr.n(), te.n()), (20, 80));
        assert_eq!(tr.class_counts(), (14, 6));
    }

    #[test]
    fn split_rejects_tiny_class() {
        let d = blob(10, 1);
        let spec = SplitSpec {
            train_fraction: 0.5,
            seed: 0,
            stratified: true,
        };
        assert!(matches!(
            stratified_split(&d, &spec),
            Err(CiamsError::ClassTooSmall(_))
        ));
    }

    fn sorted_rows(d: &Dataset) -> Vec<Vec<u64>> {
        let mut v: Vec<Vec<u64>> = (0..d.n())
            .map(|i| {
                let mut r: Vec<u64> = d.features.row(i).iter().map(|x| x.to_bits()).collect();
                r.push(d.labels[i] as u64);
                r
            })
            .collect();
        v.sort();
        v
    }

    proptest! {
        #[test]
        fn policies_are_bounded(n in 2usize..1_000_000, alpha in 1usize..10) {
            let h = subsample_size(n);
            prop_assert!([100, 300, 500].contains(&h));
            prop_assert!(subsample_count(n, h, alpha) >= alpha);
        }

        #[test]
        fn standardize_is_idempotent(vals in proptest::collection::vec(-1e3f64..1e3, 6..40)) {
            let n = vals.len() / 2;
            let x = Matrix::from_vec(n, 2, vals[..2 * n].to_vec());
            let once = standardize_matrix(&x);
            let twice = standardize_matrix(&once);
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn split_ignores_row_order(perm_seed in 0u64..1000, split_seed in 0u64..1000) {
            let d = blob(37, 12);
            let mut order: Vec<usize> = (0..d.n()).collect();
            order.shuffle(&mut seed::rng(perm_seed));
            let shuffled = d.select(&order);
            let spec = SplitSpec { train_fraction: 0.7, seed: split_seed, stratified: true };
            let (a_tr, a_te) = stratified_split(&d, &spec).unwrap();
            let (b_tr, b_te) = stratified_split(&shuffled, &spec).unwrap();
            prop_assert_eq!(sorted_rows(&a_tr), sorted_rows(&b_tr));
            prop_assert_eq!(sorted_rows(&a_te), sorted_rows(&b_te));
        }

        #[test]
        fn subsample_class_proportions(n_pos in 1usize..60, n_neg in 1usize..60, s in 0u64..50) {
            let d = blob(n_pos + n_neg, n_pos);
            let subs = draw_subsamples_sized(&d, 50, 3, s).unwrap();
            let parent = n_pos as f64 / (n_pos + n_neg) as f64;
            for sub in subs {
                let (_, pos) = class_counts(&sub.labels);
                let frac = pos as f64 / 50.0;
                prop_assert!((2..=48).contains(&pos));
                // rounding plus the clamp that keeps both classes present
                prop_assert!((frac - parent).abs() <= 1.0 / 50.0 + 1e-12
                    || pos == 2 || pos == 48);
            }
        }
    }
}
