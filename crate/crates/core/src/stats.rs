//! Test statistics and scoring functions.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::data::POSITIVE;
use crate::error::{CiamsError, Result};
use crate::matrix::Matrix;

/// Outcome of Hotelling's two-sample T² test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotellingResult {
    pub t2: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

fn mean_and_scatter(x: &Matrix) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p) = (x.nrows(), x.ncols());
    let mean = DVector::from_vec(x.column_means());
    let mut s = DMatrix::zeros(p, p);
    let mut c = DVector::zeros(p);
    for i in 0..n {
        for j in 0..p {
            c[j] = x.get(i, j) - mean[j];
        }
        s.syger(1.0, &c, &c, 1.0);
    }
    (mean, s)
}

/// Two-sample Hotelling T² with a small ridge on the pooled covariance.
pub fn hotelling_t2(a: &Matrix, b: &Matrix, alpha: f64) -> Result<HotellingResult> {
    let p = a.ncols();
    if b.ncols() != p {
        return Err(CiamsError::DimensionMismatch {
            expected: p,
            got: b.ncols(),
        });
    }
    let (na, nb) = (a.nrows(), b.nrows());
    if p == 0 || na + nb < p + 2 || na == 0 || nb == 0 {
        return Err(CiamsError::InvalidInput(format!(
            "hotelling test needs n_a + n_b >= p + 2 (n_a={na}, n_b={nb}, p={p})"
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(CiamsError::InvalidInput("non-finite entries".into()));
    }
    let (ma, sa) = mean_and_scatter(a);
    let (mb, sb) = mean_and_scatter(b);
    let dof = (na + nb) as f64 - 2.0;
    let mut pooled = if dof > 0.0 { (sa + sb) / dof } else { sa + sb };
    // lower triangle only was accumulated by syger; mirror it
    pooled.fill_upper_triangle_with_lower_triangle();
    let ridge = 1e-6 * pooled.trace() / p as f64;
    for j in 0..p {
        pooled[(j, j)] += ridge;
    }
    let chol = pooled
        .cholesky()
        .ok_or_else(|| CiamsError::RankDeficient)?;
    let d = ma - mb;
    let sol = chol.solve(&d);
    let (naf, nbf, pf) = (na as f64, nb as f64, p as f64);
    let t2 = (naf * nbf / (naf + nbf) * d.dot(&sol)).max(0.0);
    let df2 = naf + nbf - pf - 1.0;
    let f_statistic = df2 / (pf * (naf + nbf - 2.0)) * t2;
    let dist = FisherSnedecor::new(pf, df2).map_err(|e| CiamsError::Internal(e.to_string()))?;
    let p_value = dist.sf(f_statistic).clamp(0.0, 1.0);
    Ok(HotellingResult {
        t2,
        f_statistic,
        p_value,
        reject: p_value < alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    T,
    Z,
}

/// Outcome of the margin test on two samples of scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDiffTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub test_kind: TestKind,
    pub pass: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// One-sided margin test on the absolute difference of two means.
///
/// The null hypothesis is that the difference is within `delta`; it is
/// rejected when the statistic falls in the upper `alpha` tail. `pass`
/// means the null survives, i.e. `p_value >= alpha` where `p_value` is the
/// upper-tail probability. A t distribution with `min(n) - 1` degrees of
/// freedom is used when the smaller sample has at most 30 points, the
/// normal otherwise.
pub fn meandiff_test(e: &[f64], p: &[f64], delta: f64, alpha: f64) -> Result<MeanDiffTestResult> {
    if e.is_empty() || p.is_empty() {
        return Err(CiamsError::InvalidInput("empty sample".into()));
    }
    if e.iter().chain(p).any(|v| !v.is_finite()) {
        return Err(CiamsError::InvalidInput("non-finite sample value".into()));
    }
    let diff = (mean(e) - mean(p)).abs() - delta;
    let se = (sample_variance(e) / e.len() as f64 + sample_variance(p) / p.len() as f64).sqrt();
    let statistic = if se > 0.0 {
        diff / se
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let n_min = e.len().min(p.len());
    let (test_kind, p_value) = if n_min <= 30 {
        let df = (n_min as f64 - 1.0).max(1.0);
        let t = StudentsT::new(0.0, 1.0, df).map_err(|e| CiamsError::Internal(e.to_string()))?;
        (TestKind::T, t.sf(statistic))
    } else {
        (TestKind::Z, Normal::standard().sf(statistic))
    };
    let p_value = p_value.clamp(0.0, 1.0);
    Ok(MeanDiffTestResult {
        statistic,
        p_value,
        test_kind,
        pass: p_value >= alpha,
    })
}

fn confusion(truth: &[i8], pred: &[i8], positive: i8) -> (f64, f64, f64) {
    assert_eq!(truth.len(), pred.len(), "label vectors differ in length");
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == positive, p == positive) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn f1_for(truth: &[i8], pred: &[i8], positive: i8) -> f64 {
    let (tp, fp, fn_) = confusion(truth, pred, positive);
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

/// Positive-class F1; zero when undefined.
pub fn f1_score(truth: &[i8], pred: &[i8]) -> f64 {
    f1_for(truth, pred, POSITIVE)
}

/// Support-weighted mean of the per-class F1 scores.
pub fn weighted_f1_score(truth: &[i8], pred: &[i8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let n_pos = truth.iter().filter(|&&t| t == POSITIVE).count() as f64;
    let n = truth.len() as f64;
    (n_pos * f1_for(truth, pred, POSITIVE) + (n - n_pos) * f1_for(truth, pred, -POSITIVE)) / n
}

/// Classification score used for tuning and fitness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    F1,
    WeightedF1,
}

impl Metric {
    pub fn score(self, truth: &[i8], pred: &[i8]) -> f64 {
        match self {
            Metric::F1 => f1_score(truth, pred),
            Metric::WeightedF1 => weighted_f1_score(truth, pred),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::WeightedF1 => "weighted_f1",
        }
    }
}

impl FromStr for Metric {
    type Err = CiamsError;

    fn from_str(s: &str) -> Result<Metric> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "f1" => Ok(Metric::F1),
            "weighted_f1" => Ok(Metric::WeightedF1),
            _ => Err(CiamsError::Config(format!("unknown metric {s:?}"))),
        }
    }
}

/// Coefficient of determination.
pub fn r2_score(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(CiamsError::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.len() < 2 {
        return Err(CiamsError::InvalidInput("r2 needs at least two points".into()));
    }
    let m = mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(CiamsError::InvalidInput("zero-variance truth".into()));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mae inputs differ in length");
    assert!(!a.is_empty(), "mae of empty input");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Ranks starting at 1, ties receive their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation; 0 when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs differ in length");
    if x.len() < 2 {
        return 0.0;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, shift: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Matrix {
        let data = (0..n * p)
            .map(|i| {
                let z: f64 = StandardNormal.sample(rng);
                if i % p == 0 { z + shift } else { z }
            })
            .collect();
        Matrix::from_vec(n, p, data)
    }

    #[test]
    fn identical_samples_do_not_reject() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(50, 3, 0.0, &mut rng);
        let r = hotelling_t2(&a, &a, 0.05).unwrap();
        assert!(r.t2.abs() < 1e-12);
        assert!(!r.reject);
    }

    #[test]
    fn hotelling_matches_direct_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(30, 2, 0.5, &mut rng);
        let b = gaussian(40, 2, 0.0, &mut rng);
        // plain 2x2 inverse, independent of the Cholesky path
        let cov = |x: &Matrix| {
            let m = x.column_means();
            let mut s = [[0.0; 2]; 2];
            for r in x.rows_iter() {
                for i in 0..2 {
                    for j in 0..2 {
                        s[i][j] += (r[i] - m[i]) * (r[j] - m[j]);
                    }
                }
            }
            (m, s)
        };
        let (ma, sa) = cov(&a);
        let (mb, sb) = cov(&b);
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = (sa[i][j] + sb[i][j]) / 68.0;
            }
        }
        let ridge = 1e-6 * (s[0][0] + s[1][1]) / 2.0;
        s[0][0] += ridge;
        s[1][1] += ridge;
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let d = [ma[0] - mb[0], ma[1] - mb[1]];
        let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
        let t2 = 30.0 * 40.0 / 70.0 * q;
        let r = hotelling_t2(&a, &b, 0.05).unwrap();
        assert!((r.t2 - t2).abs() < 1e-9 * t2.max(1.0));
        assert!((r.f_statistic - 67.0 / (2.0 * 68.0) * t2).abs() < 1e-9 * t2.max(1.0));
    }

    #[test]
    fn hotelling_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = gaussian(25, 4, 0.3, &mut rng);
        let b = gaussian(35, 4, 0.0, &mut rng);
        let x = hotelling_t2(&a, &b, 0.05).unwrap();
        let y = hotelling_t2(&b, &a, 0.05).unwrap();
        assert!((x.t2 - y.t2).abs() < 1e-9 * x.t2.max(1.0));
        assert!((x.p_value - y.p_value).abs() < 1e-12);
    }

    #[test]
    fn hotelling_affine_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(40, 3, 0.4, &mut rng);
        let b = gaussian(40, 3, 0.0, &mut rng);
        let m = [[2.0, 0.5, 0.0], [0.0, 1.0, -0.3], [0.1, 0.0, 3.0]];
        let tf = |x: &Matrix| {
            let rows: Vec<Vec<f64>> = x
                .rows_iter()
                .map(|r| (0..3).map(|i| (0..3).map(|j| m[i][j] * r[j]).sum::<f64>() + 7.0).collect())
                .collect();
            Matrix::from_rows(&rows)
        };
        let x = hotelling_t2(&a, &b, 0.05).unwrap();
        let y = hotelling_t2(&tf(&a), &tf(&b), 0.05).unwrap();
        assert!((x.t2 - y.t2).abs() <= 1e-4 * x.t2.max(1.0));
    }

    #[test]
    fn hotelling_rank_deficient_input() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]);
        let err = hotelling_t2(&a, &a, 0.05).unwrap_err();
        assert!(err.to_string().contains("rank deficient"));
    }

    #[test]
    fn meandiff_cases() {
        let a = [0.5, 0.6, 0.7];
        let r = meandiff_test(&a, &a, 0.1, 0.05).unwrap();
        assert!(r.statistic < 0.0);
        assert!(r.pass);
        let b = [0.6, 0.7, 0.8];
        let r = meandiff_test(&a, &b, 0.1, 0.05).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        let far = [0.1, 0.15, 0.12, 0.11];
        let near = [0.8, 0.82, 0.79, 0.81];
        let r = meandiff_test(&far, &near, 0.1, 0.05).unwrap();
        assert!(r.statistic > 0.0 && !r.pass && r.p_value < 0.05);
        let x25 = vec![0.5; 25];
        let x50: Vec<f64> = (0..50).map(|i| 0.5 + 0.001 * i as f64).collect();
        assert_eq!(meandiff_test(&x25, &x25, 0.1, 0.05).unwrap().test_kind, TestKind::T);
        assert_eq!(meandiff_test(&x50, &x50, 0.1, 0.05).unwrap().test_kind, TestKind::Z);
        // constant samples with equal means pass
        let r = meandiff_test(&x25, &x25, 0.1, 0.05).unwrap();
        assert_eq!(r.statistic, f64::NEG_INFINITY);
        assert!(r.pass);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_score(&[1, -1, 1], &[1, -1, 1]), 1.0);
        // TP=2, FP=1, FN=1
        let t = [1, 1, 1, -1, -1];
        let p = [1, 1, -1, 1, -1];
        assert!((f1_score(&t, &p) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1_score(&[-1, -1], &[-1, -1]), 0.0);
        assert!((weighted_f1_score(&[1, -1, 1], &[1, -1, 1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r2_cases() {
        assert_eq!(r2_score(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(r2_score(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((r2_score(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(r2_score(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &x) - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        assert!((spearman(&x, &y) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[0.3, 0.4], &[0.3, 0.4]), 0.0);
        assert!((mae(&[0.8], &[0.7]) - 0.1).abs() < 1e-12);
        assert_eq!(mae(&[0.0, 1.0], &[1.0, 0.0]), 1.0);
    }

    proptest! {
        #[test]
        fn spearman_ignores_monotone_maps(v in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30)) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let xt: Vec<f64> = x.iter().map(|a| (a / 10.0).exp()).collect();
            let yt: Vec<f64> = y.iter().map(|b| b * b * b + 2.0 * b).collect();
            prop_assert!((spearman(&x, &y) - spearman(&xt, &yt)).abs() < 1e-9);
        }

        #[test]
        fn f1_ignores_joint_permutation(v in prop::collection::vec((prop::bool::ANY, prop::bool::ANY), 1..40), rot in 0usize..40) {
            let t: Vec<i8> = v.iter().map(|p| if p.0 { 1 } else { -1 }).collect();
            let p: Vec<i8> = v.iter().map(|p| if p.1 { 1 } else { -1 }).collect();
            let k = rot % t.len();
            let mut t2 = t.clone();
            let mut p2 = p.clone();
            t2.rotate_left(k);
            p2.rotate_left(k);
            t2.reverse();
            p2.reverse();
            prop_assert_eq!(f1_score(&t, &p), f1_score(&t2, &p2));
        }

        #[test]
        fn p_values_in_unit_interval(
            a in prop::collection::vec(-1e3f64..1e3, 1..40),
            b in prop::collection::vec(-1e3f64..1e3, 1..40),
            delta in 0.0f64..1.0,
        ) {
            let r = meandiff_test(&a, &b, delta, 0.05).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
