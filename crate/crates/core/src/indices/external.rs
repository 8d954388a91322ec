//! External indices comparing a clustering against the class labeling.
//! The class labeling is the reference partition.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::cluster::ClusterAssignment;
use crate::data::POSITIVE;

pub const EXTERNAL_NAMES: [&str; 23] = [
    "entropy",
    "purity",
    "recall",
    "folkes_mallows",
    "rogers_tanimoto",
    "f1",
    "kulczynski",
    "norm_mutual_info",
    "sokal_sneath_1",
    "rand",
    "hubert_gamma",
    "homogeneity",
    "completeness",
    "v_measure",
    "jaccard",
    "adj_rand",
    "phi",
    "mcnemar",
    "russel_rao",
    "precision",
    "weighted_f1",
    "sokal_sneath_2",
    "adj_mutual_info",
];

/// Point-pair agreement counts.
///
/// `yy`: same class, same cluster; `yn`: same class, different clusters;
/// `ny`: different classes, same cluster; `nn`: different in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub yy: u64,
    pub yn: u64,
    pub ny: u64,
    pub nn: u64,
}

fn pairs(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.yy + self.yn + self.ny + self.nn
    }

    fn f(&self) -> (f64, f64, f64, f64) {
        (self.yy as f64, self.yn as f64, self.ny as f64, self.nn as f64)
    }

    pub fn precision(&self) -> f64 {
        let (yy, _, ny, _) = self.f();
        yy / (yy + ny)
    }

    pub fn recall(&self) -> f64 {
        let (yy, yn, _, _) = self.f();
        yy / (yy + yn)
    }

    pub fn f1(&self) -> f64 {
        let (yy, yn, ny, _) = self.f();
        2.0 * yy / (2.0 * yy + yn + ny)
    }

    /// Support-weighted mean of the pair F1 for the "together" and the
    /// "apart" relations.
    pub fn weighted_f1(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        let together = 2.0 * yy / (2.0 * yy + yn + ny);
        let apart = 2.0 * nn / (2.0 * nn + yn + ny);
        let t = |v: f64| if v.is_nan() { 0.0 } else { v };
        ((yy + yn) * t(together) + (ny + nn) * t(apart)) / (yy + yn + ny + nn)
    }

    pub fn folkes_mallows(&self) -> f64 {
        let (yy, yn, ny, _) = self.f();
        yy / ((yy + yn) * (yy + ny)).sqrt()
    }

    pub fn rogers_tanimoto(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        (yy + nn) / (yy + nn + 2.0 * (yn + ny))
    }

    pub fn kulczynski(&self) -> f64 {
        let (yy, yn, ny, _) = self.f();
        0.5 * (yy / (yy + ny) + yy / (yy + yn))
    }

    pub fn sokal_sneath_1(&self) -> f64 {
        let (yy, yn, ny, _) = self.f();
        yy / (yy + 2.0 * (yn + ny))
    }

    pub fn sokal_sneath_2(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        (yy + nn) / (yy + nn + 0.5 * (yn + ny))
    }

    pub fn rand(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        (yy + nn) / (yy + yn + ny + nn)
    }

    pub fn jaccard(&self) -> f64 {
        let (yy, yn, ny, _) = self.f();
        yy / (yy + yn + ny)
    }

    pub fn russel_rao(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        yy / (yy + yn + ny + nn)
    }

    pub fn mcnemar(&self) -> f64 {
        let (_, _, ny, nn) = self.f();
        (nn - ny) / (nn + ny).sqrt()
    }

    pub fn phi(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        (yy * nn - yn * ny) / ((yy + yn) * (yy + ny) * (yn + nn) * (ny + nn)).sqrt()
    }

    /// Normalized Hubert Γ between the two pair-membership indicators.
    pub fn hubert_gamma(&self) -> f64 {
        let (yy, yn, ny, nn) = self.f();
        let nt = yy + yn + ny + nn;
        let w1 = yy + yn;
        let w2 = yy + ny;
        (nt * yy - w1 * w2) / (w1 * w2 * (nt - w1) * (nt - w2)).sqrt()
    }

    pub fn adjusted_rand(&self) -> f64 {
        if self.yn == 0 && self.ny == 0 {
            return 1.0;
        }
        let (yy, yn, ny, nn) = self.f();
        2.0 * (yy * nn - yn * ny) / ((yy + yn) * (yn + nn) + (yy + ny) * (ny + nn))
    }
}

/// Clusters × classes cross-tabulation. Column 0 counts negatives,
/// column 1 positives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: Vec<[u64; 2]>,
    pub pair_counts: PairCounts,
}

impl ContingencyTable {
    pub fn new(labels: &[i8], clusters: &[usize]) -> ContingencyTable {
        assert_eq!(labels.len(), clusters.len(), "labels and clusters differ in length");
        let k = clusters.iter().copied().max().map_or(0, |m| m + 1);
        let mut counts = vec![[0u64; 2]; k];
        for (&l, &c) in labels.iter().zip(clusters) {
            counts[c][usize::from(l == POSITIVE)] += 1;
        }
        counts.retain(|r| r[0] + r[1] > 0);
        let n: u64 = counts.iter().map(|r| r[0] + r[1]).sum();
        let yy: u64 = counts.iter().map(|r| pairs(r[0]) + pairs(r[1])).sum();
        let same_cluster: u64 = counts.iter().map(|r| pairs(r[0] + r[1])).sum();
        let class_tot = [
            counts.iter().map(|r| r[0]).sum::<u64>(),
            counts.iter().map(|r| r[1]).sum::<u64>(),
        ];
        let same_class = pairs(class_tot[0]) + pairs(class_tot[1]);
        let yn = same_class - yy;
        let ny = same_cluster - yy;
        let nn = pairs(n) - yy - yn - ny;
        ContingencyTable {
            counts,
            pair_counts: PairCounts { yy, yn, ny, nn },
        }
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().map(|r| r[0] + r[1]).sum()
    }

    fn cluster_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r[0] + r[1]).collect()
    }

    fn class_totals(&self) -> Vec<u64> {
        (0..2)
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .filter(|&t| t > 0)
            .collect()
    }
}

fn entropy(totals: &[u64], n: f64) -> f64 {
    totals
        .iter()
        .filter(|&&t| t > 0)
        .map(|&t| {
            let p = t as f64 / n;
            -p * p.ln()
        })
        .sum()
}

struct InfoTheory {
    h_class: f64,
    h_cluster: f64,
    h_class_given_cluster: f64,
    h_cluster_given_class: f64,
    mi: f64,
}

fn info(t: &ContingencyTable) -> InfoTheory {
    let n = t.n() as f64;
    let a = t.cluster_totals();
    let b = [
        t.counts.iter().map(|r| r[0]).sum::<u64>(),
        t.counts.iter().map(|r| r[1]).sum::<u64>(),
    ];
    let mut mi = 0.0;
    let mut h_cg = 0.0;
    let mut h_kg = 0.0;
    for (k, row) in t.counts.iter().enumerate() {
        for c in 0..2 {
            let nkc = row[c] as f64;
            if nkc == 0.0 {
                continue;
            }
            mi += nkc / n * (n * nkc / (a[k] as f64 * b[c] as f64)).ln();
            h_cg -= nkc / n * (nkc / a[k] as f64).ln();
            h_kg -= nkc / n * (nkc / b[c] as f64).ln();
        }
    }
    InfoTheory {
        h_class: entropy(&b, n),
        h_cluster: entropy(&a, n),
        h_class_given_cluster: h_cg,
        h_cluster_given_class: h_kg,
        mi: mi.max(0.0),
    }
}

/// Expected mutual information under the hypergeometric model.
fn expected_mi(a: &[u64], b: &[u64], n: u64) -> f64 {
    let nf = n as f64;
    let lg = |x: u64| ln_gamma(x as f64 + 1.0);
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let base = lg(ai) + lg(bj) + lg(n - ai) + lg(n - bj) - lg(n);
            for nij in lo..=hi {
                let v = nij as f64;
                let term = v / nf * (nf * v / (ai as f64 * bj as f64)).ln();
                let lw = base - lg(nij) - lg(ai - nij) - lg(bj - nij) - lg(n + nij - ai - bj);
                emi += term * lw.exp();
            }
        }
    }
    emi
}

fn adjusted_mutual_info(t: &ContingencyTable, it: &InfoTheory) -> f64 {
    let a = t.cluster_totals();
    let b = t.class_totals();
    if (a.len() == 1 && b.len() == 1) || (a.is_empty() && b.is_empty()) {
        return 1.0;
    }
    let emi = expected_mi(&a, &b, t.n());
    let mean_h = 0.5 * (it.h_class + it.h_cluster);
    let mut denom = mean_h - emi;
    let eps = f64::EPSILON;
    denom = if denom < 0.0 { denom.min(-eps) } else { denom.max(eps) };
    (it.mi - emi) / denom
}

/// The 23 external indices in schema order (raw, unsanitized).
pub fn external_indices(labels: &[i8], a: &ClusterAssignment) -> [f64; 23] {
    let t = ContingencyTable::new(labels, &a.labels);
    let pc = t.pair_counts;
    let n = t.n() as f64;
    let it = info(&t);

    let purity = t.counts.iter().map(|r| r[0].max(r[1])).sum::<u64>() as f64 / n;
    let nmi = {
        let den = (it.h_class * it.h_cluster).sqrt();
        if it.h_class == 0.0 && it.h_cluster == 0.0 {
            1.0
        } else if den == 0.0 {
            0.0
        } else {
            (it.mi / den).clamp(0.0, 1.0)
        }
    };
    let homogeneity = if it.h_class == 0.0 {
        1.0
    } else {
        1.0 - it.h_class_given_cluster / it.h_class
    };
    let completeness = if it.h_cluster == 0.0 {
        1.0
    } else {
        1.0 - it.h_cluster_given_class / it.h_cluster
    };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };

    [
        it.h_class_given_cluster / std::f64::consts::LN_2,
        purity,
        pc.recall(),
        pc.folkes_mallows(),
        pc.rogers_tanimoto(),
        pc.f1(),
        pc.kulczynski(),
        nmi,
        pc.sokal_sneath_1(),
        pc.rand(),
        pc.hubert_gamma(),
        homogeneity,
        completeness,
        v_measure,
        pc.jaccard(),
        pc.adjusted_rand(),
        pc.phi(),
        pc.mcnemar(),
        pc.russel_rao(),
        pc.precision(),
        pc.weighted_f1(),
        pc.sokal_sneath_2(),
        adjusted_mutual_info(&t, &it),
    ]
}
