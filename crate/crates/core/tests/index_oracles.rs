use ciams_core::cluster::{ClusterAssignment, ClusterMethod};
use ciams_core::indices::{external_indices, internal_indices, Geometry, EXTERNAL_NAMES, INTERNAL_NAMES};
use ciams_core::Matrix;
use proptest::prelude::*;

fn ext(name: &str) -> usize {
    EXTERNAL_NAMES.iter().position(|&n| n == name).unwrap()
}

fn int(name: &str) -> usize {
    INTERNAL_NAMES.iter().position(|&n| n == name).unwrap()
}

/// Direct pair loop, independent of the contingency table.
fn pair_loop(classes: &[i8], clusters: &[usize]) -> (f64, f64, f64, f64) {
    let (mut yy, mut yn, mut ny, mut nn) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            match (classes[i] == classes[j], clusters[i] == clusters[j]) {
                (true, true) => yy += 1.0,
                (true, false) => yn += 1.0,
                (false, true) => ny += 1.0,
                (false, false) => nn += 1.0,
            }
        }
    }
    (yy, yn, ny, nn)
}

fn oracle(classes: &[i8], clusters: &[usize]) -> Vec<(&'static str, f64)> {
    let (a, b, c, d) = pair_loop(classes, clusters);
    let t = a + b + c + d;
    // Γ as the Pearson correlation of the two 0/1 pair indicators
    let xs: Vec<(f64, f64)> = {
        let mut v = Vec::new();
        for i in 0..classes.len() {
            for j in i + 1..classes.len() {
                v.push((
                    f64::from(u8::from(classes[i] == classes[j])),
                    f64::from(u8::from(clusters[i] == clusters[j])),
                ));
            }
        }
        v
    };
    let mx = xs.iter().map(|p| p.0).sum::<f64>() / t;
    let my = xs.iter().map(|p| p.1).sum::<f64>() / t;
    let cov: f64 = xs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let vx: f64 = xs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let vy: f64 = xs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ari = if b == 0.0 && c == 0.0 {
        1.0
    } else {
        // expected-index form
        let sum_pairs = a + c; // same-cluster pairs
        let sum_class = a + b; // same-class pairs
        let expected = sum_pairs * sum_class / t;
        (a - expected) / (0.5 * (sum_pairs + sum_class) - expected)
    };
    vec![
        ("rand", (a + d) / t),
        ("adj_rand", ari),
        ("jaccard", a / (a + b + c)),
        ("folkes_mallows", a / ((a + b) * (a + c)).sqrt()),
        ("rogers_tanimoto", (a + d) / (a + d + 2.0 * (b + c))),
        ("sokal_sneath_1", a / (a + 2.0 * (b + c))),
        ("sokal_sneath_2", (a + d) / (a + d + (b + c) / 2.0)),
        ("russel_rao", a / t),
        ("hubert_gamma", cov / (vx * vy).sqrt()),
        ("phi", (a * d - b * c) / ((a + b) * (a + c) * (c + d) * (b + d)).sqrt()),
        ("kulczynski", (a / (a + c) + a / (a + b)) / 2.0),
        ("mcnemar", (d - c) / (d + c).sqrt()),
    ]
}

fn close(x: f64, y: f64) -> bool {
    (x.is_nan() && y.is_nan()) || x == y || (x - y).abs() < 1e-9
}

fn assignment(clusters: &[usize]) -> ClusterAssignment {
    ClusterAssignment::from_labels(ClusterMethod::KMeans, clusters)
}

fn check_all(classes: &[i8], clusters: &[usize]) {
    let got = external_indices(classes, &assignment(clusters));
    for (name, want) in oracle(classes, clusters) {
        assert!(
            close(got[ext(name)], want),
            "{name}: got {} want {want} for {classes:?} {clusters:?}",
            got[ext(name)]
        );
    }
}

fn for_each_labeling(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut v = vec![0usize; n];
    loop {
        f(&v);
        let mut i = 0;
        while i < n {
            v[i] += 1;
            if v[i] < k {
                break;
            }
            v[i] = 0;
            i += 1;
        }
        if i == n {
            return;
        }
    }
}

#[test]
fn pair_indices_match_loop_oracle_small_n_exhaustive() {
    for n in 2..=7 {
        for_each_labeling(n, 2, |cls| {
            let classes: Vec<i8> = cls.iter().map(|&c| if c == 1 { 1 } else { -1 }).collect();
            for_each_labeling(n, 3, |clusters| check_all(&classes, clusters));
        });
    }
}

#[test]
fn pair_indices_match_loop_oracle_ten_points() {
    let class_sets: [[i8; 10]; 3] = [
        [1, 1, 1, 1, 1, -1, -1, -1, -1, -1],
        [1, -1, 1, -1, 1, -1, 1, -1, -1, -1],
        [-1, -1, -1, -1, -1, -1, -1, -1, -1, 1],
    ];
    for classes in &class_sets {
        for_each_labeling(10, 3, |clusters| check_all(classes, clusters));
    }
}

fn entropy_bits(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).log2()).sum()
}

#[test]
fn information_identities() {
    for_each_labeling(8, 2, |cls| {
        let classes: Vec<i8> = cls.iter().map(|&c| if c == 1 { 1 } else { -1 }).collect();
        for_each_labeling(8, 3, |clusters| {
            let v = external_indices(&classes, &assignment(clusters));
            let (h, c, vm) = (v[ext("homogeneity")], v[ext("completeness")], v[ext("v_measure")]);
            let hm = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
            assert!((vm - hm).abs() < 1e-9);
            let nmi = v[ext("norm_mutual_info")];
            assert!((0.0..=1.0).contains(&nmi));
            // conditional entropy of the classes, cluster by cluster
            let mut cond = 0.0;
            let mut pure = true;
            for k in 0..3 {
                let members: Vec<i8> = classes
                    .iter()
                    .zip(clusters)
                    .filter(|(_, &c)| c == k)
                    .map(|(&l, _)| l)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let pos = members.iter().filter(|&&l| l == 1).count() as f64;
                let neg = members.len() as f64 - pos;
                pure &= pos == 0.0 || neg == 0.0;
                cond += members.len() as f64 / 8.0 * entropy_bits(&[pos, neg]);
            }
            let e = v[ext("entropy")];
            assert!((e - cond).abs() < 1e-9, "entropy {e} vs {cond}");
            assert_eq!(e.abs() < 1e-12, pure);
        });
    });
}

#[test]
fn adjusted_mutual_info_reference_values() {
    // identical partitions
    let v = external_indices(&[-1, -1, 1, 1], &assignment(&[0, 0, 1, 1]));
    assert!((v[ext("adj_mutual_info")] - 1.0).abs() < 1e-9);
    // independent partitions of a balanced design: mutual information is 0
    // and sits below its expectation, so the adjusted score is negative.
    let v = external_indices(&[-1, -1, 1, 1], &assignment(&[0, 1, 0, 1]));
    assert!(v[ext("adj_mutual_info")] < 0.0);
}

fn random_partition() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (6usize..20).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), n),
            prop::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #[test]
    fn ratio_indices_ignore_uniform_scaling((rows, labels) in random_partition(), scale in 0.01f64..100.0) {
        let a = assignment(&labels);
        prop_assume!(a.k >= 2 && a.sizes().iter().all(|&s| s >= 2));
        let x = Matrix::from_rows(&rows);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let y = Matrix::from_rows(&scaled);
        let vx = internal_indices(&x, &a, &Geometry::new(&x));
        let vy = internal_indices(&y, &a, &Geometry::new(&y));
        for name in ["silhouette", "dunn", "davies_bouldin", "c_index"] {
            let (p, q) = (vx[int(name)], vy[int(name)]);
            prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0), "{} {} {}", name, p, q);
        }
    }

    #[test]
    fn indices_ignore_cluster_relabeling((rows, labels) in random_partition(), perm in Just([2usize, 0, 1])) {
        let x = Matrix::from_rows(&rows);
        let classes: Vec<i8> = (0..labels.len()).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let a = ClusterAssignment { method: ClusterMethod::KMeans, k: 3, labels: labels.clone(), noise_mask: vec![false; labels.len()] };
        let b = ClusterAssignment { labels: labels.iter().map(|&l| perm[l]).collect(), ..a.clone() };
        let geo = Geometry::new(&x);
        let ia = internal_indices(&x, &ClusterAssignment::from_labels(ClusterMethod::KMeans, &a.labels), &geo);
        let ib = internal_indices(&x, &ClusterAssignment::from_labels(ClusterMethod::KMeans, &b.labels), &geo);
        for i in 0..17 {
            prop_assert!(close(ia[i], ib[i]) || (ia[i] - ib[i]).abs() <= 1e-9 * ia[i].abs(), "{}", INTERNAL_NAMES[i]);
        }
        let ea = external_indices(&classes, &a);
        let eb = external_indices(&classes, &b);
        for i in 0..23 {
            prop_assert!(close(ea[i], eb[i]), "{}", EXTERNAL_NAMES[i]);
        }
    }

    #[test]
    fn bounded_indices_stay_bounded((rows, labels) in random_partition()) {
        let x = Matrix::from_rows(&rows);
        let classes: Vec<i8> = (0..labels.len()).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let a = ClusterAssignment::from_labels(ClusterMethod::KMeans, &labels);
        let e = external_indices(&classes, &a);
        for name in ["rand", "jaccard", "purity", "precision", "recall", "f1", "folkes_mallows", "norm_mutual_info"] {
            let v = ciams_core::indices::sanitize(e[ext(name)]);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{} = {}", name, v);
        }
        prop_assert!(ciams_core::indices::sanitize(e[ext("adj_rand")]) <= 1.0 + 1e-12);
        let s = ciams_core::indices::sanitize(internal_indices(&x, &a, &Geometry::new(&x))[int("silhouette")]);
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
