#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn ciams() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ciams"));
    c.env_remove("CIAMS_SEED").env("RUST_LOG", "error");
    c
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = ciams().args(args).output().expect("spawn ciams");
    assert!(
        out.status.success(),
        "ciams {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Two Gaussian blobs `sep` apart along every axis, labels "neg"/"pos".
pub fn blobs_csv(n: usize, p: usize, sep: f64, seed: u64, labeled: bool) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut s = String::new();
    let cols: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
    s.push_str(&cols.join(","));
    s.push_str(if labeled { ",label\n" } else { "\n" });
    for i in 0..n {
        let pos = i % 3 == 0;
        let shift = if pos { sep } else { 0.0 };
        let row: Vec<String> = (0..p)
            .map(|_| format!("{:.6}", z.sample(&mut rng) + shift))
            .collect();
        s.push_str(&row.join(","));
        if labeled {
            let _ = write!(s, ",{}", if pos { "pos" } else { "neg" });
        }
        s.push('\n');
    }
    s
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Small settings so a model trains in seconds.
pub const FAST: [&str; 4] = ["--set", "alpha=1", "--set", "mapper.folds=2"];

/// A model trained once per test binary on three synthetic datasets.
pub fn tiny_model() -> &'static Path {
    static MODEL: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, p) = MODEL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        std::fs::create_dir(&corpus).unwrap();
        for (i, sep) in [0.5, 1.5, 4.0].into_iter().enumerate() {
            write(&corpus.join(format!("blobs{i}.csv")), &blobs_csv(90, 4, sep, i as u64, true));
        }
        let model = dir.path().join("model.ciams");
        let mut args = vec!["train", "--corpus", corpus.to_str().unwrap(), "--out", model.to_str().unwrap()];
        args.extend(FAST);
        run_ok(&args);
        (dir, model)
    });
    p
}
