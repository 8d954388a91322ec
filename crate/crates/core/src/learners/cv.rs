//! Fold assignment.

use rand::seq::SliceRandom;

use crate::data::POSITIVE;
use crate::error::{CiamsError, Result};
use crate::seed;

/// Train/validation row indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

fn folds_from_ids(ids: &[usize], k: usize) -> Vec<Fold> {
    (0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|&i| ids[i] == f);
            Fold { train, valid }
        })
        .collect()
}

/// Number of stratified folds usable for these labels: `folds` reduced to
/// the minority count.
pub fn effective_folds(labels: &[i8], folds: usize) -> Result<usize> {
    let pos = labels.iter().filter(|&&l| l == POSITIVE).count();
    let minority = pos.min(labels.len() - pos);
    if minority < 2 {
        return Err(CiamsError::ClassTooSmall(format!(
            "a class has {minority} member(s); cross-validation needs at least 2"
        )));
    }
    Ok(folds.clamp(2, minority))
}

/// Stratified k-fold split; every fold sees both classes on both sides
/// when `k` does not exceed the minority count.
pub fn stratified_folds(labels: &[i8], k: usize, seed: u64) -> Vec<Fold> {
    let mut rng = seed::rng(seed);
    let mut ids = vec![0; labels.len()];
    let mut offset = 0;
    for class in [POSITIVE, -POSITIVE] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for (j, &r) in rows.iter().enumerate() {
            ids[r] = (j + offset) % k;
        }
        offset += rows.len();
    }
    folds_from_ids(&ids, k)
}

/// Plain shuffled k-fold split.
pub fn kfold(n: usize, k: usize, seed: u64) -> Vec<Fold> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seed::rng(seed));
    let mut ids = vec![0; n];
    for (j, &r) in rows.iter().enumerate() {
        ids[r] = j % k;
    }
    folds_from_ids(&ids, k)
}

/// k-fold split that keeps every group on one side of each fold.
/// Groups are shuffled and dealt round-robin.
pub fn group_kfold(groups: &[String], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let mut names: Vec<&String> = groups.iter().collect();
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(CiamsError::InvalidInput(
            "grouped cross-validation needs at least two groups".into(),
        ));
    }
    let k = k.min(names.len());
    names.shuffle(&mut seed::rng(seed));
    let fold_of: std::collections::HashMap<&String, usize> =
        names.iter().enumerate().map(|(j, g)| (*g, j % k)).collect();
    let ids: Vec<usize> = groups.iter().map(|g| fold_of[g]).collect();
    Ok(folds_from_ids(&ids, k))
}
