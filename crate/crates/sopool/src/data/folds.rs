//! Stratified k-fold splits.

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<usize>,
    pub validation_ids: Vec<usize>,
}

/// Deterministic stratified split: per class, a seeded shuffle followed by
/// round-robin assignment of validation members to folds, which keeps every
/// fold's class proportions within one graph of the stratified ideal.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    stratified_kfold_labels(&dataset.labels(), dataset.num_classes, k, seed)
}

pub fn stratified_kfold_labels(
    labels: &[usize],
    num_classes: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (id, &label) in labels.iter().enumerate() {
        per_class[label].push(id);
    }
    for (class, members) in per_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::Stratification {
                class,
                count: members.len(),
                k,
            });
        }
    }

    let rng = Rng::new(seed);
    let mut validation: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, members) in per_class.iter().enumerate() {
        let mut shuffled = members.clone();
        rng.stream(class as u64).shuffle(&mut shuffled);
        for (i, id) in shuffled.into_iter().enumerate() {
            validation[i % k].push(id);
        }
    }

    Ok((0..k)
        .map(|fold| {
            let mut val = validation[fold].clone();
            val.sort_unstable();
            let mut train: Vec<usize> = (0..labels.len()).filter(|id| !val.contains(id)).collect();
            train.sort_unstable();
            FoldSplit {
                fold_index: fold,
                train_ids: train,
                validation_ids: val,
            }
        })
        .collect())
}
