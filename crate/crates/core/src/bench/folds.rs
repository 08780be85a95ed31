use rand::seq::SliceRandom;

use crate::datagen::rng_for;
use crate::error::{CalibError, Result};
use crate::simplex::PredictionDataset;

/// RNG stream reserved for fold assignment.
const FOLD_STREAM: u64 = 0x000f_01d5;

/// Stratified k-fold assignment: each class is shuffled and dealt
/// round-robin, continuing from where the previous class stopped, so
/// per-class counts across folds differ by at most one.
///
/// Returns the fold (0-based) of every sample.
pub fn stratified_folds(
    dataset: &PredictionDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(CalibError::InvalidArgument(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let counts = dataset.class_counts();
    if let Some(k) = counts.iter().position(|&n| n < folds) {
        return Err(CalibError::InvalidDataset(format!(
            "class {} has {} samples, fewer than the {folds} folds requested; \
             every training split would not contain it. Use fewer folds",
            k + 1,
            counts[k]
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_class[y - 1].push(i);
    }
    let mut rng = rng_for(seed, FOLD_STREAM);
    let mut assignment = vec![0; dataset.len()];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

/// `(train, test)` index lists for fold `f`.
pub fn split(assignment: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != f)
}
