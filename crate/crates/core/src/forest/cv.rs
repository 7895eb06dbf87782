//! Stratified k-fold cross-validation and grid selection by mean defect F1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_forest, ForestParams, LabeledRow};
use crate::error::{Error, Result};
use crate::metrics::classification_report;
use crate::scalar::Scalar;

/// Fold index per row. Each class is shuffled under `seed` and dealt
/// round-robin, the negatives continuing where the positives stopped, so
/// per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::InvalidParameter(format!(
            "{} rows cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut folds = vec![0; labels.len()];
    for (slot, &i) in positives.iter().chain(&negatives).enumerate() {
        folds[i] = slot % k;
    }
    for fold in 0..k {
        let members = || (0..labels.len()).filter(|&i| folds[i] == fold);
        let pos = members().filter(|&i| labels[i]).count();
        let total = members().count();
        if pos == 0 || pos == total {
            return Err(Error::FoldMissingClass { fold });
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome<G> {
    pub best_index: usize,
    pub best: G,
    /// Mean defect-class F1 per grid point, in grid order.
    pub mean_f1: Vec<f64>,
    /// `fold_f1[g][f]` is grid point `g` on held-out fold `f`.
    pub fold_f1: Vec<Vec<f64>>,
    pub folds: Vec<usize>,
}

/// Cross-validates arbitrary grid points. `fit_predict` trains on the first
/// slice and returns defect predictions for the second; it never sees the
/// held-out labels.
pub fn cross_validate_with<T, G, F>(rows: &[LabeledRow<T>], grid: &[G], k: usize, seed: u64, fit_predict: F) -> Result<CvOutcome<G>>
where
    T: Scalar,
    G: Clone,
    F: Fn(&G, &[LabeledRow<T>], &[Vec<T>]) -> Result<Vec<bool>>,
{
    if grid.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    let labels: Vec<bool> = rows.iter().map(|r| r.defect).collect();
    let folds = stratified_folds(&labels, k, seed)?;

    let mut fold_f1 = Vec::with_capacity(grid.len());
    for point in grid {
        let mut scores = Vec::with_capacity(k);
        for fold in 0..k {
            let train: Vec<LabeledRow<T>> = rows
                .iter()
                .zip(&folds)
                .filter(|(_, &f)| f != fold)
                .map(|(r, _)| r.clone())
                .collect();
            let (held_x, held_y): (Vec<Vec<T>>, Vec<bool>) = rows
                .iter()
                .zip(&folds)
                .filter(|(_, &f)| f == fold)
                .map(|(r, _)| (r.features.clone(), r.defect))
                .unzip();
            let predicted = fit_predict(point, &train, &held_x)?;
            scores.push(classification_report::<f64>(&predicted, &held_y)?.f1);
        }
        fold_f1.push(scores);
    }
    let mean_f1: Vec<f64> = fold_f1
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    let mut best_index = 0;
    for (i, &m) in mean_f1.iter().enumerate() {
        if m > mean_f1[best_index] {
            best_index = i;
        }
    }
    Ok(CvOutcome {
        best_index,
        best: grid[best_index].clone(),
        mean_f1,
        fold_f1,
        folds,
    })
}

/// Forest grid search: mean F1 of the defect class at a 0.5 threshold.
pub fn cross_validate<T: Scalar>(rows: &[LabeledRow<T>], grid: &[ForestParams], k: usize, seed: u64) -> Result<CvOutcome<ForestParams>> {
    cross_validate_with(rows, grid, k, seed, |params, train, held| {
        let forest = train_forest(train, params)?;
        held.iter()
            .map(|x| forest.predict(x, T::lit(crate::aggregate::DEFAULT_THRESHOLD)))
            .collect()
    })
}
