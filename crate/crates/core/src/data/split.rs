use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

use super::dataset::Dataset;

/// The three partitions of a prepared dataset, plus the original row indices
/// each was drawn from.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train_labeled: Dataset,
    pub train_unlabeled: Dataset,
    pub test: Dataset,
    pub labeled_rows: Vec<usize>,
    pub unlabeled_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Stratified train/test split followed by stratified labeled subsampling.
///
/// Per class with `n` rows: `round(test_fraction * n)` rows (clamped to
/// `1..n`) go to test; of the remaining `n_train`,
/// `ceil(label_fraction * n_train)` (at least one) are labeled and the rest
/// form the unlabeled pool with hidden labels.
pub fn split(dataset: &Dataset, test_fraction: f64, label_fraction: f64, seed: u64) -> Result<Splits> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if !(label_fraction > 0.0 && label_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "label_fraction must lie in (0, 1], got {label_fraction}"
        )));
    }
    let labels = dataset.require_labels()?;
    let m = dataset.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (row, &c) in labels.iter().enumerate() {
        by_class[c].push(row);
    }

    let mut rng = rng::stream(seed, &[rng::TAG_SPLIT]);
    let (mut labeled, mut unlabeled, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, rows) in by_class.iter_mut().enumerate() {
        let name = &dataset.class_names()[c];
        let n = rows.len();
        if n < 2 {
            return Err(Error::Split(format!(
                "class {name:?} has {n} sample(s); it cannot appear in both train and test, \
                 merge it into another class in the schema"
            )));
        }
        rows.shuffle(&mut rng);
        let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let n_train = n - n_test;
        // The epsilon keeps e.g. 0.01 * 61600 from ceiling to 617.
        let n_lab = ((label_fraction * n_train as f64 - 1e-9).ceil() as usize).clamp(1, n_train);
        test.extend_from_slice(&rows[..n_test]);
        labeled.extend_from_slice(&rows[n_test..n_test + n_lab]);
        unlabeled.extend_from_slice(&rows[n_test + n_lab..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    test.sort_unstable();

    let train_unlabeled = dataset.select(&unlabeled).into_unlabeled()?;
    Ok(Splits {
        train_labeled: dataset.select(&labeled),
        train_unlabeled,
        test: dataset.select(&test),
        labeled_rows: labeled,
        unlabeled_rows: unlabeled,
        test_rows: test,
    })
}
