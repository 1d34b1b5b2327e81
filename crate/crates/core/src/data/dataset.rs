use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a training row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Pseudo,
    Synthetic,
}

/// True labels of an unlabeled pool.
///
/// Kept apart from [`Dataset::labels`] so that no training code path can
/// read them by accident; only diagnostics (pseudo-label purity, audit files)
/// call [`HiddenLabels::reveal`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn reveal(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encoded feature matrix with per-row class labels.
///
/// A `None` label is the UNLABELED sentinel. `class_counts` counts labeled
/// rows only.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
    class_counts: Vec<usize>,
    provenance: Vec<Provenance>,
    hidden: Option<HiddenLabels>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<Option<usize>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        Self::with_provenance(features, labels, class_names, vec![Provenance::Original; n])
    }

    pub fn with_provenance(
        features: Array2<f64>,
        labels: Vec<Option<usize>>,
        class_names: Vec<String>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() || provenance.len() != features.nrows() {
            return Err(Error::Shape(format!(
                "{} feature rows, {} labels, {} provenance flags",
                features.nrows(),
                labels.len(),
                provenance.len()
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        let m = class_names.len();
        let mut class_counts = vec![0usize; m];
        for (row, label) in labels.iter().enumerate() {
            if let Some(c) = *label {
                if c >= m {
                    return Err(Error::InvalidArgument(format!(
                        "row {row}: class index {c} out of range for {m} classes"
                    )));
                }
                class_counts[c] += 1;
            }
        }
        Ok(Self {
            features,
            labels,
            class_names,
            class_counts,
            provenance,
            hidden: None,
        })
    }

    /// Fully labeled dataset.
    pub fn labeled(features: Array2<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        Self::new(features, labels.into_iter().map(Some).collect(), class_names)
    }

    /// Unlabeled pool, optionally carrying hidden true labels for diagnostics.
    pub fn unlabeled(
        features: Array2<f64>,
        hidden: Option<Vec<usize>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut ds = Self::new(features, vec![None; n], class_names)?;
        if let Some(h) = hidden {
            if h.len() != n {
                return Err(Error::Shape(format!("{} hidden labels for {n} rows", h.len())));
            }
            ds.hidden = Some(HiddenLabels(h));
        }
        Ok(ds)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn hidden_labels(&self) -> Option<&HiddenLabels> {
        self.hidden.as_ref()
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labeled_count(&self) -> usize {
        self.class_counts.iter().sum()
    }

    /// Labels of a fully labeled dataset.
    pub fn require_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| Error::InvalidArgument(format!("row {i} is unlabeled")))
            })
            .collect()
    }

    /// Rows in the given order; hidden labels follow their rows.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_names: self.class_names.clone(),
            class_counts: {
                let mut counts = vec![0; self.class_names.len()];
                for &r in rows {
                    if let Some(c) = self.labels[r] {
                        counts[c] += 1;
                    }
                }
                counts
            },
            provenance: rows.iter().map(|&r| self.provenance[r]).collect(),
            hidden: self
                .hidden
                .as_ref()
                .map(|h| HiddenLabels(rows.iter().map(|&r| h.0[r]).collect())),
        }
    }

    /// Turn a labeled dataset into an unlabeled pool whose labels become
    /// hidden.
    pub fn into_unlabeled(self) -> Result<Dataset> {
        let hidden = self.require_labels()?;
        Dataset::unlabeled(self.features, Some(hidden), self.class_names)
    }

    pub(crate) fn set_hidden(&mut self, hidden: Option<HiddenLabels>) {
        self.hidden = hidden;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn counts_only_labeled_rows() {
        let ds = Dataset::new(
            array![[0.0], [1.0], [2.0]],
            vec![Some(1), None, Some(1)],
            names(2),
        )
        .unwrap();
        assert_eq!(ds.class_counts(), &[0, 2]);
        assert_eq!(ds.labeled_count(), 2);
    }

    #[test]
    fn rejects_non_finite_and_bad_indices() {
        assert!(Dataset::labeled(array![[f64::NAN]], vec![0], names(1)).is_err());
        assert!(Dataset::labeled(array![[0.0]], vec![3], names(2)).is_err());
    }

    #[test]
    fn unlabeled_pool_hides_labels() {
        let ds = Dataset::labeled(array![[0.0], [1.0]], vec![1, 0], names(2))
            .unwrap()
            .into_unlabeled()
            .unwrap();
        assert!(ds.labels().iter().all(Option::is_none));
        assert_eq!(ds.hidden_labels().unwrap().reveal(), &[1, 0]);
        let sub = ds.select(&[1]);
        assert_eq!(sub.hidden_labels().unwrap().reveal(), &[0]);
    }
}
