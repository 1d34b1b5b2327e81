//! Pseudo-label scoring, filtering and rebalancing.
//!
//! Each unlabeled sample receives the argmax of its MC-dropout mean
//! probabilities. It is kept when the standard deviation of that class is at
//! most `kappa` and its mean probability at least `tau`. Kept labels are then
//! downsampled toward the labeled class proportions under an imbalance cap,
//! and short classes are topped up with Borderline-SMOTE.

mod smote;

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::model::McPrediction;
use crate::rng;

pub use smote::{borderline_smote, SmoteOutcome, SyntheticSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Uncertainty threshold.
    pub kappa: f64,
    /// Probability threshold.
    pub tau: f64,
    /// MC-dropout passes.
    pub passes: usize,
    pub max_imbalance_ratio: f64,
    pub smote_k: usize,
    pub smote_m: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kappa: 0.05,
            tau: 0.90,
            passes: 10,
            max_imbalance_ratio: 20.0,
            smote_k: 5,
            smote_m: 10,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("filter: {m}")));
        if !(self.kappa >= 0.0) {
            return fail(format!("kappa {} must be nonnegative", self.kappa));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.passes < 1 {
            return fail("passes must be at least 1".into());
        }
        if !(self.max_imbalance_ratio >= 1.0) {
            return fail(format!("max_imbalance_ratio {} below 1", self.max_imbalance_ratio));
        }
        if self.smote_k < 1 || self.smote_m < 1 {
            return fail("smote_k and smote_m must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub sample_index: usize,
    pub predicted_class: usize,
    pub confidence: f64,
    pub uncertainty: f64,
    pub kept: bool,
}

/// Keep predicate: `uncertainty ≤ kappa` and `confidence ≥ tau`.
pub fn passes_filter(uncertainty: f64, confidence: f64, config: &FilterConfig) -> bool {
    uncertainty <= config.kappa && confidence >= config.tau
}

/// One pseudo-label per prediction; `sample_index` is the position in `mc`.
pub fn score(mc: &[McPrediction], config: &FilterConfig) -> Vec<PseudoLabel> {
    mc.iter()
        .enumerate()
        .map(|(i, p)| {
            let c = p.predicted_class();
            let confidence = p.mean_probs[c];
            let uncertainty = p.std[c];
            PseudoLabel {
                sample_index: i,
                predicted_class: c,
                confidence,
                uncertainty,
                kept: passes_filter(uncertainty, confidence, config),
            }
        })
        .collect()
}

/// Result of [`cap_imbalance`].
#[derive(Debug, Clone, PartialEq)]
pub struct CapOutcome {
    /// Surviving pseudo-labels, sorted by sample index.
    pub labels: Vec<PseudoLabel>,
    /// Per-class count proportional to the labeled distribution. Classes
    /// whose survivors fall short of it are candidates for oversampling.
    pub targets: Vec<usize>,
}

impl CapOutcome {
    pub fn counts(&self, num_classes: usize) -> Vec<usize> {
        class_counts(&self.labels, num_classes)
    }

    /// Samples to synthesise per class: the shortfall against the target,
    /// never beyond the largest capped class.
    pub fn deficits(&self, num_classes: usize) -> Vec<usize> {
        let counts = self.counts(num_classes);
        let ceiling = counts.iter().copied().max().unwrap_or(0);
        counts
            .iter()
            .zip(&self.targets)
            .map(|(&c, &t)| t.min(ceiling).saturating_sub(c))
            .collect()
    }
}

fn class_counts(labels: &[PseudoLabel], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for l in labels {
        if l.predicted_class < num_classes {
            counts[l.predicted_class] += 1;
        }
    }
    counts
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Downsample kept pseudo-labels toward the labeled class proportions.
///
/// With `π_j` the labeled share of class `j` and `c_j` its kept count, the
/// scale `s` is the median of `c_j / π_j` over classes with both positive.
/// Class `j` keeps `a_j = min(c_j, ⌈s·π_j⌉)`, then every class is cut to
/// `⌊max_ratio · min_nonzero a⌋`. Survivors are drawn uniformly with a stream
/// keyed on `seed` and the class. Entries with `kept == false` are ignored.
pub fn cap_imbalance(kept: &[PseudoLabel], labeled_counts: &[usize], max_ratio: f64, seed: u64) -> CapOutcome {
    let m = labeled_counts.len();
    let mut by_class: Vec<Vec<&PseudoLabel>> = vec![Vec::new(); m];
    for l in kept.iter().filter(|l| l.kept && l.predicted_class < m) {
        by_class[l.predicted_class].push(l);
    }
    let total_labeled: usize = labeled_counts.iter().sum();
    let share: Vec<f64> = labeled_counts
        .iter()
        .map(|&c| if total_labeled == 0 { 0.0 } else { c as f64 / total_labeled as f64 })
        .collect();
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();

    let mut ratios: Vec<f64> = (0..m)
        .filter(|&j| counts[j] > 0 && share[j] > 0.0)
        .map(|j| counts[j] as f64 / share[j])
        .collect();
    let targets: Vec<usize> = if ratios.is_empty() {
        counts.clone()
    } else {
        let s = median(&mut ratios);
        (0..m)
            .map(|j| if share[j] > 0.0 { (s * share[j] - 1e-9).ceil().max(1.0) as usize } else { counts[j] })
            .collect()
    };

    let mut allowed: Vec<usize> = (0..m).map(|j| counts[j].min(targets[j])).collect();
    if let Some(&min_nonzero) = allowed.iter().filter(|&&a| a > 0).min() {
        let limit = ((max_ratio.max(1.0) * min_nonzero as f64) + 1e-9).floor().max(1.0) as usize;
        for a in allowed.iter_mut() {
            *a = (*a).min(limit);
        }
    }

    let mut labels = Vec::new();
    for (j, members) in by_class.into_iter().enumerate() {
        let mut members = members;
        if members.len() > allowed[j] {
            let mut r = rng::stream(seed, &[rng::TAG_CAP, j as u64]);
            members.shuffle(&mut r);
            members.truncate(allowed[j]);
        }
        labels.extend(members.into_iter().cloned());
    }
    labels.sort_by_key(|l| l.sample_index);
    CapOutcome { labels, targets }
}

/// Labeled rows, then kept pseudo-labeled rows of `unlabeled`, then synthetic
/// rows, each tagged with its provenance.
pub fn assemble_round_dataset(
    labeled: &Dataset,
    unlabeled: &Dataset,
    pseudo: &[PseudoLabel],
    synthetic: &[SyntheticSample],
) -> Result<Dataset> {
    let m = labeled.num_classes();
    let d = labeled.dim();
    if !unlabeled.is_empty() && unlabeled.dim() != d {
        return Err(Error::Shape(format!("labeled width {d}, unlabeled width {}", unlabeled.dim())));
    }
    let base_labels = labeled.require_labels()?;
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for l in pseudo.iter().filter(|l| l.kept) {
        if l.sample_index >= unlabeled.len() {
            return Err(Error::InvalidArgument(format!(
                "pseudo-label index {} out of range for {} unlabeled rows",
                l.sample_index,
                unlabeled.len()
            )));
        }
        if !seen.insert(l.sample_index) {
            return Err(Error::InvalidArgument(format!("duplicate pseudo-label index {}", l.sample_index)));
        }
        if l.predicted_class >= m {
            return Err(Error::InvalidArgument(format!(
                "pseudo-label class {} not in the {m} labeled classes",
                l.predicted_class
            )));
        }
        rows.push(l);
    }
    for s in synthetic {
        if s.class >= m {
            return Err(Error::InvalidArgument(format!("synthetic class {} not in the {m} labeled classes", s.class)));
        }
        if s.features.len() != d {
            return Err(Error::Shape(format!("synthetic sample width {}, expected {d}", s.features.len())));
        }
    }

    let n = labeled.len() + rows.len() + synthetic.len();
    let mut features = Array2::<f64>::zeros((n, d));
    features.slice_mut(ndarray::s![..labeled.len(), ..]).assign(labeled.features());
    let mut labels: Vec<Option<usize>> = base_labels.into_iter().map(Some).collect();
    let mut provenance = vec![Provenance::Original; labeled.len()];
    let mut at = labeled.len();
    for l in rows {
        features.row_mut(at).assign(&unlabeled.features().index_axis(Axis(0), l.sample_index));
        labels.push(Some(l.predicted_class));
        provenance.push(Provenance::Pseudo);
        at += 1;
    }
    for s in synthetic {
        features.row_mut(at).assign(&ndarray::ArrayView1::from(&s.features));
        labels.push(Some(s.class));
        provenance.push(Provenance::Synthetic);
        at += 1;
    }
    Dataset::with_provenance(features, labels, labeled.class_names().to_vec(), provenance)
}

/// Fraction of kept pseudo-labels whose class matches the hidden truth, per
/// class and overall. Diagnostics only.
pub fn purity(labels: &[PseudoLabel], hidden: &[usize]) -> (f64, BTreeMap<usize, f64>) {
    let mut hits = BTreeMap::<usize, (usize, usize)>::new();
    for l in labels.iter().filter(|l| l.kept) {
        let e = hits.entry(l.predicted_class).or_default();
        e.1 += 1;
        if hidden.get(l.sample_index) == Some(&l.predicted_class) {
            e.0 += 1;
        }
    }
    let (good, all) = hits.values().fold((0, 0), |(g, a), &(h, n)| (g + h, a + n));
    let overall = if all == 0 { 0.0 } else { good as f64 / all as f64 };
    (overall, hits.into_iter().map(|(c, (h, n))| (c, h as f64 / n as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(mean: Vec<f64>, std: Vec<f64>) -> McPrediction {
        McPrediction { mean_probs: mean, std, passes: 10 }
    }

    fn label(i: usize, c: usize) -> PseudoLabel {
        PseudoLabel {
            sample_index: i,
            predicted_class: c,
            confidence: 1.0,
            uncertainty: 0.0,
            kept: true,
        }
    }

    #[test]
    fn ideal_prediction_is_kept() {
        let out = score(&[mc(vec![0.0, 1.0], vec![0.0, 0.0])], &FilterConfig::default());
        assert!(out[0].kept);
        assert_eq!(out[0].predicted_class, 1);
    }

    #[test]
    fn thresholds_are_inclusive() {
        let cfg = FilterConfig::default();
        let out = score(&[mc(vec![0.9, 0.1], vec![0.05, 0.05])], &cfg);
        assert!(out[0].kept);
        let up = score(&[mc(vec![0.9, 0.1], vec![0.05 + 1e-12, 0.0])], &cfg);
        assert!(!up[0].kept);
        let down = score(&[mc(vec![0.9 - 1e-12, 0.1], vec![0.0, 0.0])], &cfg);
        assert!(!down[0].kept);
    }

    #[test]
    fn ties_resolve_low_and_use_that_std() {
        let out = score(&[mc(vec![0.5, 0.5], vec![0.3, 0.0])], &FilterConfig::default());
        assert_eq!(out[0].predicted_class, 0);
        assert_eq!(out[0].uncertainty, 0.3);
    }

    #[test]
    fn cap_within_ratio_is_noop() {
        let kept: Vec<_> = (0..30).map(|i| label(i, i % 3)).collect();
        let out = cap_imbalance(&kept, &[4, 4, 4], 20.0, 1);
        assert_eq!(out.labels, kept);
    }

    #[test]
    fn cap_reduces_head_class() {
        let mut kept: Vec<_> = (0..1000).map(|i| label(i, 0)).collect();
        kept.extend((1000..1010).map(|i| label(i, 1)));
        for labeled in [[100, 1], [5, 5], [50, 50]] {
            let out = cap_imbalance(&kept, &labeled, 20.0, 3);
            let counts = out.counts(2);
            assert!(counts[0] <= 200, "{counts:?}");
            assert_eq!(counts[1], 10);
        }
    }

    #[test]
    fn cap_single_class_and_empty() {
        let kept: Vec<_> = (0..50).map(|i| label(i, 2)).collect();
        assert_eq!(cap_imbalance(&kept, &[3, 3, 3], 20.0, 0).labels.len(), 50);
        assert!(cap_imbalance(&[], &[3, 3], 20.0, 0).labels.is_empty());
    }

    #[test]
    fn cap_follows_labeled_proportions() {
        let kept: Vec<_> = (0..900).map(|i| label(i, i % 3)).collect();
        let out = cap_imbalance(&kept, &[6, 3, 1], 20.0, 9);
        // s = median(300/0.6, 300/0.3, 300/0.1) = 1000.
        assert_eq!(out.targets, vec![600, 300, 100]);
        assert_eq!(out.counts(3), vec![300, 300, 100]);
        assert_eq!(out.deficits(3), vec![0, 0, 0]);
    }

    #[test]
    fn assemble_counts_and_provenance() {
        let labeled = Dataset::labeled(Array2::zeros((100, 2)), (0..100).map(|i| i % 2).collect(), vec!["a".into(), "b".into()]).unwrap();
        let unlabeled = Dataset::unlabeled(Array2::ones((80, 2)), None, vec!["a".into(), "b".into()]).unwrap();
        let pseudo: Vec<_> = (0..50).map(|i| label(i, 1)).collect();
        let synth: Vec<_> = (0..10)
            .map(|_| SyntheticSample { features: vec![0.5, 0.5], class: 0, parents: (0, 1), gap: 0.5 })
            .collect();
        let ds = assemble_round_dataset(&labeled, &unlabeled, &pseudo, &synth).unwrap();
        assert_eq!(ds.len(), 160);
        assert_eq!(ds.class_counts(), &[60, 100]);
        let count = |p| ds.provenance().iter().filter(|&&q| q == p).count();
        assert_eq!((count(Provenance::Original), count(Provenance::Pseudo), count(Provenance::Synthetic)), (100, 50, 10));

        let same = assemble_round_dataset(&labeled, &unlabeled, &[], &[]).unwrap();
        assert_eq!(same.features(), labeled.features());
        assert_eq!(same.labels(), labeled.labels());

        let dup = vec![label(3, 0), label(3, 1)];
        assert!(assemble_round_dataset(&labeled, &unlabeled, &dup, &[]).is_err());
        assert!(assemble_round_dataset(&labeled, &unlabeled, &[label(1, 5)], &[]).is_err());
    }

    #[test]
    fn purity_against_hidden() {
        let labels = vec![label(0, 1), label(1, 1), label(2, 0)];
        let (overall, per) = purity(&labels, &[1, 0, 0]);
        assert!((overall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(per[&1], 0.5);
    }
}
