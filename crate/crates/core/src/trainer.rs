//! Supervised warm-up and self-training rounds.
//!
//! Round 0 trains on the labeled set alone. Each later round labels the
//! unlabeled pool with MC-dropout predictions of the current model, filters
//! and rebalances those pseudo-labels, and retrains on labeled + pseudo +
//! synthetic rows, starting from the current weights with a fresh optimizer.

use log::{info, warn};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::loss::{beta_schedule, hybrid_with_beta, LossConfig};
use crate::metrics::{confusion, report, MetricsReport};
use crate::model::{argmax_rows, backward, forward, forward_with_cache, mc_predict, Adam, ModelConfig, ModelParams, Mode};
use crate::pseudolabel::{assemble_round_dataset, borderline_smote, cap_imbalance, score, FilterConfig, PseudoLabel};
use crate::rng;

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Epochs of the supervised warm-up.
    pub warmup_epochs: usize,
    pub epochs_per_round: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Whether pseudo-labeled and synthetic rows take part in the contrastive
    /// term. They always take part in the cross-entropy.
    pub pseudo_in_scl: bool,
    /// Labeled share held out per class for model selection; 0 selects by
    /// training loss.
    pub validation_fraction: f64,
    pub loss: LossConfig,
    pub filter: FilterConfig,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            warmup_epochs: 100,
            epochs_per_round: 50,
            rounds: 3,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: model.seed,
            pseudo_in_scl: true,
            validation_fraction: 0.0,
            loss: LossConfig::default(),
            filter: FilterConfig::default(),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("train: {m}")));
        if self.warmup_epochs < 1 || self.epochs_per_round < 1 {
            return fail("epoch counts must be at least 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size {} below 2", self.batch_size));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!("validation_fraction {} outside [0, 1)", self.validation_fraction));
        }
        self.model.validate()?;
        self.loss.validate(self.model.num_classes)?;
        self.filter.validate()
    }
}

/// Mean losses of one epoch, weighted by batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_scl: f64,
    pub l_wce: f64,
    pub l_hy: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub batch_size: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 0 is the supervised warm-up.
    pub round: usize,
    pub pseudo_generated: usize,
    pub pseudo_kept: usize,
    pub pseudo_after_cap: usize,
    pub synthetic: usize,
    pub train_rows: usize,
    pub train_class_counts: Vec<usize>,
    pub training: TrainingLog,
    pub warnings: Vec<String>,
    /// Metrics on the monitor set, when one was supplied.
    pub metrics: Option<MetricsReport>,
    /// Every scored pseudo-label of the round; `kept` marks those that passed
    /// the filter and survived the cap.
    #[serde(skip)]
    pub pseudo_labels: Vec<PseudoLabel>,
}

/// Hook invoked after each round with the report and the round's weights.
pub trait RoundObserver {
    fn on_round(&mut self, report: &RoundReport, params: &ModelParams) -> Result<()>;
}

impl<F: FnMut(&RoundReport, &ModelParams) -> Result<()>> RoundObserver for F {
    fn on_round(&mut self, report: &RoundReport, params: &ModelParams) -> Result<()> {
        self(report, params)
    }
}

/// Batches for one epoch. Every class is shuffled and dealt two rows at a
/// time across the batches, starting at a random batch, so each batch holds
/// a proportional share of every class and same-class rows arrive in pairs.
fn epoch_batches(labels: &[usize], num_classes: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let n = labels.len();
    let nb = n.div_ceil(batch_size).max(1);
    let mut batches = vec![Vec::with_capacity(batch_size + 2); nb];
    let mut r = rng::stream(seed, &[rng::TAG_BATCHES]);
    for class in 0..num_classes {
        let mut rows: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(&mut r);
        let offset = r.random_range(0..nb);
        for (k, pair) in rows.chunks(2).enumerate() {
            batches[(offset + k) % nb].extend_from_slice(pair);
        }
    }
    for b in batches.iter_mut() {
        b.shuffle(&mut r);
    }
    batches.retain(|b| !b.is_empty());
    batches
}

/// Deterministic eval-mode class predictions.
pub fn predict(params: &ModelParams, config: &ModelConfig, features: ArrayView2<f64>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(features.nrows());
    for chunk in features.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        let probs = forward(params, config, chunk, Mode::Eval)?.probabilities;
        out.extend(argmax_rows(probs.view()));
    }
    Ok(out)
}

pub fn evaluate_checkpoint(params: &ModelParams, config: &ModelConfig, test: &Dataset) -> Result<MetricsReport> {
    if test.num_classes() > config.num_classes {
        return Err(Error::InvalidArgument(format!(
            "test set has {} classes, model predicts {}",
            test.num_classes(),
            config.num_classes
        )));
    }
    let truth = test.require_labels()?;
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let pred = predict(params, config, test.features().view())?;
    Ok(report(&confusion(&pred, &truth, config.num_classes)?))
}

struct Phase<'a> {
    data: &'a Dataset,
    epochs: usize,
    index: usize,
    validation: Option<&'a Dataset>,
}

/// Optimise `params` on one dataset and return the best epoch's weights.
fn train_phase(params: ModelParams, phase: Phase<'_>, config: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    let data = phase.data;
    let labels = data.require_labels()?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let counts = data.class_counts().to_vec();
    if config.loss.use_class_weights {
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!(
                "class {c} ({}) has no training rows",
                data.class_names().get(c).map(String::as_str).unwrap_or("?")
            )));
        }
    }
    let mut warnings = Vec::new();
    let mut batch_size = config.batch_size;
    if batch_size > labels.len() {
        let msg = format!("batch size {batch_size} exceeds {} training rows; using {}", labels.len(), labels.len());
        warn!("{msg}");
        warnings.push(msg);
        batch_size = labels.len();
    }
    let original: Vec<bool> = data.provenance().iter().map(|&p| p == Provenance::Original).collect();

    let mut params = params;
    let mut adam = Adam::new(&params);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut epochs = Vec::with_capacity(phase.epochs);
    let m = config.model.num_classes;

    for epoch in 0..phase.epochs {
        let beta = beta_schedule(epoch, phase.epochs, &config.loss);
        let epoch_seed = rng::derive(config.seed, &[rng::TAG_TRAIN, phase.index as u64, epoch as u64]);
        let batches = epoch_batches(&labels, m, batch_size, epoch_seed);
        let (mut s_scl, mut s_wce, mut s_hy) = (0.0, 0.0, 0.0);
        for (b, rows) in batches.iter().enumerate() {
            let x = data.features().select(Axis(0), rows);
            let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let mode = Mode::Stochastic {
                seed: rng::derive(epoch_seed, &[b as u64]),
            };
            let (out, cache) = forward_with_cache(&params, &config.model, x.view(), mode)?;
            let scl_rows: Option<Vec<usize>> = (!config.pseudo_in_scl)
                .then(|| (0..rows.len()).filter(|&i| original[rows[i]]).collect());
            let loss = hybrid_with_beta(
                out.embedding.view(),
                out.probabilities.view(),
                &y,
                &counts,
                beta,
                scl_rows.as_deref(),
                &config.loss,
            )?;
            let grads = backward(&params, &config.model, &cache, &loss.grad_z, &loss.grad_logits)?;
            adam.step(&mut params, &grads, config.learning_rate)?;
            let w = rows.len() as f64;
            s_scl += w * loss.l_scl;
            s_wce += w * loss.l_wce;
            s_hy += w * loss.l_hy;
        }
        let n = labels.len() as f64;
        let log = EpochLog {
            epoch,
            l_scl: s_scl / n,
            l_wce: s_wce / n,
            l_hy: s_hy / n,
            beta,
        };
        // Lower is better: training loss, or negated validation macro-F1.
        let criterion = match phase.validation {
            Some(v) => -evaluate_checkpoint(&params, &config.model, v)?.macro_f1,
            None => log.l_hy,
        };
        if !criterion.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        if best.as_ref().is_none_or(|(c, _, _)| criterion < *c) {
            best = Some((criterion, epoch, params.clone()));
        }
        epochs.push(log);
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok((
        best_params,
        TrainingLog {
            epochs,
            best_epoch,
            batch_size,
            warnings,
        },
    ))
}

fn check_dataset(ds: &Dataset, config: &TrainConfig, what: &str) -> Result<()> {
    if !ds.is_empty() && ds.dim() != config.model.input_dim {
        return Err(Error::Shape(format!(
            "{what} has {} features, model expects {}",
            ds.dim(),
            config.model.input_dim
        )));
    }
    if ds.num_classes() != config.model.num_classes {
        return Err(Error::Shape(format!(
            "{what} has {} classes, model expects {}",
            ds.num_classes(),
            config.model.num_classes
        )));
    }
    Ok(())
}

/// Split off a per-class validation share of the labeled rows, keeping at
/// least one training row per class.
fn hold_out(labeled: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    if fraction <= 0.0 {
        return Ok((labeled.clone(), None));
    }
    let labels = labeled.require_labels()?;
    let mut r = rng::stream(seed, &[rng::TAG_VALIDATION]);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in 0..labeled.num_classes() {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut r);
        let n_val = ((fraction * rows.len() as f64).round() as usize).min(rows.len().saturating_sub(1));
        val.extend_from_slice(&rows[..n_val]);
        train.extend_from_slice(&rows[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    let val = (!val.is_empty()).then(|| labeled.select(&val));
    Ok((labeled.select(&train), val))
}

/// Supervised training on the labeled set alone.
pub fn train_supervised(labeled: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    config.validate()?;
    check_dataset(labeled, config, "labeled set")?;
    let (train, val) = hold_out(labeled, config.validation_fraction, config.seed)?;
    let params = ModelParams::init(&config.model)?;
    train_phase(
        params,
        Phase {
            data: &train,
            epochs: config.warmup_epochs,
            index: 0,
            validation: val.as_ref(),
        },
        config,
    )
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub params: ModelParams,
    /// `reports[0]` is the warm-up; `reports[k]` is round `k`.
    pub reports: Vec<RoundReport>,
}

/// Warm-up followed by `config.rounds` pseudo-labeling rounds.
pub fn self_train(labeled: &Dataset, unlabeled: &Dataset, config: &TrainConfig) -> Result<SelfTrainOutcome> {
    self_train_observed(labeled, unlabeled, config, None, &mut |_: &RoundReport, _: &ModelParams| Ok(()))
}

/// [`self_train`] with an optional monitor set evaluated after every round
/// and an observer receiving each round's report and weights.
///
/// Training never reads the hidden labels of `unlabeled`.
pub fn self_train_observed(
    labeled: &Dataset,
    unlabeled: &Dataset,
    config: &TrainConfig,
    monitor: Option<&Dataset>,
    observer: &mut dyn RoundObserver,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    check_dataset(labeled, config, "labeled set")?;
    check_dataset(unlabeled, config, "unlabeled set")?;
    if let Some(m) = monitor {
        check_dataset(m, config, "monitor set")?;
    }
    if unlabeled.labeled_count() != 0 {
        return Err(Error::InvalidArgument("unlabeled pool contains labeled rows".into()));
    }
    let num_classes = config.model.num_classes;
    let (train_labeled, val) = hold_out(labeled, config.validation_fraction, config.seed)?;
    let evaluate = |p: &ModelParams| monitor.map(|m| evaluate_checkpoint(p, &config.model, m)).transpose();

    let (mut params, log) = train_phase(
        ModelParams::init(&config.model)?,
        Phase {
            data: &train_labeled,
            epochs: config.warmup_epochs,
            index: 0,
            validation: val.as_ref(),
        },
        config,
    )?;
    let warmup = RoundReport {
        round: 0,
        pseudo_generated: 0,
        pseudo_kept: 0,
        pseudo_after_cap: 0,
        synthetic: 0,
        train_rows: train_labeled.len(),
        train_class_counts: train_labeled.class_counts().to_vec(),
        training: log,
        warnings: Vec::new(),
        metrics: evaluate(&params)?,
        pseudo_labels: Vec::new(),
    };
    info!("warm-up done: {} rows, best epoch {}", warmup.train_rows, warmup.training.best_epoch);
    observer.on_round(&warmup, &params)?;
    let mut reports = vec![warmup];

    let rounds = if unlabeled.is_empty() { 0 } else { config.rounds };
    for round in 1..=rounds {
        let mut warnings = Vec::new();
        let mc = mc_predict(
            &params,
            &config.model,
            unlabeled.features().view(),
            config.filter.passes,
            rng::derive(config.seed, &[rng::TAG_MC, round as u64]),
        )?;
        let mut scored = score(&mc, &config.filter);
        let kept_count = scored.iter().filter(|p| p.kept).count();
        let cap = cap_imbalance(
            &scored,
            train_labeled.class_counts(),
            config.filter.max_imbalance_ratio,
            rng::derive(config.seed, &[rng::TAG_CAP, round as u64]),
        );
        let survivors: std::collections::BTreeSet<usize> = cap.labels.iter().map(|p| p.sample_index).collect();
        for p in scored.iter_mut() {
            p.kept = survivors.contains(&p.sample_index);
        }

        let synthetic = if cap.labels.is_empty() {
            let msg = format!("round {round}: no pseudo-label passed the filter; retraining on labeled rows only");
            warn!("{msg}");
            warnings.push(msg);
            Vec::new()
        } else {
            // Oversampling pool: labeled rows plus surviving pseudo rows.
            let pool_rows = train_labeled.len() + cap.labels.len();
            let mut pool = Array2::<f64>::zeros((pool_rows, config.model.input_dim));
            pool.slice_mut(ndarray::s![..train_labeled.len(), ..]).assign(train_labeled.features());
            let mut classes = train_labeled.require_labels()?;
            for (k, p) in cap.labels.iter().enumerate() {
                pool.row_mut(train_labeled.len() + k).assign(&unlabeled.features().row(p.sample_index));
                classes.push(p.predicted_class);
            }
            let smote = borderline_smote(
                pool.view(),
                &classes,
                &cap.deficits(num_classes),
                &config.filter,
                rng::derive(config.seed, &[rng::TAG_SMOTE, round as u64]),
            )?;
            for w in &smote.warnings {
                warnings.push(format!("round {round}: {w}"));
            }
            smote.samples
        };

        let data = assemble_round_dataset(&train_labeled, unlabeled, &cap.labels, &synthetic)?;
        let (next, log) = train_phase(
            params,
            Phase {
                data: &data,
                epochs: config.epochs_per_round,
                index: round,
                validation: val.as_ref(),
            },
            config,
        )?;
        params = next;
        let report = RoundReport {
            round,
            pseudo_generated: scored.len(),
            pseudo_kept: kept_count,
            pseudo_after_cap: cap.labels.len(),
            synthetic: synthetic.len(),
            train_rows: data.len(),
            train_class_counts: data.class_counts().to_vec(),
            training: log,
            warnings,
            metrics: evaluate(&params)?,
            pseudo_labels: scored,
        };
        info!(
            "round {round}: kept {}/{} pseudo-labels, {} after cap, {} synthetic",
            report.pseudo_kept, report.pseudo_generated, report.pseudo_after_cap, report.synthetic
        );
        observer.on_round(&report, &params)?;
        reports.push(report);
    }
    Ok(SelfTrainOutcome { params, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    fn small_model(d: usize, m: usize) -> ModelConfig {
        ModelConfig {
            expand_dim: 32,
            channels: 4,
            length: 8,
            conv_channels: vec![8, 8, 8, 8, 8],
            repr_dim: 8,
            proj_hidden_dim: 8,
            proj_dim: 4,
            dropout_rate: 0.1,
            ..ModelConfig::for_dims(d, m)
        }
    }

    fn toy() -> Dataset {
        generate(&toy_cfg()).unwrap()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            warmup_epochs: 15,
            epochs_per_round: 3,
            rounds: 1,
            batch_size: 16,
            ..TrainConfig::new(small_model(2, 2))
        }
    }

    #[test]
    fn batches_cover_every_row_once() {
        let labels: Vec<usize> = (0..103).map(|i| if i < 90 { 0 } else { 1 + i % 3 }).collect();
        let batches = epoch_batches(&labels, 4, 16, 5);
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(batches.len(), 7);
        assert!(batches.iter().all(|b| b.iter().filter(|&&r| labels[r] == 0).count() >= 2));
    }

    #[test]
    fn supervised_loss_decreases_and_is_reproducible() {
        let ds = toy();
        let cfg = config();
        let (p1, log) = train_supervised(&ds, &cfg).unwrap();
        assert!(log.epochs.last().unwrap().l_hy <= log.epochs[0].l_hy);
        let (p2, _) = train_supervised(&ds, &cfg).unwrap();
        assert_eq!(p1, p2);
        let r = evaluate_checkpoint(&p1, &cfg.model, &ds).unwrap();
        assert!(r.accuracy > 0.9, "{}", r.accuracy);
        assert_eq!(r, evaluate_checkpoint(&p1, &cfg.model, &ds).unwrap());
    }

    #[test]
    fn zero_rounds_or_empty_pool_match_supervised() {
        let ds = toy();
        let (sup, _) = train_supervised(&ds, &config()).unwrap();
        let empty = Dataset::unlabeled(Array2::zeros((0, 2)), None, ds.class_names().to_vec()).unwrap();
        let out = self_train(&ds, &empty, &config()).unwrap();
        assert_eq!(out.params, sup);
        assert_eq!(out.reports.len(), 1);
        let pool = toy().into_unlabeled().unwrap();
        let zero = TrainConfig { rounds: 0, ..config() };
        assert_eq!(self_train(&ds, &pool, &zero).unwrap().params, sup);
    }

    #[test]
    fn rounds_report_consistent_counts() {
        let ds = toy();
        let pool = generate(&SyntheticConfig { seed: 9, ..toy_cfg() }).unwrap().into_unlabeled().unwrap();
        let cfg = TrainConfig { rounds: 2, ..config() };
        let mut seen = Vec::new();
        let out = self_train_observed(&ds, &pool, &cfg, Some(&ds), &mut |r: &RoundReport, _: &ModelParams| {
            seen.push(r.round);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
        for r in &out.reports[1..] {
            assert!(r.pseudo_kept <= r.pseudo_generated);
            assert!(r.pseudo_after_cap <= r.pseudo_kept);
            assert_eq!(r.pseudo_generated, pool.len());
            assert_eq!(r.train_rows, ds.len() + r.pseudo_after_cap + r.synthetic);
            assert!(r.metrics.is_some());
        }
    }

    fn toy_cfg() -> SyntheticConfig {
        SyntheticConfig {
            num_classes: 2,
            samples: 60,
            imbalance_ratio: 1.0,
            dim: 2,
            separation: 4.0,
            noise_std: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn evaluation_rejects_wider_test_set() {
        let ds = toy();
        let cfg = config();
        let params = ModelParams::init(&cfg.model).unwrap();
        let wide = Dataset::labeled(Array2::zeros((1, 2)), vec![2], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert!(evaluate_checkpoint(&params, &cfg.model, &wide).is_err());
        assert!(evaluate_checkpoint(&params, &cfg.model, &ds).is_ok());
    }
}
