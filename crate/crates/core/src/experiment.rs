//! Run configuration, prepared splits and run-directory artifacts.
//!
//! A run directory holds:
//!
//! ```text
//! config.json                 resolved configuration
//! checkpoints/round_k.bin     weights after round k (0 = warm-up)
//! reports/round_k.json        counts, losses and test metrics of round k
//! audit/pseudo_round_k.csv    every scored pseudo-label of round k
//! curves/loss.csv             per-epoch loss components
//! summary.json                final metrics
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{
    fit_preprocess, load_csv, read_dataset, split, transform, write_dataset, Dataset, RawRecord, Schema, Standardizer,
};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::metrics::{render_table, MetricsReport, TableFormat};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelParams};
use crate::pseudolabel::FilterConfig;
use crate::rng;
use crate::synthetic::{self, SyntheticConfig};
use crate::trainer::{evaluate_checkpoint, self_train_observed, RoundObserver, RoundReport, TrainConfig};

/// Where raw samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// A CSV file read against a schema (`builtin:nsl-kdd`,
    /// `builtin:cicids2017` or a path to a schema JSON).
    Csv { path: PathBuf, schema: String },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub label_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            label_fraction: 0.01,
            seed: 0,
        }
    }
}

/// Architecture settings that do not depend on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub expand_dim: usize,
    pub channels: usize,
    pub length: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub proj_hidden_dim: usize,
    pub proj_dim: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::for_dims(1, 2);
        Self {
            expand_dim: m.expand_dim,
            channels: m.channels,
            length: m.length,
            conv_channels: m.conv_channels,
            kernel_size: m.kernel_size,
            dropout_rate: m.dropout_rate,
            proj_hidden_dim: m.proj_hidden_dim,
            proj_dim: m.proj_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub warmup_epochs: usize,
    pub epochs_per_round: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub pseudo_in_scl: bool,
    pub validation_fraction: f64,
    pub loss: LossConfig,
    pub filter: FilterConfig,
    pub model: ModelSettings,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::new(ModelConfig::for_dims(1, 2));
        Self {
            warmup_epochs: t.warmup_epochs,
            epochs_per_round: t.epochs_per_round,
            rounds: t.rounds,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: 0,
            pseudo_in_scl: t.pseudo_in_scl,
            validation_fraction: t.validation_fraction,
            loss: t.loss,
            filter: t.filter,
            model: ModelSettings::default(),
        }
    }
}

impl TrainSettings {
    /// Full training configuration for data of width `input_dim` and
    /// `num_classes` classes.
    pub fn resolve(&self, input_dim: usize, num_classes: usize) -> Result<TrainConfig> {
        let m = &self.model;
        let model = ModelConfig {
            input_dim,
            expand_dim: m.expand_dim,
            channels: m.channels,
            length: m.length,
            conv_channels: m.conv_channels.clone(),
            kernel_size: m.kernel_size,
            dropout_rate: m.dropout_rate,
            repr_dim: m.conv_channels.last().copied().unwrap_or(0),
            proj_hidden_dim: m.proj_hidden_dim,
            proj_dim: m.proj_dim,
            num_classes,
            seed: self.seed,
        };
        let config = TrainConfig {
            warmup_epochs: self.warmup_epochs,
            epochs_per_round: self.epochs_per_round,
            rounds: self.rounds,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            pseudo_in_scl: self.pseudo_in_scl,
            validation_fraction: self.validation_fraction,
            loss: self.loss.clone(),
            filter: self.filter.clone(),
            model,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    /// Directory of prepared splits; when absent, splits are prepared in
    /// memory from `data`.
    pub prepared_dir: Option<PathBuf>,
    pub split: SplitConfig,
    /// Share of the unlabeled pool used for self-training.
    pub unlabeled_fraction: f64,
    pub train: TrainSettings,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticConfig::default()),
            prepared_dir: None,
            split: SplitConfig::default(),
            unlabeled_fraction: 1.0,
            train: TrainSettings::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Apply `key=value` overrides with dotted keys, e.g.
    /// `train.loss.temperature=0.1`. Values are parsed as JSON, falling back
    /// to a plain string.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for (key, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("override: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return Err(Error::Config(format!("unlabeled_fraction {} outside [0, 1]", self.unlabeled_fraction)));
        }
        if !(self.split.label_fraction > 0.0 && self.split.label_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "label_fraction {} must lie in (0, 1]; no labeled data otherwise",
                self.split.label_fraction
            )));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} must lie in (0, 1)", self.split.test_fraction)));
        }
        match &self.data {
            DataSource::Csv { path, schema } => {
                if self.prepared_dir.as_ref().is_none_or(|d| !d.join(MANIFEST).exists()) && !path.exists() {
                    return Err(Error::Config(format!("data file {} does not exist", path.display())));
                }
                Schema::resolve(schema)?;
            }
            DataSource::Synthetic(s) => s.validate()?,
        }
        Ok(())
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(Error::Config(format!("override {key:?}: {part:?} is not inside an object")));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("empty override key {key:?}")))
}

/// Per-class counts of every partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub schema_name: String,
    pub schema_hash: String,
    pub split: SplitConfig,
    pub class_names: Vec<String>,
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
    pub total: Vec<usize>,
    pub feature_dim: usize,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub test: Dataset,
    pub manifest: Manifest,
    pub standardizer: Option<Standardizer>,
}

const MANIFEST: &str = "manifest.json";
const STANDARDIZER: &str = "standardizer.json";
const LABELED: &str = "train_labeled.bin";
const UNLABELED: &str = "train_unlabeled.bin";
const TEST: &str = "test.bin";

fn hidden_counts(ds: &Dataset) -> Vec<usize> {
    let mut counts = vec![0; ds.num_classes()];
    if let Some(h) = ds.hidden_labels() {
        for &c in h.reveal() {
            counts[c] += 1;
        }
    }
    counts
}

fn manifest_for(source: String, schema_name: String, schema_hash: String, split_cfg: &SplitConfig, l: &Dataset, u: &Dataset, t: &Dataset) -> Manifest {
    let unlabeled = hidden_counts(u);
    let total = (0..l.num_classes())
        .map(|c| l.class_counts()[c] + unlabeled[c] + t.class_counts()[c])
        .collect();
    Manifest {
        source,
        schema_name,
        schema_hash,
        split: split_cfg.clone(),
        class_names: l.class_names().to_vec(),
        labeled: l.class_counts().to_vec(),
        unlabeled,
        test: t.class_counts().to_vec(),
        total,
        feature_dim: l.dim(),
    }
}

/// Read, encode and split the configured data source. The standardizer is
/// fitted on training rows only.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let sc = &config.split;
    match &config.data {
        DataSource::Synthetic(s) => {
            let ds = synthetic::generate(s)?;
            let parts = split(&ds, sc.test_fraction, sc.label_fraction, sc.seed)?;
            let hash = json_digest(s)?;
            let manifest = manifest_for(
                "synthetic".into(),
                "synthetic".into(),
                hash,
                sc,
                &parts.train_labeled,
                &parts.train_unlabeled,
                &parts.test,
            );
            Ok(Prepared {
                labeled: parts.train_labeled,
                unlabeled: parts.train_unlabeled,
                test: parts.test,
                manifest,
                standardizer: None,
            })
        }
        DataSource::Csv { path, schema } => {
            let schema = Schema::resolve(schema)?;
            let records = load_csv(path, &schema)?;
            prepare_records(&records, &schema, sc, path.display().to_string())
        }
    }
}

/// [`prepare`] for records already in memory.
pub fn prepare_records(records: &[RawRecord], schema: &Schema, sc: &SplitConfig, source: String) -> Result<Prepared> {
    let labels: Vec<usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            schema
                .class_index(&r.label)
                .ok_or_else(|| Error::UnknownLabel { row: i + 1, label: r.label.clone() })
        })
        .collect::<Result<_>>()?;
    let skeleton = Dataset::labeled(Array2::zeros((records.len(), 0)), labels, schema.classes.clone())?;
    let parts = split(&skeleton, sc.test_fraction, sc.label_fraction, sc.seed)?;
    let mut train_rows: Vec<usize> = parts.labeled_rows.iter().chain(&parts.unlabeled_rows).copied().collect();
    train_rows.sort_unstable();
    let train_records: Vec<RawRecord> = train_rows.iter().map(|&i| records[i].clone()).collect();
    let standardizer = fit_preprocess(&train_records, schema)?;
    let encoded = transform(records, &standardizer, schema)?;
    let labeled = encoded.select(&parts.labeled_rows);
    let unlabeled = encoded.select(&parts.unlabeled_rows).into_unlabeled()?;
    let test = encoded.select(&parts.test_rows);
    let manifest = manifest_for(source, schema.name.clone(), schema.hash(), sc, &labeled, &unlabeled, &test);
    Ok(Prepared {
        labeled,
        unlabeled,
        test,
        manifest,
        standardizer: Some(standardizer),
    })
}

fn json_digest<T: Serialize>(value: &T) -> Result<String> {
    use sha2::Digest;
    Ok(hex::encode(sha2::Sha256::digest(serde_json::to_vec(value)?)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

impl Prepared {
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let hash = &self.manifest.schema_hash;
        write_dataset(&dir.join(LABELED), &self.labeled, hash)?;
        write_dataset(&dir.join(UNLABELED), &self.unlabeled, hash)?;
        write_dataset(&dir.join(TEST), &self.test, hash)?;
        if let Some(s) = &self.standardizer {
            write_json(&dir.join(STANDARDIZER), s)?;
        }
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
        let load = |name: &str| -> Result<Dataset> {
            let path = dir.join(name);
            let (ds, hash) = read_dataset(&path)?;
            if hash != manifest.schema_hash {
                return Err(Error::Container {
                    path: path.clone(),
                    reason: format!("schema hash {hash} does not match manifest {}", manifest.schema_hash),
                });
            }
            Ok(ds)
        };
        let standardizer_path = dir.join(STANDARDIZER);
        let standardizer = if standardizer_path.exists() { Some(read_json(&standardizer_path)?) } else { None };
        Ok(Self {
            labeled: load(LABELED)?,
            unlabeled: load(UNLABELED)?,
            test: load(TEST)?,
            manifest,
            standardizer,
        })
    }

    /// Splits from `prepared_dir` when it holds a manifest, otherwise
    /// prepared in memory.
    pub fn obtain(config: &RunConfig) -> Result<Self> {
        match &config.prepared_dir {
            Some(dir) if dir.join(MANIFEST).exists() => Self::read(dir),
            _ => prepare(config),
        }
    }
}

/// Seeded uniform subsample of `fraction` of the pool; hidden labels follow
/// their rows.
pub fn subsample_unlabeled(pool: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("unlabeled fraction {fraction} outside [0, 1]")));
    }
    if fraction >= 1.0 {
        return Ok(pool.clone());
    }
    let keep = (fraction * pool.len() as f64).round() as usize;
    let mut rows: Vec<usize> = (0..pool.len()).collect();
    rows.shuffle(&mut rng::stream(seed, &[rng::TAG_SUBSAMPLE]));
    rows.truncate(keep);
    rows.sort_unstable();
    Ok(pool.select(&rows))
}

/// Writes checkpoints, reports, audits and loss curves as rounds finish.
pub struct RunDirectory<'a> {
    root: PathBuf,
    model: ModelConfig,
    class_names: Vec<String>,
    schema_hash: String,
    unlabeled: &'a Dataset,
    curves: csv::Writer<fs::File>,
}

impl<'a> RunDirectory<'a> {
    pub fn create<T: Serialize>(root: &Path, resolved: &T, model: &ModelConfig, prepared: &Prepared, unlabeled: &'a Dataset) -> Result<Self> {
        for sub in ["checkpoints", "reports", "audit", "curves"] {
            create_dir(&root.join(sub))?;
        }
        write_json(&root.join("config.json"), resolved)?;
        let curves_path = root.join("curves").join("loss.csv");
        let mut curves = csv::Writer::from_path(&curves_path)?;
        curves.write_record(["round", "epoch", "l_scl", "l_wce", "l_hy", "beta"])?;
        Ok(Self {
            root: root.to_path_buf(),
            model: model.clone(),
            class_names: prepared.labeled.class_names().to_vec(),
            schema_hash: prepared.manifest.schema_hash.clone(),
            unlabeled,
            curves,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_audit(&self, report: &RoundReport) -> Result<()> {
        let path = self.root.join("audit").join(format!("pseudo_round_{}.csv", report.round));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["sample_index", "predicted", "confidence", "uncertainty", "kept", "hidden_true_label"])?;
        let hidden = self.unlabeled.hidden_labels();
        for p in &report.pseudo_labels {
            let truth = hidden.and_then(|h| h.reveal().get(p.sample_index)).map(|c| c.to_string()).unwrap_or_default();
            w.write_record([
                p.sample_index.to_string(),
                p.predicted_class.to_string(),
                p.confidence.to_string(),
                p.uncertainty.to_string(),
                p.kept.to_string(),
                truth,
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

impl RoundObserver for RunDirectory<'_> {
    fn on_round(&mut self, report: &RoundReport, params: &ModelParams) -> Result<()> {
        let checkpoint = Checkpoint {
            config: self.model.clone(),
            params: params.clone(),
            optimizer: None,
            metadata: serde_json::json!({
                "round": report.round,
                "class_names": self.class_names,
                "schema_hash": self.schema_hash,
            }),
        };
        save_checkpoint(&self.root.join("checkpoints").join(format!("round_{}.bin", report.round)), &checkpoint)?;
        write_json(&self.root.join("reports").join(format!("round_{}.json", report.round)), report)?;
        if report.round > 0 {
            self.write_audit(report)?;
        }
        for e in &report.training.epochs {
            self.curves.write_record([
                report.round.to_string(),
                e.epoch.to_string(),
                e.l_scl.to_string(),
                e.l_wce.to_string(),
                e.l_hy.to_string(),
                e.beta.to_string(),
            ])?;
        }
        let curves_path = self.root.join("curves").join("loss.csv");
        self.curves.flush().map_err(|e| Error::io(&curves_path, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    /// Test metrics after every round; `rounds[0]` is the warm-up.
    pub rounds: Vec<MetricsReport>,
    pub final_metrics: MetricsReport,
    pub class_names: Vec<String>,
    pub unlabeled_rows: usize,
    #[serde(skip)]
    pub params: Option<ModelParams>,
}

/// Everything persisted as `config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedRun<'a> {
    pub run: &'a RunConfig,
    pub train: &'a TrainConfig,
    pub manifest: &'a Manifest,
}

/// Self-train (or, with `rounds = 0`, supervised-train) on prepared splits,
/// evaluating on the test split after every round. Artifacts go to
/// `run_dir` when given.
pub fn run_selftrain(config: &RunConfig, prepared: &Prepared, run_dir: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let train = config.train.resolve(prepared.labeled.dim(), prepared.labeled.num_classes())?;
    let pool = subsample_unlabeled(&prepared.unlabeled, config.unlabeled_fraction, config.split.seed ^ train.seed)?;
    let outcome = match run_dir {
        Some(dir) => {
            let resolved = ResolvedRun {
                run: config,
                train: &train,
                manifest: &prepared.manifest,
            };
            let mut observer = RunDirectory::create(dir, &resolved, &train.model, prepared, &pool)?;
            let out = self_train_observed(&prepared.labeled, &pool, &train, Some(&prepared.test), &mut observer)?;
            drop(observer);
            out
        }
        None => {
            let mut noop = |_: &RoundReport, _: &ModelParams| Ok(());
            self_train_observed(&prepared.labeled, &pool, &train, Some(&prepared.test), &mut noop)?
        }
    };
    let rounds: Vec<MetricsReport> = outcome.reports.iter().filter_map(|r| r.metrics.clone()).collect();
    let summary = RunSummary {
        final_metrics: rounds.last().cloned().expect("warm-up metrics"),
        rounds,
        class_names: prepared.labeled.class_names().to_vec(),
        unlabeled_rows: pool.len(),
        params: Some(outcome.params),
    };
    if let Some(dir) = run_dir {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

/// The four loss configurations compared by the ablation.
pub const ABLATION_GRID: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

pub fn ablation_label(scl: bool, weights: bool) -> String {
    let on = |b: bool| if b { "on" } else { "off" };
    format!("scl={},wce_weights={}", on(scl), on(weights))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    /// `(label, use_scl, use_class_weights, test metrics)` in grid order.
    pub rows: Vec<(String, bool, bool, MetricsReport)>,
}

impl AblationResult {
    /// Precision and macro-F1 per configuration, one column each.
    pub fn comparison(&self, format: TableFormat) -> Result<String> {
        let header: Vec<String> = std::iter::once("Metric".to_string()).chain(self.rows.iter().map(|r| r.0.clone())).collect();
        let pct = |v: f64| format!("{:.2}", v * 100.0);
        let rows: Vec<Vec<String>> = vec![
            std::iter::once("Pre".to_string()).chain(self.rows.iter().map(|r| pct(r.3.macro_precision))).collect(),
            std::iter::once("F1".to_string()).chain(self.rows.iter().map(|r| pct(r.3.macro_f1))).collect(),
        ];
        match format {
            TableFormat::Json => {
                let doc: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|(label, scl, w, m)| {
                        serde_json::json!({
                            "config": label, "scl": scl, "wce_weights": w,
                            "Pre": (m.macro_precision * 10000.0).round() / 100.0,
                            "F1": (m.macro_f1 * 10000.0).round() / 100.0,
                        })
                    })
                    .collect();
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
            TableFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&header)?;
                for r in &rows {
                    w.write_record(r)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
                Ok(String::from_utf8_lossy(&bytes).into_owned())
            }
            TableFormat::Text => {
                let widths: Vec<usize> = (0..header.len())
                    .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
                    .collect();
                let line = |cells: &[String]| {
                    cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ") + "\n"
                };
                Ok(line(&header) + &rows.iter().map(|r| line(r)).collect::<String>())
            }
        }
    }

    /// Full per-class table of every configuration.
    pub fn table(&self, class_names: &[String], format: TableFormat) -> Result<String> {
        let reports: Vec<(String, MetricsReport)> = self.rows.iter().map(|r| (r.0.clone(), r.3.clone())).collect();
        render_table(&reports, class_names, format)
    }
}

/// Train the 2x2 grid of loss toggles on identical splits and seeds.
/// Each configuration gets its own subdirectory of `run_dir`.
pub fn run_ablation(config: &RunConfig, prepared: &Prepared, run_dir: Option<&Path>) -> Result<AblationResult> {
    let mut rows = Vec::new();
    for (scl, weights) in ABLATION_GRID {
        let mut c = config.clone();
        c.train.loss.use_scl = scl;
        c.train.loss.use_class_weights = weights;
        let label = ablation_label(scl, weights);
        let dir = run_dir.map(|d| d.join(&label));
        let summary = run_selftrain(&c, prepared, dir.as_deref())?;
        rows.push((label, scl, weights, summary.final_metrics));
    }
    let result = AblationResult { rows };
    if let Some(dir) = run_dir {
        create_dir(dir)?;
        write_json(&dir.join("ablation.json"), &result)?;
    }
    Ok(result)
}

/// Evaluate a checkpoint on a dataset container.
pub fn evaluate_files(checkpoint: &Path, dataset: &Path) -> Result<MetricsReport> {
    let ck = load_checkpoint(checkpoint)?;
    let (ds, _) = read_dataset(dataset)?;
    if let Some(names) = ck.metadata.get("class_names").and_then(Value::as_array) {
        for name in ds.class_names() {
            if !names.iter().any(|n| n.as_str() == Some(name)) {
                return Err(Error::InvalidArgument(format!("class {name:?} is not known to the checkpoint")));
            }
        }
    }
    evaluate_checkpoint(&ck.params, &ck.config, &ds)
}

/// One sweep point: a name and its overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub name: String,
    pub overrides: Vec<(String, String)>,
}

/// Cartesian product of `key -> values` axes, in axis order.
pub fn sweep_grid(axes: &[(String, Vec<String>)]) -> Vec<SweepPoint> {
    let mut points = vec![SweepPoint { name: String::new(), overrides: Vec::new() }];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                let short = key.rsplit('.').next().unwrap_or(key);
                let tag = format!("{short}={v}");
                q.name = if q.name.is_empty() { tag } else { format!("{}_{tag}", q.name) };
                q.overrides.push((key.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Run every sweep point, at most `workers` at a time, each in
/// `root/<point name>`.
pub fn run_sweep(base: &RunConfig, points: &[SweepPoint], root: &Path, workers: usize) -> Vec<(String, Result<RunSummary>)> {
    let workers = workers.max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(Vec::with_capacity(points.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers.min(points.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(point) = points.get(i) else { break };
                let outcome = base.with_overrides(&point.overrides).and_then(|cfg| {
                    let prepared = Prepared::obtain(&cfg)?;
                    run_selftrain(&cfg, &prepared, Some(&root.join(&point.name)))
                });
                results.lock().expect("sweep results").push((i, point.name.clone(), outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("sweep results");
    results.sort_by_key(|r| r.0);
    let out: Vec<(String, Result<RunSummary>)> = results.into_iter().map(|(_, n, r)| (n, r)).collect();
    let table: Vec<(String, MetricsReport)> = out
        .iter()
        .filter_map(|(n, r)| r.as_ref().ok().map(|s| (n.clone(), s.final_metrics.clone())))
        .collect();
    if !table.is_empty() {
        if let Ok(text) = render_table(&table, &[], TableFormat::Csv) {
            let _ = fs::create_dir_all(root).and_then(|_| fs::File::create(root.join("sweep.csv"))).and_then(|mut f| f.write_all(text.as_bytes()));
        }
    }
    out
}
