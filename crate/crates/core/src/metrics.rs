//! Classification metrics and report tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions, {} labels", pred.len(), truth.len())));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::InvalidArgument(format!("class pair ({t}, {p}) out of range for {num_classes} classes")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    /// Classes that were never predicted; their precision is reported as 0.
    pub unpredicted_classes: Vec<usize>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn report(cm: &ConfusionMatrix) -> MetricsReport {
    let m = cm.num_classes();
    let mut precision = Vec::with_capacity(m);
    let mut recall = Vec::with_capacity(m);
    let mut f1 = Vec::with_capacity(m);
    let mut unpredicted = Vec::new();
    for c in 0..m {
        let tp = cm.counts[c][c];
        let predicted: u64 = (0..m).map(|t| cm.counts[t][c]).sum();
        let actual: u64 = cm.counts[c].iter().sum();
        if predicted == 0 {
            unpredicted.push(c);
        }
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    MetricsReport {
        accuracy: ratio(cm.trace(), cm.total()),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        unpredicted_classes: unpredicted,
        confusion: cm.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "text" => Ok(Self::Text),
            other => Err(Error::Config(format!("unknown table format {other:?}"))),
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Header row: method, Acc, Pre, Rec, F1, then one precision column per class.
pub fn table_header(class_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["Method", "Acc", "Pre", "Rec", "F1"].iter().map(|s| s.to_string()).collect();
    h.extend(class_names.iter().cloned());
    h
}

fn table_row(label: &str, r: &MetricsReport) -> Vec<String> {
    let mut row = vec![label.to_string(), pct(r.accuracy), pct(r.macro_precision), pct(r.macro_recall), pct(r.macro_f1)];
    row.extend(r.per_class_precision.iter().map(|&p| pct(p)));
    row
}

/// Render one row per report, values as percentages with two decimals.
/// Per-class columns are named after `class_names`, or `0..M−1` when empty.
pub fn render_table(reports: &[(String, MetricsReport)], class_names: &[String], format: TableFormat) -> Result<String> {
    let Some((_, first)) = reports.first() else {
        return Err(Error::InvalidArgument("no reports to render".into()));
    };
    let names: Vec<String> = if class_names.is_empty() {
        (0..first.per_class_precision.len()).map(|i| i.to_string()).collect()
    } else {
        class_names.to_vec()
    };
    let header = table_header(&names);
    let rows: Vec<Vec<String>> = reports.iter().map(|(l, r)| table_row(l, r)).collect();
    if let Some(bad) = rows.iter().find(|r| r.len() != header.len()) {
        return Err(Error::Shape(format!("row {:?} has {} columns, header {}", bad[0], bad.len(), header.len())));
    }
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(String::from_utf8_lossy(&bytes).into_owned())
        }
        TableFormat::Json => {
            let docs: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let mut obj = serde_json::Map::new();
                    obj.insert(header[0].clone(), r[0].clone().into());
                    for (h, v) in header.iter().zip(r).skip(1) {
                        let n: f64 = v.parse().unwrap_or(f64::NAN);
                        obj.insert(h.clone(), serde_json::json!(n));
                    }
                    serde_json::Value::Object(obj)
                })
                .collect();
            Ok(serde_json::to_string_pretty(&docs)? + "\n")
        }
        TableFormat::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let mut out = line(&header) + "\n";
            for r in &rows {
                out += &line(r);
                out.push('\n');
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let cm = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        let r = report(&cm);
        assert_eq!((r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn off_diagonal_pair() {
        let cm = confusion(&[0], &[2], 3).unwrap();
        assert_eq!(cm.counts[2][0], 1);
        assert_eq!(cm.total(), 1);
        assert!(confusion(&[0, 1], &[0], 2).is_err());
    }

    #[test]
    fn uniform_two_class() {
        let r = report(&ConfusionMatrix { counts: vec![vec![1, 1], vec![1, 1]] });
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.per_class_precision, vec![0.5, 0.5]);
        assert_eq!(r.macro_f1, 0.5);
    }

    #[test]
    fn unpredicted_class_is_flagged() {
        let r = report(&ConfusionMatrix { counts: vec![vec![3, 0], vec![2, 0]] });
        assert_eq!(r.per_class_precision[1], 0.0);
        assert_eq!(r.unpredicted_classes, vec![1]);
        assert!((r.macro_f1 - 0.5 * (2.0 * 0.6 * 1.0 / 1.6)).abs() < 1e-15);
    }

    #[test]
    fn renderings_agree() {
        let perfect = report(&ConfusionMatrix { counts: vec![vec![2, 0], vec![0, 3]] });
        let half = report(&ConfusionMatrix { counts: vec![vec![1, 1], vec![1, 1]] });
        let reports = vec![("a".to_string(), perfect), ("b".to_string(), half)];
        let csv = render_table(&reports, &[], TableFormat::Csv).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "Method,Acc,Pre,Rec,F1,0,1");
        assert_eq!(lines[1], "a,100.00,100.00,100.00,100.00,100.00,100.00");
        assert_eq!(lines[2], "b,50.00,50.00,50.00,50.00,50.00,50.00");
        let json: serde_json::Value = serde_json::from_str(&render_table(&reports, &[], TableFormat::Json).unwrap()).unwrap();
        assert_eq!(json[1]["F1"], 50.0);
        let text = render_table(&reports, &["x".into(), "y".into()], TableFormat::Text).unwrap();
        assert!(text.starts_with("Method"));
        assert_eq!(text.lines().count(), 3);
        assert!(render_table(&[], &[], TableFormat::Csv).is_err());
    }
}
