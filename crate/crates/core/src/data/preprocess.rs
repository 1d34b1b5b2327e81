use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::Dataset;
use super::reader::RawRecord;
use super::schema::{ColumnKind, Schema};

/// Population moments of a numeric column. `std` is `None` for a
/// zero-variance (or all non-finite) column, which encodes to constant 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureEncoder {
    Numeric(NumericStats),
    Categorical { vocabulary: Vec<String> },
}

impl FeatureEncoder {
    fn width(&self) -> usize {
        match self {
            FeatureEncoder::Numeric(_) => 1,
            FeatureEncoder::Categorical { vocabulary } => vocabulary.len(),
        }
    }
}

/// Encoder fitted on training records, one entry per feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub schema_hash: String,
    pub encoders: Vec<FeatureEncoder>,
}

impl Standardizer {
    /// Width of the encoded feature vector.
    pub fn output_dim(&self) -> usize {
        self.encoders.iter().map(FeatureEncoder::width).sum()
    }
}

fn parse_numeric(cell: &str) -> f64 {
    cell.trim().parse::<f64>().unwrap_or(f64::NAN)
}

/// Fit column moments and vocabularies. Non-finite numeric cells are left
/// out of the moments; vocabularies are in first-appearance order.
pub fn fit_preprocess(records: &[RawRecord], schema: &Schema) -> Result<Standardizer> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a standardizer on zero records".into()));
    }
    let encoders = schema
        .feature_columns()
        .enumerate()
        .map(|(j, (_, col))| match col.kind {
            ColumnKind::Numeric => {
                let values: Vec<f64> = records
                    .iter()
                    .map(|r| parse_numeric(&r.values[j]))
                    .filter(|v| v.is_finite())
                    .collect();
                FeatureEncoder::Numeric(moments(&values))
            }
            ColumnKind::Categorical => {
                let mut vocabulary: Vec<String> = Vec::new();
                let mut seen = HashMap::new();
                for r in records {
                    let v = &r.values[j];
                    if !seen.contains_key(v) {
                        seen.insert(v.clone(), vocabulary.len());
                        vocabulary.push(v.clone());
                    }
                }
                FeatureEncoder::Categorical { vocabulary }
            }
            ColumnKind::Ignore => unreachable!("feature_columns skips ignored columns"),
        })
        .collect();
    Ok(Standardizer {
        schema_hash: schema.hash(),
        encoders,
    })
}

fn moments(values: &[f64]) -> NumericStats {
    if values.is_empty() {
        return NumericStats { mean: 0.0, std: None };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    // Relative floor: sums of identical large values can leave rounding noise.
    let std = (std > 1e-12 * mean.abs().max(1.0)).then_some(std);
    NumericStats { mean, std }
}

/// Encode records into a dataset. Unknown categorical values produce an
/// all-zero block; non-finite numeric cells become 0.
pub fn transform(records: &[RawRecord], standardizer: &Standardizer, schema: &Schema) -> Result<Dataset> {
    if standardizer.encoders.len() != schema.feature_count() {
        return Err(Error::Shape(format!(
            "standardizer has {} encoders, schema has {} feature columns",
            standardizer.encoders.len(),
            schema.feature_count()
        )));
    }
    let lookups: Vec<Option<HashMap<&str, usize>>> = standardizer
        .encoders
        .iter()
        .map(|e| match e {
            FeatureEncoder::Categorical { vocabulary } => Some(
                vocabulary.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect(),
            ),
            FeatureEncoder::Numeric(_) => None,
        })
        .collect();

    let d = standardizer.output_dim();
    let mut features = Array2::<f64>::zeros((records.len(), d));
    let mut labels = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let mut row = features.row_mut(i);
        let mut offset = 0;
        for (j, enc) in standardizer.encoders.iter().enumerate() {
            match enc {
                FeatureEncoder::Numeric(stats) => {
                    let x = parse_numeric(&rec.values[j]);
                    row[offset] = match stats.std {
                        Some(std) if x.is_finite() => (x - stats.mean) / std,
                        _ => 0.0,
                    };
                }
                FeatureEncoder::Categorical { .. } => {
                    let lookup = lookups[j].as_ref().expect("categorical lookup");
                    if let Some(&slot) = lookup.get(rec.values[j].as_str()) {
                        row[offset + slot] = 1.0;
                    }
                }
            }
            offset += enc.width();
        }
        let class = schema
            .class_index(&rec.label)
            .ok_or_else(|| Error::UnknownLabel { row: i + 1, label: rec.label.clone() })?;
        labels.push(class);
    }
    // Standardisation of extreme-but-finite cells can still overflow.
    features.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 });
    Dataset::labeled(features, labels, schema.classes.clone())
}
