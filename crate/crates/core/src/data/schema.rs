use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// Present in the file but not a feature (the label column, difficulty
    /// scores, identifiers).
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column layout and class mapping of a CSV flow dataset.
///
/// `columns` lists every cell of a row in file order, including the label
/// column. Raw labels are mapped through `class_merges`; labels that are
/// neither merged nor listed in `classes` fall back to `default_class`, and
/// are rejected when there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    pub classes: Vec<String>,
    #[serde(default)]
    pub class_merges: BTreeMap<String, String>,
    #[serde(default)]
    pub default_class: Option<String>,
}

fn default_true() -> bool {
    true
}

const NSL_KDD: &str = include_str!("../../schemas/nsl_kdd.json");
const CICIDS2017: &str = include_str!("../../schemas/cicids2017.json");

impl Schema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Shipped schema for NSL-KDD (41 features, 11 classes).
    pub fn nsl_kdd() -> Self {
        Self::from_json(NSL_KDD).expect("bundled NSL-KDD schema is valid")
    }

    /// Shipped schema for the CICIDS2017 MachineLearningCVE files (78
    /// features, 11 classes).
    pub fn cicids2017() -> Self {
        Self::from_json(CICIDS2017).expect("bundled CICIDS2017 schema is valid")
    }

    /// Resolve a schema reference: `builtin:nsl-kdd`, `builtin:cicids2017`
    /// or a path to a JSON document.
    pub fn resolve(reference: &str) -> Result<Self> {
        match reference {
            "builtin:nsl-kdd" => Ok(Self::nsl_kdd()),
            "builtin:cicids2017" => Ok(Self::cicids2017()),
            path => Self::from_path(Path::new(path)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.trim()) {
                return Err(Error::Schema(format!("duplicate column {:?}", col.name)));
            }
        }
        if !self.columns.iter().any(|c| c.name.trim() == self.label_column.trim()) {
            return Err(Error::Schema(format!(
                "label column {:?} is not among the columns",
                self.label_column
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::Schema("class list is empty".into()));
        }
        let classes: HashSet<&str> = self.classes.iter().map(String::as_str).collect();
        if classes.len() != self.classes.len() {
            return Err(Error::Schema("class list has duplicates".into()));
        }
        for (from, to) in &self.class_merges {
            if !classes.contains(to.as_str()) {
                return Err(Error::Schema(format!(
                    "merge {from:?} -> {to:?} targets a class that is not in the class list"
                )));
            }
        }
        if let Some(default) = &self.default_class {
            if !classes.contains(default.as_str()) {
                return Err(Error::Schema(format!(
                    "default class {default:?} is not in the class list"
                )));
            }
        }
        if self.feature_columns().next().is_none() {
            return Err(Error::Schema("no feature columns".into()));
        }
        Ok(())
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub(crate) fn label_position(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.name.trim() == self.label_column.trim())
            .expect("validated schema has a label column")
    }

    /// Feature columns in file order, with their position in the raw row.
    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        let label = self.label_column.trim();
        self.columns
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.kind != ColumnKind::Ignore && c.name.trim() != label)
    }

    pub fn feature_count(&self) -> usize {
        self.feature_columns().count()
    }

    /// Map a raw label to its final class index.
    pub fn class_index(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        let name = match self.class_merges.get(raw) {
            Some(target) => target.as_str(),
            None if self.classes.iter().any(|c| c == raw) => raw,
            None => self.default_class.as_deref()?,
        };
        self.classes.iter().position(|c| c == name)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
