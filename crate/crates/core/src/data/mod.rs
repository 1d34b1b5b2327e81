//! Flow-record ingestion and dataset handling.
//!
//! Raw CSV rows are read against a [`Schema`], encoded by a fitted
//! [`Standardizer`] (z-scored numerics, one-hot categoricals) into a
//! [`Dataset`], then split into labeled, unlabeled and test partitions.

mod container;
mod dataset;
mod preprocess;
mod reader;
mod schema;
mod split;

pub use container::{read_dataset, write_dataset, CONTAINER_MAGIC};
pub use dataset::{Dataset, HiddenLabels, Provenance};
pub use preprocess::{fit_preprocess, transform, NumericStats, Standardizer};
pub use reader::{load_csv, load_csv_with, RawRecord};
pub use schema::{ColumnKind, ColumnSpec, Schema};
pub use split::{split, Splits};
