use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

use super::schema::Schema;

/// One CSV row: the feature cells in schema order plus the raw label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub values: Vec<String>,
    pub label: String,
}

/// Read every row of `path`. Rows of the wrong width and rows whose label
/// cannot be mapped to a class are errors carrying the 1-based line number.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_with(file, schema, schema.has_header)
}

pub fn load_csv_with<R: Read>(input: R, schema: &Schema, has_header: bool) -> Result<Vec<RawRecord>> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);

    let expected = schema.column_count();
    let label_pos = schema.label_position();
    let feature_pos: Vec<usize> = schema.feature_columns().map(|(i, _)| i).collect();

    let mut records = Vec::new();
    let mut record = csv::ByteRecord::new();
    let mut line = 0usize;
    while reader.read_byte_record(&mut record)? {
        line += 1;
        // Some exports (CICIDS2017) are not valid UTF-8 in the label column.
        let cells: Vec<String> = record
            .iter()
            .map(|c| String::from_utf8_lossy(c).trim().to_string())
            .collect();
        if line == 1 && has_header {
            check_header(&cells, schema)?;
            continue;
        }
        if cells.len() == 1 && cells[0].is_empty() {
            continue;
        }
        if cells.len() != expected {
            return Err(Error::Arity {
                row: line,
                expected,
                found: cells.len(),
            });
        }
        let label = cells[label_pos].clone();
        if label.is_empty() || schema.class_index(&label).is_none() {
            return Err(Error::UnknownLabel { row: line, label });
        }
        records.push(RawRecord {
            values: feature_pos.iter().map(|&i| cells[i].clone()).collect(),
            label,
        });
    }
    Ok(records)
}

fn check_header(cells: &[String], schema: &Schema) -> Result<()> {
    if cells.len() != schema.column_count() {
        return Err(Error::Arity {
            row: 1,
            expected: schema.column_count(),
            found: cells.len(),
        });
    }
    for (i, (cell, col)) in cells.iter().zip(&schema.columns).enumerate() {
        if cell.trim() != col.name.trim() {
            return Err(Error::Header {
                column: i + 1,
                expected: col.name.clone(),
                found: cell.clone(),
            });
        }
    }
    Ok(())
}
