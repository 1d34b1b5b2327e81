//! Binary dataset container.
//!
//! ```text
//! magic        8 bytes   "SSIDSDS1"
//! header_len   u64 LE
//! header       JSON {"schema_hash", "class_names", "rows", "dim", "has_hidden"}
//! features     rows*dim f64 LE, row-major
//! labels       rows i64 LE, -1 = unlabeled
//! provenance   rows u8 (0 original, 1 pseudo, 2 synthetic)
//! hidden       rows i64 LE, only when has_hidden
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::{Dataset, HiddenLabels, Provenance};

pub const CONTAINER_MAGIC: &[u8; 8] = b"SSIDSDS1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema_hash: String,
    class_names: Vec<String>,
    rows: usize,
    dim: usize,
    has_hidden: bool,
}

pub fn write_dataset(path: &Path, dataset: &Dataset, schema_hash: &str) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header = serde_json::to_vec(&Header {
        schema_hash: schema_hash.to_string(),
        class_names: dataset.class_names().to_vec(),
        rows: dataset.len(),
        dim: dataset.dim(),
        has_hidden: dataset.hidden_labels().is_some(),
    })?;
    w.write_all(CONTAINER_MAGIC).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    for v in dataset.features().iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for l in dataset.labels() {
        let v = l.map_or(-1i64, |c| c as i64);
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for p in dataset.provenance() {
        let b: u8 = match p {
            Provenance::Original => 0,
            Provenance::Pseudo => 1,
            Provenance::Synthetic => 2,
        };
        w.write_all(&[b]).map_err(io)?;
    }
    if let Some(h) = dataset.hidden_labels() {
        for &c in h.reveal() {
            w.write_all(&(c as i64).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Returns the dataset and the schema hash it was written with.
pub fn read_dataset(path: &Path) -> Result<(Dataset, String)> {
    let io = |e| Error::io(path, e);
    let bad = |reason: &str| Error::Container {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CONTAINER_MAGIC {
        return Err(bad("bad magic"));
    }
    let header_len = read_u64(&mut r).map_err(io)? as usize;
    if header_len > 1 << 30 {
        return Err(bad("header too large"));
    }
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header).map_err(io)?;
    let header: Header = serde_json::from_slice(&header)?;

    let mut features = Vec::with_capacity(header.rows * header.dim);
    let mut buf = [0u8; 8];
    for _ in 0..header.rows * header.dim {
        r.read_exact(&mut buf).map_err(io)?;
        features.push(f64::from_le_bytes(buf));
    }
    let features = Array2::from_shape_vec((header.rows, header.dim), features)
        .map_err(|e| bad(&e.to_string()))?;
    let mut labels = Vec::with_capacity(header.rows);
    for _ in 0..header.rows {
        let v = read_u64(&mut r).map_err(io)? as i64;
        labels.push(if v < 0 { None } else { Some(v as usize) });
    }
    let mut prov_bytes = vec![0u8; header.rows];
    r.read_exact(&mut prov_bytes).map_err(io)?;
    let provenance = prov_bytes
        .iter()
        .map(|b| match b {
            0 => Ok(Provenance::Original),
            1 => Ok(Provenance::Pseudo),
            2 => Ok(Provenance::Synthetic),
            _ => Err(bad("bad provenance flag")),
        })
        .collect::<Result<Vec<_>>>()?;
    let hidden = if header.has_hidden {
        let mut h = Vec::with_capacity(header.rows);
        for _ in 0..header.rows {
            h.push(read_u64(&mut r).map_err(io)? as usize);
        }
        Some(HiddenLabels::new(h))
    } else {
        None
    };
    let mut ds = Dataset::with_provenance(features, labels, header.class_names, provenance)?;
    ds.set_hidden(hidden);
    Ok((ds, header.schema_hash))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
