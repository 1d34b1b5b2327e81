//! Checkpoint container.
//!
//! ```text
//! magic        8 bytes  "SSIDSCK1"
//! header_len   u64 LE
//! header       JSON {"config": ModelConfig, "metadata": any}
//! params       tensor block
//! has_optim    u8 (0 or 1)
//! [step u64 LE, beta1 f64 LE, beta2 f64 LE, eps f64 LE, m tensor block, v tensor block]
//!
//! tensor block: count u32 LE, then per tensor
//!   name_len u32 LE, name UTF-8, ndim u32 LE, dims u64 LE * ndim,
//!   values f32 LE * prod(dims)
//! ```
//!
//! Values are stored at 32-bit precision; a reload is within f32 rounding
//! of the in-memory f64 parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::optim::{Adam, AdamConfig};
use super::params::ModelParams;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSIDSCK1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optimizer: Option<Adam>,
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    metadata: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header = serde_json::to_vec(&Header {
        config: checkpoint.config.clone(),
        metadata: checkpoint.metadata.clone(),
    })?;
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    write_tensors(&mut w, &checkpoint.params).map_err(io)?;
    match &checkpoint.optimizer {
        None => w.write_all(&[0]).map_err(io)?,
        Some(adam) => {
            w.write_all(&[1]).map_err(io)?;
            w.write_all(&adam.step.to_le_bytes()).map_err(io)?;
            for v in [adam.config.beta1, adam.config.beta2, adam.config.eps] {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            write_tensors(&mut w, &adam.m).map_err(io)?;
            write_tensors(&mut w, &adam.v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn write_tensors<W: Write>(w: &mut W, params: &ModelParams) -> std::io::Result<()> {
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, shape, data) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in &shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let len = read_u64(&mut r).map_err(io)? as usize;
    if len > 1 << 30 {
        return Err(bad(path, "header too large"));
    }
    let mut header = vec![0u8; len];
    r.read_exact(&mut header).map_err(io)?;
    let header: Header = serde_json::from_slice(&header)?;
    header.config.validate()?;
    let params = read_tensors(&mut r, &header.config, path)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(io)?;
    let optimizer = match flag[0] {
        0 => None,
        1 => {
            let step = read_u64(&mut r).map_err(io)?;
            let mut f = || read_u64(&mut r).map(f64::from_bits);
            let config = AdamConfig {
                beta1: f().map_err(io)?,
                beta2: f().map_err(io)?,
                eps: f().map_err(io)?,
            };
            let m = read_tensors(&mut r, &header.config, path)?;
            let v = read_tensors(&mut r, &header.config, path)?;
            Some(Adam { config, step, m, v })
        }
        _ => return Err(bad(path, "bad optimizer flag")),
    };
    Ok(Checkpoint {
        config: header.config,
        params,
        optimizer,
        metadata: header.metadata,
    })
}

fn bad(path: &Path, reason: &str) -> Error {
    Error::Container {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_tensors<R: Read>(r: &mut R, config: &ModelConfig, path: &Path) -> Result<ModelParams> {
    let io = |e| Error::io(path, e);
    let count = read_u32(r).map_err(io)? as usize;
    let expected = ModelParams::shape_template(config);
    if count != expected.len() {
        return Err(bad(path, &format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut flat = Vec::with_capacity(count);
    for shape in &expected {
        let name_len = read_u32(r).map_err(io)? as usize;
        let mut name = vec![0u8; name_len.min(256)];
        r.read_exact(&mut name).map_err(io)?;
        let ndim = read_u32(r).map_err(io)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim.min(8) {
            dims.push(read_u64(r).map_err(io)? as usize);
        }
        if &dims != shape {
            return Err(bad(
                path,
                &format!("tensor {} has shape {dims:?}, config implies {shape:?}", String::from_utf8_lossy(&name)),
            ));
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut b).map_err(io)?;
            data.push(f32::from_le_bytes(b) as f64);
        }
        flat.push(data);
    }
    ModelParams::from_flat(config, flat).ok_or_else(|| bad(path, "tensor layout mismatch"))
}
