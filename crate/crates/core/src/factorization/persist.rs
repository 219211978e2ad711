//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"CONGREC\0"
//! 8       4     format version (u32, currently 1)
//! 12      8     n users (u64)
//! 20      8     m items (u64)
//! 28      8     d (u64)
//! 36      1     method code (0 mf, 1 smf, 2 soreg, 3 cr, 4 csrr)
//! 37      32    SHA-256 of TrainConfig::canonical()
//! 69      ...   U row-major (n*d f64), then V row-major (m*d f64)
//! ```
//!
//! Floats are stored by bit pattern, so a load returns exactly what was saved.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{FactorModel, Method, TrainConfig};

const MAGIC: &[u8; 8] = b"CONGREC\0";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 * 3 + 1 + 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHeader {
    pub n_users: usize,
    pub n_items: usize,
    pub d: usize,
    pub method: Method,
    pub config_hash: [u8; 32],
}

pub fn config_hash(config: &TrainConfig) -> [u8; 32] {
    let digest = Sha256::digest(config.canonical().as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn save_model(path: &Path, model: &FactorModel, method: Method, config: &TrainConfig) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * (model.users.len() + model.items.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for x in [model.n_users(), model.n_items(), model.dim()] {
        buf.extend_from_slice(&(x as u64).to_le_bytes());
    }
    buf.push(method.code());
    buf.extend_from_slice(&config_hash(config));
    for x in model.users.iter().chain(model.items.iter()) {
        buf.extend_from_slice(&x.to_bits().to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().expect("8 bytes"))
}

pub fn load_model(path: &Path) -> Result<(ModelHeader, FactorModel)> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < HEADER_LEN || &buf[..8] != MAGIC {
        return Err(Error::ModelFormat(format!("{} is not a model file", path.display())));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported format version {version}")));
    }
    let n = read_u64(&buf, 12) as usize;
    let m = read_u64(&buf, 20) as usize;
    let d = read_u64(&buf, 28) as usize;
    let method = Method::from_code(buf[36])
        .ok_or_else(|| Error::ModelFormat(format!("unknown method code {}", buf[36])))?;
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&buf[37..69]);

    let count = n
        .checked_add(m)
        .and_then(|rows| rows.checked_mul(d))
        .ok_or_else(|| Error::ModelFormat("dimensions overflow".into()))?;
    if buf.len() != HEADER_LEN + 8 * count {
        return Err(Error::ModelFormat(format!(
            "expected {} payload bytes, found {}",
            8 * count,
            buf.len() - HEADER_LEN
        )));
    }
    let mut values = buf[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))));
    let users: Vec<f64> = values.by_ref().take(n * d).collect();
    let items: Vec<f64> = values.collect();
    let model = FactorModel {
        users: Array2::from_shape_vec((n, d), users).expect("length checked"),
        items: Array2::from_shape_vec((m, d), items).expect("length checked"),
    };
    let header = ModelHeader {
        n_users: n,
        n_items: m,
        d,
        method,
        config_hash,
    };
    Ok((header, model))
}
