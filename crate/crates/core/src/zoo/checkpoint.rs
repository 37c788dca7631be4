//! Framework-neutral checkpoint files.
//!
//! `model.bin` holds the magic `PZOO`, a little-endian `u32` version (1), a
//! little-endian `u64` parameter count, then that many little-endian `f32`
//! values in layout order. `layout.json` next to it carries the
//! [`Layout`]. Parameters trained in 64-bit are rounded to 32-bit at rest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Layout, ParameterVector};
use crate::scalar::Scalar;
use crate::zoo::io::{read_json, write_atomic, write_json};

pub const MAGIC: &[u8; 4] = b"PZOO";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub const MODEL_FILE: &str = "model.bin";
pub const LAYOUT_FILE: &str = "layout.json";

pub fn encode<S: Scalar>(params: &ParameterVector<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        let x = v.to_f32().unwrap_or(f32::NAN);
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode<S: Scalar>(bytes: &[u8], layout: Layout, path: &Path) -> Result<ParameterVector<S>> {
    let format = |m: String| Error::Format {
        path: path.to_path_buf(),
        message: m,
    };
    let corrupt = |m: String| Error::Corruption {
        path: path.to_path_buf(),
        message: m,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format("missing PZOO magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if count == 0 {
        return Err(corrupt("parameter count is zero".into()));
    }
    if count != layout.len() as u64 {
        return Err(corrupt(format!(
            "header declares {count} parameters, layout has {}",
            layout.len()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != 4 * count {
        return Err(corrupt(format!(
            "{} payload bytes for {count} parameters",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| S::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    ParameterVector::new(values, layout)
}

/// Writes `model.bin` and `layout.json` into `dir`.
pub fn save_checkpoint<S: Scalar>(dir: &Path, params: &ParameterVector<S>) -> Result<()> {
    if params.is_empty() {
        return Err(Error::InvalidInput(
            "refusing to save an empty parameter vector".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(LAYOUT_FILE), params.layout())?;
    write_atomic(&dir.join(MODEL_FILE), &encode(params))
}

pub fn load_checkpoint<S: Scalar>(dir: &Path) -> Result<ParameterVector<S>> {
    let layout_path = dir.join(LAYOUT_FILE);
    let layout: Layout = read_json(&layout_path)?;
    let layout = Layout::new(layout.slots().to_vec())?;
    let model_path = dir.join(MODEL_FILE);
    let bytes = fs::read(&model_path).map_err(|e| Error::io(&model_path, e))?;
    decode(&bytes, layout, &model_path)
}
