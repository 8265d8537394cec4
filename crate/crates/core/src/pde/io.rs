//! CSV and binary output of density fields.
//!
//! Binary layout: `RFLD`, a little-endian `u32` header length, the JSON
//! header, then every frame as little-endian `f64`, row-major.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::field::{DensityField, Grid};
use super::PdeError;
use crate::scalar::Real;

pub const BINARY_MAGIC: &[u8; 4] = b"RFLD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub n: usize,
    pub dt: f64,
    pub stride: usize,
    pub t_final: f64,
    pub frames: usize,
    pub model_hash: String,
}

/// Writes `t,x,rho` rows, frame by frame.
pub fn write_csv<R: Real, W: Write>(field: &DensityField<R>, mut w: W) -> Result<(), PdeError> {
    writeln!(w, "t,x,rho")?;
    let grid = field.grid();
    for k in 0..field.frames() {
        let t = field.time(k).to_f64_lossy();
        for (i, v) in field.frame(k).iter().enumerate() {
            writeln!(w, "{},{},{}", t, grid.node::<f64>(i), v.to_f64_lossy())?;
        }
    }
    Ok(())
}

pub fn write_binary<R: Real, W: Write>(field: &DensityField<R>, mut w: W) -> Result<(), PdeError> {
    let header = FieldHeader {
        n: field.grid().n(),
        dt: field.dt().to_f64_lossy(),
        stride: field.stride(),
        t_final: field.t_final().to_f64_lossy(),
        frames: field.frames(),
        model_hash: field.model_hash().to_string(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| PdeError::Format(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| PdeError::Format("header too long".into()))?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for v in field.values() {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<Rd: Read>(mut r: Rd) -> Result<DensityField<f64>, PdeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(PdeError::Format("bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: FieldHeader = serde_json::from_slice(&json).map_err(|e| PdeError::Format(e.to_string()))?;
    let grid = Grid::new(header.n)?;
    let count = header
        .frames
        .checked_mul(header.n + 1)
        .ok_or_else(|| PdeError::Format("frame count overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(PdeError::Format(format!("expected {} data bytes, found {}", count * 8, bytes.len())));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if header.stride == 0 || header.frames == 0 {
        return Err(PdeError::Format("stride and frame count must be positive".into()));
    }
    Ok(DensityField {
        grid,
        dt: header.dt,
        stride: header.stride,
        t_final: header.t_final,
        data,
        model_hash: header.model_hash,
        tilt: None,
        pfrak: Default::default(),
    })
}
