//! Flat little-endian binary layout for spectral fields and their JSON summaries.
//!
//! Layout: magic `AVGL`, format version, `N`, `M`, `n_x`, `n_v`, role (all `u32`),
//! `L`, `P`, `A` (`f64`), mode count (`u64`), the modes as `N + 1` `i64` each, then
//! every coefficient as interleaved real and imaginary `f64`.

use super::{FieldRole, SpectralKineticField, TorusGrid};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"AVGL";
const VERSION: u32 = 1;

pub fn write_field<W: Write>(f: &SpectralKineticField, mut out: W) -> Result<()> {
    let g = &f.grid;
    out.write_all(MAGIC)?;
    for v in [VERSION, g.space_dim as u32, g.velocity_dim as u32, g.n_x as u32, g.n_v as u32, role_code(f.role)] {
        out.write_u32::<LittleEndian>(v)?;
    }
    for v in [g.length_scale, g.v_period, g.amp] {
        out.write_f64::<LittleEndian>(v)?;
    }
    out.write_u64::<LittleEndian>(f.modes.len() as u64)?;
    for k in &f.modes {
        for &c in k {
            out.write_i64::<LittleEndian>(c)?;
        }
    }
    for c in &f.coeffs {
        out.write_f64::<LittleEndian>(c.re)?;
        out.write_f64::<LittleEndian>(c.im)?;
    }
    Ok(())
}

fn role_code(r: FieldRole) -> u32 {
    match r {
        FieldRole::Density => 0,
        FieldRole::Source => 1,
    }
}

pub fn read_field<R: Read>(mut input: R) -> Result<SpectralKineticField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a spectral field file".into()));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let mut header = [0u32; 5];
    for h in header.iter_mut() {
        *h = input.read_u32::<LittleEndian>()?;
    }
    let [n, m, n_x, n_v, role] = header;
    let role = match role {
        0 => FieldRole::Density,
        1 => FieldRole::Source,
        other => return Err(Error::Format(format!("unknown role code {other}"))),
    };
    let l = input.read_f64::<LittleEndian>()?;
    let p = input.read_f64::<LittleEndian>()?;
    let a = input.read_f64::<LittleEndian>()?;
    let grid = TorusGrid::new(n as usize, m as usize, l, n_x as usize, n_v as usize, p, a)?;
    let count = input.read_u64::<LittleEndian>()? as usize;
    let d = grid.space_time_dim();
    let mut modes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut k = Vec::with_capacity(d);
        for _ in 0..d {
            k.push(input.read_i64::<LittleEndian>()?);
        }
        modes.push(k);
    }
    let mut f = SpectralKineticField::zeros(grid, modes, role)?;
    for c in f.coeffs.iter_mut() {
        let re = input.read_f64::<LittleEndian>()?;
        let im = input.read_f64::<LittleEndian>()?;
        *c = Complex64::new(re, im);
    }
    Ok(f)
}

/// Shape and norm of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub role: FieldRole,
    pub grid: TorusGrid,
    pub mode_count: usize,
    pub l2_norm: f64,
    pub max_abs: f64,
}

pub fn summarize(f: &SpectralKineticField) -> FieldSummary {
    FieldSummary {
        role: f.role,
        grid: f.grid,
        mode_count: f.modes.len(),
        l2_norm: f.l2_norm(),
        max_abs: f.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max),
    }
}
