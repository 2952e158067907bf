//! Density-grid files.
//!
//! `"TFDG"`, u32 version, 3 × u32 dimensions, 6 × f64 box, then the values
//! as f64 with the x index fastest. Little-endian throughout.

use std::path::Path;

use thermalfield_core::geometry::SceneBox;
use thermalfield_core::mesh::DensityGrid;

use crate::checkpoint::Reader;
use crate::error::{read, write, Error, Result};

pub const MAGIC: &[u8; 4] = b"TFDG";
pub const VERSION: u32 = 1;

pub fn encode_grid(grid: &DensityGrid) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let b = grid.bounds();
    for v in b.min.iter().chain(b.max.iter()).chain(grid.values()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> std::result::Result<DensityGrid, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err("not a density grid (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported grid version {version}"));
    }
    let dims = [r.u32()?, r.u32()?, r.u32()?];
    let bounds = SceneBox::new(r.vec3()?, r.vec3()?).map_err(|e| e.to_string())?;
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or("grid dimensions overflow")?;
    let values = r.f64s(n)?;
    r.finish()?;
    DensityGrid::new(dims, bounds, values).map_err(|e| e.to_string())
}

pub fn save_grid(path: &Path, grid: &DensityGrid) -> Result<()> {
    write(path, &encode_grid(grid))
}

pub fn load_grid(path: &Path) -> Result<DensityGrid> {
    decode_grid(&read(path)?).map_err(|m| Error::format(path, m))
}
