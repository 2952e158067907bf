//! Multi-threaded rendering and grid evaluation.
//!
//! Each pixel and lattice point is computed exactly as the sequential core
//! routines compute it, so results do not depend on the worker count.

use rayon::prelude::*;
use thermalfield_core::geometry::{Intrinsics, Pose, SceneBox};
use thermalfield_core::mesh::DensityGrid;
use thermalfield_core::render::{
    lattice_point, render_pixel, RadianceSource, RenderScratch, SamplingConfig,
};
use thermalfield_core::thermal::ThermalImage;
use thermalfield_core::{Error as CoreError, Vec3};

use crate::error::{Error, Result};

/// Environment variable consulted when `--workers` is not given.
pub const WORKERS_ENV: &str = "THERMALFIELD_WORKERS";

/// Builds a thread pool from an explicit count, the environment, or the
/// machine's parallelism, in that order.
pub fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match workers {
        Some(n) => n,
        None => match std::env::var(WORKERS_ENV) {
            Ok(s) => s.trim().parse().map_err(|_| {
                Error::Usage(format!("{WORKERS_ENV}={s:?} is not a worker count"))
            })?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))
}

pub fn render_image<R: RadianceSource>(
    source: &R,
    intr: &Intrinsics,
    pose: &Pose,
    near: f64,
    far: f64,
    cfg: &SamplingConfig,
) -> Result<ThermalImage> {
    cfg.validate()?;
    let rows = (0..intr.height)
        .into_par_iter()
        .map_init(
            || RenderScratch::new(source.scratch()),
            |scratch, v| {
                (0..intr.width)
                    .map(|u| render_pixel(source, intr, pose, near, far, cfg, u, v, scratch))
                    .collect::<Result<Vec<f64>, CoreError>>()
            },
        )
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok(ThermalImage::from_clamped(
        intr.width,
        intr.height,
        rows.concat(),
    )?)
}

pub fn render_views<R: RadianceSource>(
    source: &R,
    intr: &Intrinsics,
    poses: &[Pose],
    near: f64,
    far: f64,
    cfg: &SamplingConfig,
) -> Result<Vec<ThermalImage>> {
    poses
        .iter()
        .map(|p| render_image(source, intr, p, near, far, cfg))
        .collect()
}

pub fn density_grid<R: RadianceSource>(
    source: &R,
    scene_box: &SceneBox,
    dims: [usize; 3],
) -> Result<DensityGrid> {
    if dims.iter().any(|&n| n < 2) {
        return Err(CoreError::InvalidConfig(format!(
            "density grid needs at least 2 points per axis, got {dims:?}"
        ))
        .into());
    }
    let d = Vec3::z();
    let slices = (0..dims[2])
        .into_par_iter()
        .map_init(
            || source.scratch(),
            |scratch, k| {
                let mut out = Vec::with_capacity(dims[0] * dims[1]);
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let x = lattice_point(scene_box, dims, i, j, k);
                        out.push(source.query(&x, &d, scratch)?.density);
                    }
                }
                Ok(out)
            },
        )
        .collect::<Result<Vec<Vec<f64>>, CoreError>>()?;
    Ok(DensityGrid::new(dims, *scene_box, slices.concat())?)
}
