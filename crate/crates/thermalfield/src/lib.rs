//! File formats, dataset layout, checkpoints and parallel drivers for
//! thermal radiance fields.
//!
//! The algorithms live in [`thermalfield_core`], re-exported here as
//! [`core`].

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod grid;
pub mod parallel;
pub mod pgm;
pub mod ply;
pub mod report;

pub use error::{Error, Result};
pub use thermalfield_core as core;
