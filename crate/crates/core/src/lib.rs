//! Differentiable thermal radiance fields.
//!
//! This crate holds every algorithm needed to reconstruct a volumetric scene
//! from infrared image sequences: radiometric thermal mapping, SE(3) camera
//! algebra with learnable pose corrections, an encoded MLP scene function with
//! an exact manual backward pass, volume rendering, the luminance-free
//! structural similarity loss on stochastic patches, an Adam trainer, marching
//! cubes and analytic synthetic scenes.
//!
//! The crate is `no_std` (with `alloc`). File formats, dataset layouts,
//! checkpoints and the command-line tool live in the `thermalfield` crate.

#![cfg_attr(not(test), no_std)]
#![warn(clippy::all)]
#![allow(
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord
)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod field;
pub mod geometry;
pub mod loss;
pub mod mesh;
pub mod render;
pub mod rng;
pub mod synth;
pub mod thermal;
pub mod train;

pub use error::{Error, Result};

/// Three-component real vector used for positions and directions.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 real matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
