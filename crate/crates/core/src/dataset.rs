//! In-memory multi-view thermal dataset.

use alloc::format;
use alloc::vec::Vec;

use crate::geometry::{Intrinsics, Pose, SceneBox};
use crate::thermal::ThermalImage;
use crate::{Error, Result};

/// Radiometric metadata carried alongside the images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta {
    pub k: f64,
    pub b: f64,
    /// Sequence extrema used for normalization; computed from the data when
    /// absent.
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            k: 1.0,
            b: 0.0,
            t_min: Some(0.0),
            t_max: Some(1.0),
        }
    }
}

/// Whether a view is used for fitting or held out for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ThermalImage>,
    pub poses: Vec<Pose>,
    pub splits: Vec<Split>,
    pub intrinsics: Intrinsics,
    pub scene_box: SceneBox,
    pub near: f64,
    pub far: f64,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::InvalidDataset("dataset has no images".into()));
        }
        if self.images.len() != self.poses.len() || self.images.len() != self.splits.len() {
            return Err(Error::InvalidDataset(format!(
                "{} images, {} poses, {} split labels",
                self.images.len(),
                self.poses.len(),
                self.splits.len()
            )));
        }
        self.intrinsics.validate()?;
        for (i, img) in self.images.iter().enumerate() {
            if img.width() != self.intrinsics.width || img.height() != self.intrinsics.height {
                return Err(Error::InvalidDataset(format!(
                    "image {i} is {}x{}, intrinsics expect {}x{}",
                    img.width(),
                    img.height(),
                    self.intrinsics.width,
                    self.intrinsics.height
                )));
            }
        }
        if !(0.0 <= self.near && self.near < self.far && self.far.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "near/far {}/{} must satisfy 0 <= near < far",
                self.near, self.far
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    /// Marks every `every`-th view, starting at `offset`, as held out.
    pub fn hold_out_every(&mut self, every: usize, offset: usize) {
        for (i, s) in self.splits.iter_mut().enumerate() {
            *s = if every > 0 && i % every == offset % every {
                Split::Test
            } else {
                Split::Train
            };
        }
    }
}
