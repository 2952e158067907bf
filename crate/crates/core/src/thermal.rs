//! Radiometric conversion and sequence-level thermal mapping.
//!
//! Raw 16-bit sensor counts are converted to temperature with the camera's
//! linear calibration `T = p / k + b`, then min-max normalized using the
//! extrema of the *whole* sequence so every view shares one thermal scale.
//! Normalized values are kept on `[0, 1]`; the 8-bit scale only appears when
//! exporting files.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ShapeMismatch(format!(
            "image dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::ShapeMismatch(format!(
            "{width}x{height} image needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

/// Row-major grid of raw 16-bit sensor counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawThermalImage {
    width: usize,
    height: usize,
    counts: Vec<u16>,
}

impl RawThermalImage {
    pub fn new(width: usize, height: usize, counts: Vec<u16>) -> Result<Self> {
        check_shape(width, height, counts.len())?;
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }
}

/// Linear radiometric calibration of an IR camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiometricCalibration {
    /// Counts per temperature unit.
    pub k: f64,
    /// Temperature offset.
    pub b: f64,
}

impl RadiometricCalibration {
    pub fn new(k: f64, b: f64) -> Result<Self> {
        let cal = Self { k, b };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0.0 || !self.k.is_finite() || !self.b.is_finite() {
            return Err(Error::InvalidCalibration { k: self.k });
        }
        Ok(())
    }

    #[inline]
    pub fn temperature(&self, count: u16) -> f64 {
        f64::from(count) / self.k + self.b
    }
}

/// Row-major grid of temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl TemperatureGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Converts raw counts to temperatures, pixel by pixel.
pub fn raw_to_temperature(
    img: &RawThermalImage,
    cal: &RadiometricCalibration,
) -> Result<TemperatureGrid> {
    cal.validate()?;
    let values = img.counts.iter().map(|&p| cal.temperature(p)).collect();
    TemperatureGrid::new(img.width, img.height, values)
}

/// Temperature extrema over an entire image sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceStats {
    pub t_min: f64,
    pub t_max: f64,
}

impl SequenceStats {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min <= t_max) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sequence stats need finite t_min <= t_max, got ({t_min}, {t_max})"
            )));
        }
        Ok(Self { t_min, t_max })
    }
}

/// Global temperature extrema over every pixel of every grid.
pub fn sequence_stats(temps: &[TemperatureGrid]) -> Result<SequenceStats> {
    let mut values = temps.iter().flat_map(|g| g.values.iter().copied());
    let first = values.next().ok_or(Error::EmptySequence)?;
    let (t_min, t_max) = values.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
    SequenceStats::new(t_min, t_max)
}

/// Maps one temperature onto `[0, 1]` with the sequence extrema.
///
/// A degenerate sequence (`t_min == t_max`) maps everything to 0. Values
/// outside the extrema (possible when they come from metadata) are clamped.
#[inline]
pub fn normalize_value(t: f64, stats: &SequenceStats) -> f64 {
    let range = stats.t_max - stats.t_min;
    if !(range > 0.0) {
        return 0.0;
    }
    ((t - stats.t_min) / range).clamp(0.0, 1.0)
}

/// Sequence-consistent min-max normalization of one temperature grid.
pub fn normalize(temps: &TemperatureGrid, stats: &SequenceStats) -> ThermalImage {
    ThermalImage {
        width: temps.width,
        height: temps.height,
        values: temps
            .values
            .iter()
            .map(|&t| normalize_value(t, stats))
            .collect(),
    }
}

/// Normalized thermal image, values on `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ThermalImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ShapeMismatch(format!(
                "thermal value {} at index {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds an image by clamping arbitrary values into `[0, 1]`.
    pub fn from_clamped(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, values)
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, alloc::vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn view(&self) -> crate::loss::ImageRef<'_> {
        crate::loss::ImageRef::new(self.width, self.height, &self.values)
            .expect("thermal image shape is validated on construction")
    }

    /// 8-bit grayscale samples, `round(v * 255)`.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.values.iter().map(|&v| quantize8(v)).collect()
    }

    pub fn from_gray8(width: usize, height: usize, samples: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            samples.iter().map(|&s| f64::from(s) / 255.0).collect(),
        )
    }

    /// 16-bit grayscale samples, `round(v * 65535)`.
    pub fn to_gray16(&self) -> Vec<u16> {
        self.values
            .iter()
            .map(|&v| libm::round(v.clamp(0.0, 1.0) * 65535.0) as u16)
            .collect()
    }

    /// Pseudo-color rendering with the jet colormap, one RGB triple per pixel.
    pub fn to_pseudo_color(&self) -> Vec<[u8; 3]> {
        to_pseudo_color(self)
    }
}

#[inline]
fn quantize8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Index into the 256-entry colormap: `floor(v * 255 + 0.5)` clamped.
#[inline]
pub fn colormap_index(v: f64) -> usize {
    if v.is_nan() {
        return 0;
    }
    let idx = libm::floor(v * 255.0 + 0.5);
    idx.clamp(0.0, 255.0) as usize
}

/// The 256-entry jet colormap (dark blue, blue, cyan, yellow, red, dark red).
pub fn jet_table() -> [[u8; 3]; 256] {
    let channel = |x: f64, center: f64| -> u8 {
        let c = (1.5 - libm::fabs(4.0 * x - center)).clamp(0.0, 1.0);
        libm::round(c * 255.0) as u8
    };
    let mut table = [[0u8; 3]; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let x = i as f64 / 255.0;
        *entry = [channel(x, 3.0), channel(x, 2.0), channel(x, 1.0)];
    }
    table
}

/// Jet pseudo-color lookup for every pixel.
pub fn to_pseudo_color(img: &ThermalImage) -> Vec<[u8; 3]> {
    let table = jet_table();
    img.values
        .iter()
        .map(|&v| table[colormap_index(v)])
        .collect()
}
