//! Training losses and evaluation metrics.
//!
//! Window statistics use population moments over `kernel × kernel` windows
//! anchored at the top-left corner and advanced by `stride`; windows that
//! would hang over the border are dropped.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::stream_rng;
use crate::{Error, Result};

/// Stream used for patch permutations so they never collide with ray jitter.
const PATCH_STREAM: u64 = 0x5041_5443_4800_0000;

/// Default luminance stabilizer for the full SSIM metric.
pub const DEFAULT_SSIM_C1: f64 = 1e-4;

/// Borrowed row-major image of thermal values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageRef<'a> {
    width: usize,
    height: usize,
    values: &'a [f64],
}

impl<'a> ImageRef<'a> {
    pub fn new(width: usize, height: usize, values: &'a [f64]) -> Result<Self> {
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} image needs {} values, got {}",
                width.saturating_mul(height),
                values.len()
            )));
        }
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

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }
}

/// Sliding-window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub kernel: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            kernel: 4,
            stride: 4,
        }
    }
}

impl WindowConfig {
    pub fn new(kernel: usize, stride: usize) -> Result<Self> {
        let w = Self { kernel, stride };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel < 2 || self.stride < 1 {
            return Err(Error::InvalidConfig(format!(
                "window needs kernel >= 2 and stride >= 1, got {}/{}",
                self.kernel, self.stride
            )));
        }
        Ok(())
    }
}

/// Structure-term stabilizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HssimConstants {
    pub c2: f64,
}

impl Default for HssimConstants {
    fn default() -> Self {
        Self { c2: 9e-4 }
    }
}

impl HssimConstants {
    pub fn new(c2: f64) -> Result<Self> {
        let c = Self { c2 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::InvalidConfig(format!("C2 must be positive, got {}", self.c2)));
        }
        Ok(())
    }
}

/// A scalar loss together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Mean squared error over a minibatch, with `∂/∂pred`.
pub fn pixel_loss(pred: &[f64], target: &[f64]) -> Result<ValueGrad> {
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            value += r * r;
            2.0 * r / n
        })
        .collect();
    Ok(ValueGrad {
        value: value / n,
        grad,
    })
}

fn check_pair(x: &ImageRef<'_>, y: &ImageRef<'_>, window: &WindowConfig) -> Result<()> {
    window.validate()?;
    if x.width != y.width || x.height != y.height {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.width, x.height, y.width, y.height
        )));
    }
    if x.width < window.kernel || x.height < window.kernel {
        return Err(Error::ImageTooSmall {
            width: x.width,
            height: x.height,
            kernel: window.kernel,
        });
    }
    Ok(())
}

/// Top-left corners of every full window.
fn anchors(width: usize, height: usize, window: &WindowConfig) -> impl Iterator<Item = (usize, usize)> {
    let l = window.kernel;
    let s = window.stride;
    (0..=height - l)
        .step_by(s)
        .flat_map(move |v| (0..=width - l).step_by(s).map(move |u| (u, v)))
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn window_moments(x: &ImageRef<'_>, y: &ImageRef<'_>, u0: usize, v0: usize, l: usize) -> Moments {
    let n = (l * l) as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for v in v0..v0 + l {
        for u in u0..u0 + l {
            sx += x.get(u, v);
            sy += y.get(u, v);
        }
    }
    let (mean_x, mean_y) = (sx / n, sy / n);
    let (mut vx, mut vy, mut c) = (0.0, 0.0, 0.0);
    for v in v0..v0 + l {
        for u in u0..u0 + l {
            let dx = x.get(u, v) - mean_x;
            let dy = y.get(u, v) - mean_y;
            vx += dx * dx;
            vy += dy * dy;
            c += dx * dy;
        }
    }
    Moments {
        mean_x,
        mean_y,
        var_x: vx / n,
        var_y: vy / n,
        cov: c / n,
    }
}

/// Mean windowed SSIM with luminance, contrast and structure terms.
pub fn ssim(x: &ImageRef<'_>, y: &ImageRef<'_>, window: &WindowConfig, c1: f64, c2: f64) -> Result<f64> {
    check_pair(x, y, window)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (u0, v0) in anchors(x.width, x.height, window) {
        let m = window_moments(x, y, u0, v0, window.kernel);
        let lum = (2.0 * m.mean_x * m.mean_y + c1) / (m.mean_x * m.mean_x + m.mean_y * m.mean_y + c1);
        let cs = (2.0 * m.cov + c2) / (m.var_x + m.var_y + c2);
        sum += lum * cs;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Mean windowed similarity without the luminance term.
pub fn hssim(x: &ImageRef<'_>, y: &ImageRef<'_>, window: &WindowConfig, c: &HssimConstants) -> Result<f64> {
    check_pair(x, y, window)?;
    c.validate()?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (u0, v0) in anchors(x.width, x.height, window) {
        let m = window_moments(x, y, u0, v0, window.kernel);
        sum += (2.0 * m.cov + c.c2) / (m.var_x + m.var_y + c.c2);
        count += 1;
    }
    Ok(sum / count as f64)
}

/// [`hssim`] and its gradient with respect to every pixel of `x`.
pub fn hssim_with_grad(
    x: &ImageRef<'_>,
    y: &ImageRef<'_>,
    window: &WindowConfig,
    c: &HssimConstants,
) -> Result<ValueGrad> {
    check_pair(x, y, window)?;
    c.validate()?;
    let l = window.kernel;
    let n = (l * l) as f64;
    let count = anchors(x.width, x.height, window).count() as f64;
    let mut grad = vec![0.0; x.values.len()];
    let mut sum = 0.0;
    for (u0, v0) in anchors(x.width, x.height, window) {
        let m = window_moments(x, y, u0, v0, l);
        let num = 2.0 * m.cov + c.c2;
        let den = m.var_x + m.var_y + c.c2;
        sum += num / den;
        let a = 2.0 / (n * den * count);
        let b = num * 2.0 / (n * den * den * count);
        for v in v0..v0 + l {
            for u in u0..u0 + l {
                grad[v * x.width + u] += a * (y.get(u, v) - m.mean_y) - b * (x.get(u, v) - m.mean_x);
            }
        }
    }
    Ok(ValueGrad {
        value: sum / count,
        grad,
    })
}

/// Minibatch values rearranged into a rectangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    height: usize,
    width: usize,
    values: Vec<f64>,
    provenance: Vec<usize>,
}

/// Side length of the square patch holding `batch` pixels.
pub fn square_patch_shape(batch: usize) -> Result<(usize, usize)> {
    let side = libm::sqrt(batch as f64) as usize;
    let side = (side.saturating_sub(1)..=side + 1)
        .find(|s| s * s == batch)
        .ok_or_else(|| Error::InvalidConfig(format!("batch size {batch} is not a perfect square")))?;
    Ok((side, side))
}

/// Seeded uniform permutation of `0..n`.
pub fn patch_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, PATCH_STREAM));
    perm
}

/// Lays the minibatch out as an `h × w` grid in a seeded random order.
pub fn generate_patch(values: &[f64], shape: (usize, usize), seed: u64) -> Result<Patch> {
    Patch::from_permutation(values, shape, patch_permutation(values.len(), seed))
}

impl Patch {
    /// Builds a patch whose cell `i` holds `values[provenance[i]]`.
    pub fn from_permutation(values: &[f64], shape: (usize, usize), provenance: Vec<usize>) -> Result<Self> {
        let (height, width) = shape;
        if height.checked_mul(width) != Some(values.len()) || provenance.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "patch {height}x{width} cannot hold {} values",
                values.len()
            )));
        }
        let mut seen = vec![false; values.len()];
        for &p in &provenance {
            if p >= values.len() || core::mem::replace(&mut seen[p], true) {
                return Err(Error::ShapeMismatch("provenance is not a permutation".into()));
            }
        }
        let values = provenance.iter().map(|&p| values[p]).collect();
        Ok(Self {
            height,
            width,
            values,
            provenance,
        })
    }

    /// Rearranges another minibatch with the same permutation.
    pub fn apply(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.provenance.len() {
            return Err(Error::ShapeMismatch(format!(
                "patch expects {} values, got {}",
                self.provenance.len(),
                values.len()
            )));
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            values: self.provenance.iter().map(|&p| values[p]).collect(),
            provenance: self.provenance.clone(),
        })
    }

    /// Maps a per-cell gradient back to minibatch order.
    pub fn scatter(&self, cell_grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.provenance.len()];
        for (g, &p) in cell_grad.iter().zip(&self.provenance) {
            out[p] = *g;
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &[usize] {
        &self.provenance
    }

    pub fn view(&self) -> ImageRef<'_> {
        ImageRef {
            width: self.width,
            height: self.height,
            values: &self.values,
        }
    }
}

/// Mean value of a target patch, used as a constant weight.
pub fn thermal_intensity(target: &Patch) -> f64 {
    target.values.iter().sum::<f64>() / target.values.len() as f64
}

/// `E · (1 − hssim(pred, target))` with the gradient per patch cell of `pred`.
pub fn structural_loss(
    pred: &Patch,
    target: &Patch,
    window: &WindowConfig,
    c: &HssimConstants,
) -> Result<ValueGrad> {
    if pred.provenance != target.provenance || pred.height != target.height {
        return Err(Error::ShapeMismatch(
            "predicted and target patches are not aligned".into(),
        ));
    }
    let e = thermal_intensity(target);
    let h = hssim_with_grad(&pred.view(), &target.view(), window, c)?;
    Ok(ValueGrad {
        value: e * (1.0 - h.value),
        grad: h.grad.into_iter().map(|g| -e * g).collect(),
    })
}

/// Unweighted sum of the pixel and structural terms.
pub fn total_loss(pixel: f64, structural: f64) -> f64 {
    pixel + structural
}

pub fn mse(x: &ImageRef<'_>, y: &ImageRef<'_>) -> Result<f64> {
    if x.width != y.width || x.height != y.height {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.width, x.height, y.width, y.height
        )));
    }
    if x.values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = x.values.iter().zip(y.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.values.len() as f64)
}

/// Peak signal-to-noise ratio in decibels; identical images give `+∞`.
pub fn psnr(x: &ImageRef<'_>, y: &ImageRef<'_>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidConfig(format!("peak must be positive, got {peak}")));
    }
    let m = mse(x, y)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(peak * peak / m))
}

/// Evaluation scores of one rendered view against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub hssim: f64,
}

/// PSNR (peak 1), SSIM and HSSIM with the given windowing.
pub fn image_metrics(
    pred: &ImageRef<'_>,
    target: &ImageRef<'_>,
    window: &WindowConfig,
    c: &HssimConstants,
) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        psnr: psnr(pred, target, 1.0)?,
        ssim: ssim(pred, target, window, DEFAULT_SSIM_C1, c.c2)?,
        hssim: hssim(pred, target, window, c)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, v: &[f64]) -> ImageRef<'_> {
        ImageRef::new(w, h, v).unwrap()
    }

    #[test]
    fn pixel_loss_single() {
        let l = pixel_loss(&[0.6], &[0.1]).unwrap();
        assert!((l.value - 0.25).abs() < 1e-15);
        assert!((l.grad[0] - 1.0).abs() < 1e-15);
        assert!(matches!(pixel_loss(&[], &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn anchors_drop_partial_windows() {
        let w = WindowConfig { kernel: 4, stride: 3 };
        let a: Vec<_> = anchors(10, 5, &w).collect();
        assert_eq!(a, vec![(0, 0), (3, 0), (6, 0)]);
    }

    #[test]
    fn hssim_negated_zero_mean() {
        let x = [0.1, -0.1, 0.2, -0.2, 0.3, -0.3, 0.05, -0.05, 0.1, -0.1, 0.2, -0.2, 0.3, -0.3, 0.05, -0.05];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let s2 = x.iter().map(|v| v * v).sum::<f64>() / 16.0;
        let c = HssimConstants::default();
        let h = hssim(&img(4, 4, &x), &img(4, 4, &y), &WindowConfig::default(), &c).unwrap();
        assert!((h - (-2.0 * s2 + c.c2) / (2.0 * s2 + c.c2)).abs() < 1e-15);
    }

    #[test]
    fn constant_images() {
        let x = [0.2; 16];
        let y = [0.8; 16];
        let w = WindowConfig::default();
        assert_eq!(hssim(&img(4, 4, &x), &img(4, 4, &y), &w, &HssimConstants::default()).unwrap(), 1.0);
        assert!(ssim(&img(4, 4, &x), &img(4, 4, &y), &w, DEFAULT_SSIM_C1, 9e-4).unwrap() < 1.0);
    }

    #[test]
    fn too_small_is_error() {
        let x = [0.0; 9];
        assert!(matches!(
            hssim(&img(3, 3, &x), &img(3, 3, &x), &WindowConfig::default(), &HssimConstants::default()),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn patch_roundtrip() {
        let v: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let p = generate_patch(&v, (4, 4), 7).unwrap();
        let q = generate_patch(&v, (4, 4), 7).unwrap();
        assert_eq!(p, q);
        let mut sorted = p.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, v);
        let back = p.scatter(p.values());
        assert_eq!(back, v);
        assert!(generate_patch(&v, (3, 5), 7).is_err());
        assert_eq!(generate_patch(&[0.4], (1, 1), 3).unwrap().values(), &[0.4]);
    }

    #[test]
    fn square_shape() {
        assert_eq!(square_patch_shape(4096).unwrap(), (64, 64));
        assert_eq!(square_patch_shape(1).unwrap(), (1, 1));
        assert!(square_patch_shape(4095).is_err());
    }

    #[test]
    fn intensity_and_psnr() {
        let p = Patch::from_permutation(&[0.2, 0.4, 0.6, 0.8], (2, 2), vec![0, 1, 2, 3]).unwrap();
        assert!((thermal_intensity(&p) - 0.5).abs() < 1e-15);
        let x = [0.0; 4];
        let y = [0.1; 4];
        assert!((psnr(&img(2, 2, &x), &img(2, 2, &y), 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr(&img(2, 2, &x), &img(2, 2, &x), 1.0).unwrap(), f64::INFINITY);
    }
}
