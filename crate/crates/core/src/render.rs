//! Quadrature of the emission-absorption integral along camera rays.
//!
//! Each ray `[near, far]` is split into `N` equal bins with one sample per
//! bin, either at the midpoint or jittered uniformly inside it. Every sample
//! contributes `wᵢ = Tᵢ·αᵢ` with `αᵢ = 1 − exp(−σᵢΔ)` and
//! `Tᵢ = exp(−Σ_{j<i} σⱼΔ)`; anything that passes through is treated as a
//! cold background of value zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::field::{FieldCache, FieldOutput, FieldParams};
use crate::geometry::{
    apply_correction, exp_action_jacobian, exp_rotation_jacobian, pixel_ray, Intrinsics, Pose,
    PoseCorrection, Ray, SceneBox,
};
use crate::mesh::DensityGrid;
use crate::rng::stream_rng;
use crate::thermal::ThermalImage;
use crate::{Error, Result, Vec3};

/// Ray sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: 96,
            stratified: true,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray < 2 {
            return Err(Error::InvalidConfig(format!(
                "samples_per_ray must be at least 2, got {}",
                self.samples_per_ray
            )));
        }
        Ok(())
    }
}

/// Sample depths along one ray and the common bin width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaySamples {
    pub h: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Fills `out` with the sample depths of `ray`; `stream` selects the jitter
/// sequence so each ray is reproducible on its own.
pub fn sample_ray_into(ray: &Ray, cfg: &SamplingConfig, stream: u64, out: &mut RaySamples) {
    let n = cfg.samples_per_ray;
    let width = (ray.far - ray.near) / n as f64;
    out.h.clear();
    out.delta.clear();
    if cfg.stratified {
        let mut rng = stream_rng(cfg.seed, stream);
        for i in 0..n {
            let jitter: f64 = rng.random();
            out.h.push(ray.near + (i as f64 + jitter) * width);
        }
    } else {
        out.h
            .extend((0..n).map(|i| ray.near + (i as f64 + 0.5) * width));
    }
    out.delta.resize(n, width);
}

pub fn sample_ray(ray: &Ray, cfg: &SamplingConfig, stream: u64) -> Result<RaySamples> {
    cfg.validate()?;
    let mut out = RaySamples::default();
    sample_ray_into(ray, cfg, stream, &mut out);
    Ok(out)
}

/// Result of compositing one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub value: f64,
    pub weights: Vec<f64>,
    /// Transmittance reaching each sample, `Tᵢ`.
    pub transmittance: Vec<f64>,
}

fn check_lengths(t: &[f64], sigma: &[f64], delta: &[f64]) -> Result<()> {
    if t.len() != sigma.len() || t.len() != delta.len() {
        return Err(Error::ShapeMismatch(format!(
            "composite needs equal lengths, got {}/{}/{}",
            t.len(),
            sigma.len(),
            delta.len()
        )));
    }
    Ok(())
}

/// Alpha-composites thermal values front to back.
pub fn composite(t: &[f64], sigma: &[f64], delta: &[f64]) -> Result<Composite> {
    check_lengths(t, sigma, delta)?;
    let mut weights = Vec::with_capacity(t.len());
    let mut transmittance = Vec::with_capacity(t.len());
    let mut value = 0.0;
    let mut optical_depth = 0.0;
    for i in 0..t.len() {
        let trans = libm::exp(-optical_depth);
        let tau = sigma[i] * delta[i];
        let w = trans * -libm::expm1(-tau);
        transmittance.push(trans);
        weights.push(w);
        value += w * t[i];
        optical_depth += tau;
    }
    Ok(Composite {
        value,
        weights,
        transmittance,
    })
}

/// Exact `(∂T̂/∂tᵢ, ∂T̂/∂σᵢ)` scaled by `d_out`.
pub fn composite_backward(
    t: &[f64],
    sigma: &[f64],
    delta: &[f64],
    forward: &Composite,
    d_out: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(t, sigma, delta)?;
    let n = t.len();
    let d_t = forward.weights.iter().map(|w| w * d_out).collect();
    let mut d_sigma = vec![0.0; n];
    // tail = Σ_{i>k} wᵢtᵢ
    let mut tail = 0.0;
    for k in (0..n).rev() {
        let next_trans = forward.transmittance[k] * libm::exp(-sigma[k] * delta[k]);
        d_sigma[k] = d_out * delta[k] * (next_trans * t[k] - tail);
        tail += forward.weights[k] * t[k];
    }
    Ok((d_t, d_sigma))
}

/// Anything that can be queried for `(thermal, density)` in world space.
pub trait RadianceSource: Sync {
    type Scratch: Send;

    fn scratch(&self) -> Self::Scratch;

    fn query(&self, x: &Vec3, d: &Vec3, scratch: &mut Self::Scratch) -> Result<FieldOutput>;
}

/// The learned field placed in a scene box. Outside the box the scene is
/// empty.
#[derive(Debug, Clone, Copy)]
pub struct NeuralField<'a> {
    pub params: &'a FieldParams,
    pub scene_box: SceneBox,
}

#[inline]
fn inside_unit_cube(q: &Vec3) -> bool {
    q.iter().all(|c| c.abs() <= 1.0)
}

const EMPTY: FieldOutput = FieldOutput {
    thermal: 0.0,
    density: 0.0,
};

impl RadianceSource for NeuralField<'_> {
    type Scratch = FieldCache;

    fn scratch(&self) -> FieldCache {
        FieldCache::new(self.params.arch())
    }

    fn query(&self, x: &Vec3, d: &Vec3, cache: &mut FieldCache) -> Result<FieldOutput> {
        let q = self.scene_box.contract(x);
        if !inside_unit_cube(&q) {
            return Ok(EMPTY);
        }
        self.params.forward(&q, d, cache)
    }
}

/// Reusable buffers for [`render_ray`].
#[derive(Debug)]
pub struct RenderScratch<S> {
    pub source: S,
    samples: RaySamples,
    t: Vec<f64>,
    sigma: Vec<f64>,
}

impl<S> RenderScratch<S> {
    pub fn new(source: S) -> Self {
        Self {
            source,
            samples: RaySamples::default(),
            t: Vec::new(),
            sigma: Vec::new(),
        }
    }
}

/// Renders one ray.
pub fn render_ray<R: RadianceSource>(
    source: &R,
    ray: &Ray,
    cfg: &SamplingConfig,
    stream: u64,
    scratch: &mut RenderScratch<R::Scratch>,
) -> Result<f64> {
    sample_ray_into(ray, cfg, stream, &mut scratch.samples);
    scratch.t.clear();
    scratch.sigma.clear();
    for &h in &scratch.samples.h {
        let out = source.query(&ray.at(h), &ray.direction, &mut scratch.source)?;
        scratch.t.push(out.thermal);
        scratch.sigma.push(out.density);
    }
    let mut value = 0.0;
    let mut optical_depth = 0.0;
    for ((t, s), d) in scratch.t.iter().zip(&scratch.sigma).zip(&scratch.samples.delta) {
        let tau = s * d;
        value += libm::exp(-optical_depth) * -libm::expm1(-tau) * t;
        optical_depth += tau;
    }
    Ok(value)
}

/// Renders pixel `(u, v)`; its jitter stream is the pixel index.
pub fn render_pixel<R: RadianceSource>(
    source: &R,
    intr: &Intrinsics,
    pose: &Pose,
    near: f64,
    far: f64,
    cfg: &SamplingConfig,
    u: usize,
    v: usize,
    scratch: &mut RenderScratch<R::Scratch>,
) -> Result<f64> {
    let ray = pixel_ray(intr, pose, u, v, near, far)?;
    render_ray(source, &ray, cfg, (v * intr.width + u) as u64, scratch)
}

/// Renders a full image from `pose`, one pixel at a time.
pub fn render_image<R: RadianceSource>(
    source: &R,
    intr: &Intrinsics,
    pose: &Pose,
    near: f64,
    far: f64,
    cfg: &SamplingConfig,
) -> Result<ThermalImage> {
    cfg.validate()?;
    let mut scratch = RenderScratch::new(source.scratch());
    let mut values = Vec::with_capacity(intr.pixel_count());
    for v in 0..intr.height {
        for u in 0..intr.width {
            values.push(render_pixel(source, intr, pose, near, far, cfg, u, v, &mut scratch)?);
        }
    }
    ThermalImage::from_clamped(intr.width, intr.height, values)
}

/// Lattice point `(i, j, k)` of an `n`-point-per-axis grid spanning the box.
pub fn lattice_point(scene_box: &SceneBox, dims: [usize; 3], i: usize, j: usize, k: usize) -> Vec3 {
    let e = scene_box.extent();
    let f = |idx: usize, n: usize| idx as f64 / (n - 1) as f64;
    scene_box.min + Vec3::new(e.x * f(i, dims[0]), e.y * f(j, dims[1]), e.z * f(k, dims[2]))
}

/// Density at every lattice point, x index fastest. The view direction is
/// fixed because density does not depend on it.
pub fn render_density_grid<R: RadianceSource>(
    source: &R,
    scene_box: &SceneBox,
    dims: [usize; 3],
) -> Result<DensityGrid> {
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::InvalidConfig(format!(
            "density grid needs at least 2 points per axis, got {dims:?}"
        )));
    }
    let mut scratch = source.scratch();
    let d = Vec3::z();
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let x = lattice_point(scene_box, dims, i, j, k);
                values.push(source.query(&x, &d, &mut scratch)?.density);
            }
        }
    }
    DensityGrid::new(dims, *scene_box, values)
}

/// Forward state of one training ray, kept for the reverse pass.
#[derive(Debug)]
pub struct RayTrace {
    origin: Vec3,
    direction: Vec3,
    tangent: [f64; 6],
    samples: RaySamples,
    t: Vec<f64>,
    sigma: Vec<f64>,
    inside: Vec<bool>,
    caches: Vec<FieldCache>,
    forward: Composite,
}

impl RayTrace {
    pub fn new() -> Self {
        Self {
            origin: Vec3::zeros(),
            direction: Vec3::z(),
            tangent: [0.0; 6],
            samples: RaySamples::default(),
            t: Vec::new(),
            sigma: Vec::new(),
            inside: Vec::new(),
            caches: Vec::new(),
            forward: Composite {
                value: 0.0,
                weights: Vec::new(),
                transmittance: Vec::new(),
            },
        }
    }

    pub fn value(&self) -> f64 {
        self.forward.value
    }

    pub fn weights(&self) -> &[f64] {
        &self.forward.weights
    }

    /// Box membership of every sample followed by the ReLU states of the
    /// samples inside the box. Equal patterns mean the traced function is
    /// smooth between the two traces.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let n = self.samples.h.len();
        let mut out = self.inside[..n].to_vec();
        for i in (0..n).filter(|&i| self.inside[i]) {
            out.extend(self.caches[i].relu_pattern());
        }
        out
    }
}

impl Default for RayTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// One pixel of a training view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRay<'a> {
    pub intrinsics: &'a Intrinsics,
    pub base_pose: &'a Pose,
    pub correction: &'a PoseCorrection,
    pub u: usize,
    pub v: usize,
    pub near: f64,
    pub far: f64,
}

/// Renders a training ray through the corrected pose and keeps every
/// intermediate needed by [`backprop_ray`].
pub fn trace_ray(
    params: &FieldParams,
    scene_box: &SceneBox,
    ray: &TrainingRay<'_>,
    cfg: &SamplingConfig,
    stream: u64,
    trace: &mut RayTrace,
) -> Result<f64> {
    let base = pixel_ray(ray.intrinsics, ray.base_pose, ray.u, ray.v, ray.near, ray.far)?;
    let corrected = apply_correction(ray.base_pose, ray.correction);
    let world = pixel_ray(ray.intrinsics, &corrected, ray.u, ray.v, ray.near, ray.far)?;
    trace.origin = base.origin;
    trace.direction = base.direction;
    trace.tangent = ray.correction.tangent;

    sample_ray_into(&world, cfg, stream, &mut trace.samples);
    let n = trace.samples.h.len();
    if trace.caches.len() < n {
        trace.caches.resize_with(n, || FieldCache::new(params.arch()));
    }
    trace.t.clear();
    trace.sigma.clear();
    trace.inside.clear();
    for (i, &h) in trace.samples.h.iter().enumerate() {
        let q = scene_box.contract(&world.at(h));
        let inside = inside_unit_cube(&q);
        let out = if inside {
            params.forward(&q, &world.direction, &mut trace.caches[i])?
        } else {
            EMPTY
        };
        trace.inside.push(inside);
        trace.t.push(out.thermal);
        trace.sigma.push(out.density);
    }
    trace.forward = composite(&trace.t, &trace.sigma, &trace.samples.delta)?;
    Ok(trace.forward.value)
}

/// Accumulates `d_out · ∂T̂/∂Θ` into the parameter gradients and returns
/// `d_out · ∂T̂/∂ξ` for the ray's pose correction (zero unless `pose_grad`).
pub fn backprop_ray(
    params: &mut FieldParams,
    scene_box: &SceneBox,
    trace: &mut RayTrace,
    d_out: f64,
    pose_grad: bool,
) -> Result<[f64; 6]> {
    let (d_t, d_sigma) = composite_backward(
        &trace.t,
        &trace.sigma,
        &trace.samples.delta,
        &trace.forward,
        d_out,
    )?;
    let scale = scene_box.contract_scale();
    let omega = Vec3::new(trace.tangent[0], trace.tangent[1], trace.tangent[2]);
    let mut g_xi = [0.0; 6];
    let mut g_dir_total = Vec3::zeros();
    for i in 0..trace.samples.h.len() {
        if !trace.inside[i] || (d_t[i] == 0.0 && d_sigma[i] == 0.0) {
            continue;
        }
        let g = params.backward(&mut trace.caches[i], d_t[i], d_sigma[i]);
        if pose_grad {
            let g_world = g.position.component_mul(&scale);
            let p = trace.origin + trace.direction * trace.samples.h[i];
            let jac = exp_action_jacobian(&trace.tangent, &p);
            let contrib = jac.transpose() * g_world;
            for k in 0..6 {
                g_xi[k] += contrib[k];
            }
            g_dir_total += g.direction;
        }
    }
    if pose_grad {
        let jr = exp_rotation_jacobian(&omega, &trace.direction);
        let contrib = jr.transpose() * g_dir_total;
        for k in 0..3 {
            g_xi[k] += contrib[k];
        }
    }
    Ok(g_xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints() {
        let ray = Ray::new(Vec3::zeros(), Vec3::z(), 0.0, 1.0).unwrap();
        let cfg = SamplingConfig {
            samples_per_ray: 2,
            stratified: false,
            seed: 0,
        };
        let s = sample_ray(&ray, &cfg, 0).unwrap();
        assert_eq!(s.h, vec![0.25, 0.75]);
        assert_eq!(s.delta, vec![0.5, 0.5]);
    }

    #[test]
    fn stratified_within_bins() {
        let ray = Ray::new(Vec3::zeros(), Vec3::x(), 0.5, 4.0).unwrap();
        let cfg = SamplingConfig {
            samples_per_ray: 16,
            stratified: true,
            seed: 3,
        };
        for stream in 0..200 {
            let s = sample_ray(&ray, &cfg, stream).unwrap();
            let w = 3.5 / 16.0;
            for (i, h) in s.h.iter().enumerate() {
                assert!(*h >= 0.5 + i as f64 * w && *h < 0.5 + (i + 1) as f64 * w);
            }
            assert_eq!(s, sample_ray(&ray, &cfg, stream).unwrap());
        }
    }

    #[test]
    fn composite_reference_value() {
        let c = composite(&[0.3, 0.9], &[1.0, 2.0], &[0.5, 0.5]).unwrap();
        assert!((c.value - 0.463_101).abs() < 1e-5);
        let c = composite(&[0.7, 0.2], &[1e6, 1.0], &[0.5, 0.5]).unwrap();
        assert!((c.value - 0.7).abs() < 1e-12);
        let c = composite(&[0.5; 3], &[0.0; 3], &[0.1; 3]).unwrap();
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn single_sample_gradient() {
        let (s, d, t) = (0.8, 0.3, 0.6);
        let c = composite(&[t], &[s], &[d]).unwrap();
        let (gt, gs) = composite_backward(&[t], &[s], &[d], &c, 1.0).unwrap();
        assert!((gt[0] - c.weights[0]).abs() < 1e-15);
        assert!((gs[0] - d * libm::exp(-s * d) * t).abs() < 1e-15);
    }
}
