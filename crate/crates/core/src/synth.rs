//! Analytic heat-source scenes with known ground truth.
//!
//! Each primitive contributes `amplitude · smoothstep(u)` with
//! `u = clamp(0.5 − sd / width, 0, 1)`, where `sd` is the signed distance to
//! its surface. The density therefore ramps from zero to the full amplitude
//! across a shell of thickness `width` centred on the surface.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{Unit, UnitQuaternion};
use rand::Rng;

use crate::dataset::{Dataset, DatasetMeta, Split};
use crate::field::FieldOutput;
use crate::geometry::{Intrinsics, Pose, SceneBox};
use crate::render::{render_image, RadianceSource, SamplingConfig};
use crate::rng::stream_rng;
use crate::{Error, Mat3, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Cuboid { half_extents: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: Vec3,
    pub amplitude: f64,
    pub thermal: f64,
    pub smoothing: f64,
}

impl Primitive {
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        let p = x - self.center;
        match self.shape {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Cuboid { half_extents } => {
                let q = p.abs() - half_extents;
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
        }
    }

    pub fn density(&self, x: &Vec3) -> f64 {
        let u = (0.5 - self.signed_distance(x) / self.smoothing).clamp(0.0, 1.0);
        self.amplitude * u * u * (3.0 - 2.0 * u)
    }

    /// Half-size of the axis-aligned box that contains the density support.
    fn reach(&self) -> Vec3 {
        let pad = Vec3::repeat(0.5 * self.smoothing);
        match self.shape {
            Shape::Sphere { radius } => Vec3::repeat(radius) + pad,
            Shape::Cuboid { half_extents } => half_extents + pad,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
    pub scene_box: SceneBox,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>, scene_box: SceneBox) -> Result<Self> {
        let scene = Self {
            primitives,
            scene_box,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            let r = p.reach();
            let inside = self.scene_box.contains(&(p.center - r)) && self.scene_box.contains(&(p.center + r));
            if !inside || !(0.0..=1.0).contains(&p.thermal) || !(p.amplitude >= 0.0) || !(p.smoothing > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "primitive {i} must lie inside the scene box with thermal in [0,1], \
                     amplitude >= 0 and smoothing > 0"
                )));
            }
        }
        Ok(())
    }

    /// An empty scene in the same box.
    pub fn empty(scene_box: SceneBox) -> Self {
        Self {
            primitives: Vec::new(),
            scene_box,
        }
    }

    /// Two hot spheres above a warm slab in `[-1, 1]³`.
    pub fn blobs() -> Self {
        let sphere = |center: Vec3, radius: f64, thermal: f64| Primitive {
            shape: Shape::Sphere { radius },
            center,
            amplitude: 12.0,
            thermal,
            smoothing: 0.15,
        };
        Self {
            primitives: vec![
                sphere(Vec3::new(0.35, 0.2, 0.1), 0.3, 0.95),
                sphere(Vec3::new(-0.4, -0.3, 0.05), 0.22, 0.8),
                Primitive {
                    shape: Shape::Cuboid {
                        half_extents: Vec3::new(0.55, 0.45, 0.12),
                    },
                    center: Vec3::new(0.0, 0.0, -0.4),
                    amplitude: 12.0,
                    thermal: 0.45,
                    smoothing: 0.15,
                },
            ],
            scene_box: SceneBox::cube(1.0).expect("unit cube is a valid box"),
        }
    }

    /// `(thermal, density)` at `x`.
    pub fn eval(&self, x: &Vec3) -> FieldOutput {
        let mut density = 0.0;
        let mut weighted = 0.0;
        for p in &self.primitives {
            let d = p.density(x);
            density += d;
            weighted += d * p.thermal;
        }
        let thermal = if density > 0.0 { weighted / density } else { 0.0 };
        FieldOutput { thermal, density }
    }
}

/// Free-function form of [`AnalyticScene::eval`].
pub fn scene_eval(scene: &AnalyticScene, x: &Vec3) -> FieldOutput {
    scene.eval(x)
}

impl RadianceSource for AnalyticScene {
    type Scratch = ();

    fn scratch(&self) {}

    fn query(&self, x: &Vec3, _d: &Vec3, _scratch: &mut ()) -> Result<FieldOutput> {
        Ok(self.eval(x))
    }
}

/// Camera at `position` looking at `target` with `+z` as world up.
pub fn look_at(position: Vec3, target: Vec3) -> Result<Pose> {
    let forward = (target - position)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidConfig("camera position coincides with its target".into()))?;
    let right = forward
        .cross(&Vec3::z())
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidConfig("camera looks straight along the up axis".into()))?;
    let down = forward.cross(&right);
    let rotation = Mat3::from_columns(&[right, down, forward]);
    Ok(Pose::from_rotation_matrix(&rotation, position))
}

/// `count` cameras evenly spaced in azimuth (starting at `+x`) on a circle
/// of `radius`, raised by `height`, all looking at `target`.
pub fn orbit_poses(count: usize, radius: f64, height: f64, target: Vec3) -> Result<Vec<Pose>> {
    if count < 2 {
        return Err(Error::InvalidConfig(format!("orbit needs at least 2 views, got {count}")));
    }
    (0..count)
        .map(|i| {
            let phi = TAU * i as f64 / count as f64;
            let (s, c) = libm::sincos(phi);
            look_at(target + Vec3::new(radius * c, radius * s, height), target)
        })
        .collect()
}

/// Fixture camera settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub views: usize,
    pub resolution: usize,
    pub fov_y_deg: f64,
    pub orbit_radius: f64,
    pub orbit_height: f64,
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    /// Every `holdout_every`-th view is held out for evaluation.
    pub holdout_every: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            views: 24,
            resolution: 64,
            fov_y_deg: 45.0,
            orbit_radius: 2.6,
            orbit_height: 0.8,
            near: 0.5,
            far: 4.0,
            samples: 256,
            holdout_every: 6,
        }
    }
}

/// Smallest sample count accepted for ground-truth rendering.
pub const MIN_GROUND_TRUTH_SAMPLES: usize = 256;

/// Renders every pose with unjittered midpoint sampling.
pub fn render_ground_truth(
    scene: &AnalyticScene,
    poses: &[Pose],
    intrinsics: &Intrinsics,
    near: f64,
    far: f64,
    samples: usize,
) -> Result<Dataset> {
    if samples < MIN_GROUND_TRUTH_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "ground truth needs at least {MIN_GROUND_TRUTH_SAMPLES} samples per ray, got {samples}"
        )));
    }
    let cfg = SamplingConfig {
        samples_per_ray: samples,
        stratified: false,
        seed: 0,
    };
    let images = poses
        .iter()
        .map(|p| render_image(scene, intrinsics, p, near, far, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        images,
        poses: poses.to_vec(),
        splits: vec![Split::Train; poses.len()],
        intrinsics: *intrinsics,
        scene_box: scene.scene_box,
        near,
        far,
        meta: DatasetMeta::default(),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Builds the orbit rig of `cfg` and renders `scene` from it.
pub fn fixture(scene: &AnalyticScene, cfg: &FixtureConfig) -> Result<Dataset> {
    let intr = Intrinsics::from_fov(cfg.resolution, cfg.resolution, cfg.fov_y_deg.to_radians())?;
    let poses = orbit_poses(cfg.views, cfg.orbit_radius, cfg.orbit_height, scene.scene_box.center())?;
    let mut ds = render_ground_truth(scene, &poses, &intr, cfg.near, cfg.far, cfg.samples)?;
    if cfg.holdout_every > 0 {
        ds.hold_out_every(cfg.holdout_every, cfg.holdout_every / 2);
    }
    Ok(ds)
}

/// The default blobs fixture.
pub fn default_fixture() -> Result<Dataset> {
    fixture(&AnalyticScene::blobs(), &FixtureConfig::default())
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let r = libm::sqrt((1.0 - z * z).max(0.0));
    let (s, c) = libm::sincos(phi);
    Vec3::new(r * c, r * s, z)
}

/// Applies a camera-frame rigid error to every pose: a rotation of exactly
/// `rot_deg` about a random axis and a translation of exactly
/// `trans_frac · diameter` in a random direction.
pub fn perturb_poses(poses: &[Pose], rot_deg: f64, trans_frac: f64, diameter: f64, seed: u64) -> Result<Vec<Pose>> {
    if !(rot_deg >= 0.0 && trans_frac >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "perturbation magnitudes must be non-negative, got {rot_deg} deg / {trans_frac}"
        )));
    }
    Ok(poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut rng = stream_rng(seed, i as u64);
            let axis = Unit::new_normalize(random_unit_vector(&mut rng));
            let dir = random_unit_vector(&mut rng);
            let noise = Pose::new(
                UnitQuaternion::from_axis_angle(&axis, rot_deg.to_radians()),
                dir * (trans_frac * diameter),
            );
            pose.compose(&noise)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle;

    #[test]
    fn far_and_center() {
        let s = AnalyticScene::blobs();
        let far = s.eval(&Vec3::new(0.95, -0.95, 0.95));
        assert_eq!(far.density, 0.0);
        assert_eq!(far.thermal, 0.0);
        let lone = AnalyticScene::new(
            vec![Primitive {
                shape: Shape::Sphere { radius: 0.3 },
                center: Vec3::new(0.1, 0.0, 0.0),
                amplitude: 7.0,
                thermal: 0.6,
                smoothing: 0.1,
            }],
            SceneBox::cube(1.0).unwrap(),
        )
        .unwrap();
        let c = lone.eval(&Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(c.density, 7.0);
        assert!((c.thermal - 0.6).abs() < 1e-15);
    }

    #[test]
    fn blobs_fit_in_box() {
        AnalyticScene::blobs().validate().unwrap();
    }

    #[test]
    fn orbit_geometry() {
        let target = Vec3::new(0.1, -0.2, 0.05);
        let poses = orbit_poses(4, 2.0, 0.5, target).unwrap();
        for (i, p) in poses.iter().enumerate() {
            let c = p.translation() - target;
            let az = libm::atan2(c.y, c.x).to_degrees().rem_euclid(360.0);
            assert!((az - 90.0 * i as f64).abs() < 1e-9);
            let axis = p.rotate(&Vec3::z());
            let to_target = target - p.translation();
            let off = (to_target - axis * axis.dot(&to_target)).norm();
            assert!(off < 1e-9);
            assert!((p.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_magnitudes() {
        let poses = orbit_poses(6, 2.6, 0.8, Vec3::zeros()).unwrap();
        let same = perturb_poses(&poses, 0.0, 0.0, 3.0, 1).unwrap();
        for (a, b) in poses.iter().zip(&same) {
            assert!((a.translation() - b.translation()).norm() < 1e-15);
            assert!(rotation_angle(a.rotation(), b.rotation()) < 1e-12);
        }
        let p = perturb_poses(&poses, 1.0, 0.02, 3.0, 5).unwrap();
        for (a, b) in poses.iter().zip(&p) {
            assert!((rotation_angle(a.rotation(), b.rotation()) - 1f64.to_radians()).abs() < 1e-9);
            assert!(((a.translation() - b.translation()).norm() - 0.06).abs() < 1e-12);
        }
        assert_eq!(p, perturb_poses(&poses, 1.0, 0.02, 3.0, 5).unwrap());
    }
}
