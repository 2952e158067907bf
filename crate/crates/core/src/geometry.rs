//! Camera geometry: SE(3) poses, learnable pose corrections, pinhole rays,
//! scene-box contraction and pose interpolation.
//!
//! Poses are camera-to-world transforms stored as a unit quaternion (kept with
//! `w >= 0`) plus a translation. Cameras look down their local `+z` axis with
//! `+x` to the right and `+y` down the image.
//!
//! Tangent vectors are ordered `(ω, ρ)`: three rotation components followed
//! by three translation components. The exponential map is
//!
//! ```text
//! R = I + A(θ) W + B(θ) W²        t = V ρ,   V = I + B(θ) W + C(θ) W²
//! A = sin θ / θ,  B = (1 - cos θ) / θ²,  C = (θ - sin θ) / θ³
//! ```
//!
//! with `W = [ω]×` and `θ = |ω|`. Near zero the coefficients and their
//! derivatives switch to Taylor series.

use alloc::format;

use nalgebra::{Matrix3x6, Quaternion, Rotation3, UnitQuaternion};

use crate::{Error, Mat3, Result, Vec3};

/// Tangent vectors below this angle use series expansions.
const SERIES_THRESHOLD: f64 = 0.1;
const SERIES_TERMS: usize = 8;

#[derive(Debug, Clone, Copy)]
struct ExpCoeffs {
    a: f64,
    b: f64,
    c: f64,
    /// A'(θ)/θ, B'(θ)/θ, C'(θ)/θ
    da: f64,
    db: f64,
    dc: f64,
}

/// Σ (-1)^k θ^{2k} / (2k + offset)!  and its derivative divided by θ.
fn alternating_series(theta_sq: f64, offset: u32) -> (f64, f64) {
    let mut value = 0.0;
    let mut deriv = 0.0;
    // term_k = (-1)^k θ^{2k} / (2k+offset)!
    let mut factorial = 1.0;
    for i in 2..=offset {
        factorial *= f64::from(i);
    }
    let mut coeff = 1.0 / factorial;
    let mut power = 1.0; // θ^{2k}
    let mut power_prev = 0.0; // θ^{2k-2}
    for k in 0..SERIES_TERMS {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        value += sign * coeff * power;
        if k > 0 {
            deriv += sign * coeff * (2.0 * k as f64) * power_prev;
        }
        power_prev = power;
        power *= theta_sq;
        let n = (2 * k as u32 + offset) as f64;
        coeff /= (n + 1.0) * (n + 2.0);
    }
    (value, deriv)
}

fn exp_coeffs(theta_sq: f64) -> ExpCoeffs {
    let theta = libm::sqrt(theta_sq);
    if theta < SERIES_THRESHOLD {
        let (a, da) = alternating_series(theta_sq, 1);
        let (b, db) = alternating_series(theta_sq, 2);
        let (c, dc) = alternating_series(theta_sq, 3);
        return ExpCoeffs { a, b, c, da, db, dc };
    }
    let (s, co) = (libm::sin(theta), libm::cos(theta));
    let half = libm::sin(0.5 * theta);
    let one_minus_cos = 2.0 * half * half;
    let t2 = theta_sq;
    let t3 = t2 * theta;
    let t4 = t2 * t2;
    let t5 = t4 * theta;
    ExpCoeffs {
        a: s / theta,
        b: one_minus_cos / t2,
        c: (theta - s) / t3,
        da: (theta * co - s) / t3,
        db: (theta * s - 2.0 * one_minus_cos) / t4,
        dc: one_minus_cos / t4 - 3.0 * (theta - s) / t5,
    }
}

#[inline]
fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let raw = if raw.w < 0.0 { -raw } else { raw };
    UnitQuaternion::new_normalize(raw)
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    /// From coefficients that are already unit length to within `1e-9`, kept
    /// bit for bit. Used to restore a pose saved with [`Pose::wxyz`].
    pub fn from_unit_wxyz(q: [f64; 4], translation: Vec3) -> Result<Self> {
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        if !((raw.norm() - 1.0).abs() <= 1e-9) || !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pose needs a finite unit quaternion, got {q:?}"
            )));
        }
        let raw = if raw.w < 0.0 { -raw } else { raw };
        Ok(Self {
            rotation: UnitQuaternion::new_unchecked(raw),
            translation,
        })
    }

    /// From quaternion coefficients `(w, x, y, z)`; they are normalized.
    pub fn from_wxyz(q: [f64; 4], translation: Vec3) -> Result<Self> {
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = raw.norm();
        if !(norm > 0.0) || !norm.is_finite() || !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pose needs a finite nonzero quaternion, got {q:?}"
            )));
        }
        Ok(Self::new(UnitQuaternion::new_normalize(raw), translation))
    }

    pub fn from_rotation_matrix(rotation: &Mat3, translation: Vec3) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// From a row-major 4×4 homogeneous matrix.
    pub fn from_matrix(m: &[f64; 16]) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("pose matrix has non-finite entries".into()));
        }
        let r = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let orth = (r.transpose() * r - Mat3::identity()).abs().max();
        let bottom = [m[12], m[13], m[14], m[15]];
        if orth > 1e-6 || r.determinant() < 0.0 || bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidConfig(format!(
                "pose matrix is not a rigid transform (orthogonality error {orth:.3e}, bottom row {bottom:?})"
            )));
        }
        Ok(Self::from_rotation_matrix(
            &r,
            Vec3::new(m[3], m[7], m[11]),
        ))
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_matrix(&self) -> [f64; 16] {
        let r = self.rotation_matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// Quaternion coefficients `(w, x, y, z)` with `w >= 0`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ rhs`: apply `rhs` first.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let rel = (a.inverse() * b).into_inner();
    2.0 * libm::atan2(rel.imag().norm(), libm::fabs(rel.w))
}

/// Closed-form SE(3) exponential of `(ω, ρ)`.
pub fn se3_exp(tangent: &[f64; 6]) -> Pose {
    let omega = Vec3::new(tangent[0], tangent[1], tangent[2]);
    let rho = Vec3::new(tangent[3], tangent[4], tangent[5]);
    let theta_sq = omega.norm_squared();
    let theta = libm::sqrt(theta_sq);
    // sin(θ/2)/θ
    let half_sinc = if theta < SERIES_THRESHOLD {
        0.5 * alternating_series(0.25 * theta_sq, 1).0
    } else {
        libm::sin(0.5 * theta) / theta
    };
    let q = Quaternion::new(
        libm::cos(0.5 * theta),
        half_sinc * omega.x,
        half_sinc * omega.y,
        half_sinc * omega.z,
    );
    let k = exp_coeffs(theta_sq);
    let w_rho = omega.cross(&rho);
    let translation = rho + k.b * w_rho + k.c * omega.cross(&w_rho);
    Pose::new(UnitQuaternion::new_normalize(q), translation)
}

/// SE(3) logarithm, inverse of [`se3_exp`] for rotation angles below π.
pub fn se3_log(pose: &Pose) -> [f64; 6] {
    let q = pose.rotation.quaternion();
    let v = q.imag();
    let n = v.norm();
    let scale = if n > 0.0 {
        2.0 * libm::atan2(n, q.w) / n
    } else {
        2.0 / q.w
    };
    let omega = v * scale;
    let theta_sq = omega.norm_squared();
    let theta = libm::sqrt(theta_sq);
    // (1 - A / (2B)) / θ²
    let d = if theta < SERIES_THRESHOLD {
        let t2 = theta_sq;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1_209_600.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * libm::cos(half) / libm::sin(half)) / theta_sq
    };
    let t = &pose.translation;
    let w_t = omega.cross(t);
    let rho = t - 0.5 * w_t + d * omega.cross(&w_t);
    [omega.x, omega.y, omega.z, rho.x, rho.y, rho.z]
}

/// Derivative with respect to ω of `a(θ) ω×v + b(θ) ω×(ω×v)`.
fn rodrigues_term_jacobian(omega: &Vec3, v: &Vec3, a: f64, da: f64, b: f64, db: f64) -> Mat3 {
    let w_v = omega.cross(v);
    let w_w_v = omega.cross(&w_v);
    (w_v * omega.transpose()) * da + (w_w_v * omega.transpose()) * db
        - hat(v) * a
        - (hat(&w_v) + hat(omega) * hat(v)) * b
}

/// `∂(R(ω) v) / ∂ω` for the exponential-map rotation.
pub fn exp_rotation_jacobian(omega: &Vec3, v: &Vec3) -> Mat3 {
    let k = exp_coeffs(omega.norm_squared());
    rodrigues_term_jacobian(omega, v, k.a, k.da, k.b, k.db)
}

/// `∂(exp(ξ) · p) / ∂ξ`, the 3×6 Jacobian of the exponential's action on a
/// point, exact at any tangent.
pub fn exp_action_jacobian(tangent: &[f64; 6], p: &Vec3) -> Matrix3x6<f64> {
    let omega = Vec3::new(tangent[0], tangent[1], tangent[2]);
    let rho = Vec3::new(tangent[3], tangent[4], tangent[5]);
    let k = exp_coeffs(omega.norm_squared());
    let d_omega = rodrigues_term_jacobian(&omega, p, k.a, k.da, k.b, k.db)
        + rodrigues_term_jacobian(&omega, &rho, k.b, k.db, k.c, k.dc);
    let w = hat(&omega);
    let v = Mat3::identity() + w * k.b + w * w * k.c;
    let mut jac = Matrix3x6::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&d_omega);
    jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&v);
    jac
}

/// Learnable se(3) correction applied on the world side of a pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseCorrection {
    pub tangent: [f64; 6],
}

impl PoseCorrection {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.tangent.iter().all(|v| v.is_finite())
    }
}

/// `exp(ξ) ∘ pose`.
pub fn apply_correction(pose: &Pose, corr: &PoseCorrection) -> Pose {
    if corr.tangent == [0.0; 6] {
        return *pose;
    }
    se3_exp(&corr.tangent).compose(pose)
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Centered principal point and a vertical field of view in radians.
    pub fn from_fov(width: usize, height: usize, fov_y: f64) -> Result<Self> {
        let f = 0.5 * height as f64 / libm::tan(0.5 * fov_y);
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && self.width >= 1
            && self.height >= 1
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame direction through the center of pixel `(u, v)`, z = 1.
    #[inline]
    pub fn camera_direction(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }
}

/// `r(h) = origin + h · direction` for `h ∈ [near, far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, near: f64, far: f64) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !(0.0 <= near && near < far) || !far.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "invalid ray bounds [{near}, {far}] or direction {direction:?}"
            )));
        }
        Ok(Self {
            origin,
            direction: direction / n,
            near,
            far,
        })
    }

    #[inline]
    pub fn at(&self, h: f64) -> Vec3 {
        self.origin + self.direction * h
    }
}

/// Ray through the center of pixel `(u, v)` of a camera at `pose`.
pub fn pixel_ray(
    intr: &Intrinsics,
    pose: &Pose,
    u: usize,
    v: usize,
    near: f64,
    far: f64,
) -> Result<Ray> {
    if u >= intr.width || v >= intr.height {
        return Err(Error::PixelOutOfBounds {
            u,
            v,
            width: intr.width,
            height: intr.height,
        });
    }
    let dir = pose.rotate(&intr.camera_direction(u, v));
    Ray::new(pose.translation, dir, near, far)
}

/// Axis-aligned box holding the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl SceneBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).all(|i| min[i] < max[i] && min[i].is_finite() && max[i].is_finite()) {
            Ok(Self { min, max })
        } else {
            Err(Error::InvalidConfig(format!(
                "scene box min {min:?} must be below max {max:?} on every axis"
            )))
        }
    }

    pub fn cube(half: f64) -> Result<Self> {
        Self::new(Vec3::repeat(-half), Vec3::repeat(half))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Affine map sending the box onto `[-1, 1]³`.
    #[inline]
    pub fn contract(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            2.0 * (p.x - self.min.x) / (self.max.x - self.min.x) - 1.0,
            2.0 * (p.y - self.min.y) / (self.max.y - self.min.y) - 1.0,
            2.0 * (p.z - self.min.z) / (self.max.z - self.min.z) - 1.0,
        )
    }

    pub fn uncontract(&self, q: &Vec3) -> Vec3 {
        Vec3::new(
            self.min.x + 0.5 * (q.x + 1.0) * (self.max.x - self.min.x),
            self.min.y + 0.5 * (q.y + 1.0) * (self.max.y - self.min.y),
            self.min.z + 0.5 * (q.z + 1.0) * (self.max.z - self.min.z),
        )
    }

    /// Diagonal of `∂contract/∂p`.
    #[inline]
    pub fn contract_scale(&self) -> Vec3 {
        self.extent().map(|e| 2.0 / e)
    }
}

/// Free-function form of [`SceneBox::contract`].
pub fn contract(point: &Vec3, scene_box: &SceneBox) -> Vec3 {
    scene_box.contract(point)
}

/// Shortest-arc spherical linear interpolation.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let a = q0.into_inner();
    let mut b = q1.into_inner();
    let mut dot = a.coords.dot(&b.coords);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let blended = if dot > 1.0 - 1e-12 {
        a * (1.0 - t) + b * t
    } else {
        let angle = libm::acos(dot.min(1.0));
        let s = libm::sin(angle);
        a * (libm::sin((1.0 - t) * angle) / s) + b * (libm::sin(t * angle) / s)
    };
    canonical(UnitQuaternion::new_normalize(blended))
}

/// Slerp on rotation, lerp on translation.
pub fn interpolate_pose(p0: &Pose, p1: &Pose, t: f64) -> Pose {
    let t = t.clamp(0.0, 1.0);
    Pose::new(
        slerp(&p0.rotation, &p1.rotation, t),
        p0.translation * (1.0 - t) + p1.translation * t,
    )
}
