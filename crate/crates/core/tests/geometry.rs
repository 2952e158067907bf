use proptest::prelude::*;
use thermalfield_core::geometry::{
    apply_correction, interpolate_pose, pixel_ray, rotation_angle, se3_exp, se3_log, Intrinsics, Pose,
    PoseCorrection, SceneBox,
};
use thermalfield_core::synth::{look_at, perturb_poses};
use thermalfield_core::Vec3;

fn tangent(max_angle: f64) -> impl Strategy<Value = [f64; 6]> {
    (prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(-2.0..2.0f64), 0.0..max_angle).prop_map(
        |(axis, rho, angle)| {
            let a = Vec3::from(axis);
            let w = if a.norm() > 1e-6 { a.normalize() * angle } else { Vec3::zeros() };
            [w.x, w.y, w.z, rho[0], rho[1], rho[2]]
        },
    )
}

fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
    rotation_angle(a.rotation(), b.rotation()) < tol && (a.translation() - b.translation()).norm() < tol
}

proptest! {
    #[test]
    fn log_inverts_exp(xi in tangent(3.0)) {
        let back = se3_log(&se3_exp(&xi));
        for k in 0..6 {
            prop_assert!((back[k] - xi[k]).abs() < 1e-9, "{:?} vs {:?}", back, xi);
        }
    }

    #[test]
    fn exp_inverts_log(xi in tangent(3.0)) {
        let pose = se3_exp(&xi);
        prop_assert!(close(&se3_exp(&se3_log(&pose)), &pose, 1e-10));
    }

    #[test]
    fn compose_with_inverse_is_identity(xi in tangent(3.0)) {
        let p = se3_exp(&xi);
        prop_assert!(close(&p.compose(&p.inverse()), &Pose::identity(), 1e-12));
    }

    #[test]
    fn matrix_round_trip(xi in tangent(3.0)) {
        let p = se3_exp(&xi);
        prop_assert!(close(&Pose::from_matrix(&p.to_matrix()).unwrap(), &p, 1e-12));
    }
}

#[test]
fn tiny_tangents_stay_accurate() {
    let xi = [1e-9, -2e-9, 3e-9, 0.1, 0.2, 0.3];
    let p = se3_exp(&xi);
    let back = se3_log(&p);
    for k in 0..6 {
        assert!((back[k] - xi[k]).abs() < 1e-15);
    }
}

#[test]
fn correction_acts_on_the_world_side() {
    let pose = look_at(Vec3::new(2.0, 0.5, 0.3), Vec3::zeros()).unwrap();
    let corr = PoseCorrection {
        tangent: [0.0, 0.0, 0.0, 0.1, -0.2, 0.3],
    };
    let moved = apply_correction(&pose, &corr);
    assert!((moved.translation() - pose.translation() - Vec3::new(0.1, -0.2, 0.3)).norm() < 1e-15);
    assert_eq!(moved.rotation(), pose.rotation());
    assert_eq!(apply_correction(&pose, &PoseCorrection::zero()), pose);
}

#[test]
fn look_at_points_the_optical_axis_at_the_target() {
    let eye = Vec3::new(1.5, -2.0, 0.7);
    let target = Vec3::new(0.1, 0.2, -0.1);
    let pose = look_at(eye, target).unwrap();
    let axis = pose.rotate(&Vec3::z());
    assert!((axis - (target - eye).normalize()).norm() < 1e-12);
    assert!(look_at(eye, eye).is_err());
}

#[test]
fn principal_ray_projects_back_to_its_pixel() {
    let intr = Intrinsics::from_fov(32, 24, 0.9).unwrap();
    let pose = look_at(Vec3::new(0.0, -2.5, 0.5), Vec3::zeros()).unwrap();
    let ray = pixel_ray(&intr, &pose, 7, 19, 0.5, 4.0).unwrap();
    let cam = pose.inverse().transform_point(&ray.at(2.0));
    let (u, v) = intr.project(&cam);
    assert!((u - 7.5).abs() < 1e-9 && (v - 19.5).abs() < 1e-9);
    assert!(pixel_ray(&intr, &pose, 32, 0, 0.5, 4.0).is_err());
}

#[test]
fn perturbation_has_the_requested_size() {
    let poses: Vec<Pose> = (0..8)
        .map(|i| look_at(Vec3::new(2.0, i as f64 * 0.3 - 1.0, 0.5), Vec3::zeros()).unwrap())
        .collect();
    let noisy = perturb_poses(&poses, 1.0, 0.02, 2.0, 3).unwrap();
    for (a, b) in poses.iter().zip(&noisy) {
        assert!((rotation_angle(a.rotation(), b.rotation()) - 1f64.to_radians()).abs() < 1e-12);
        assert!(((a.translation() - b.translation()).norm() - 0.04).abs() < 1e-12);
    }
    assert_eq!(noisy, perturb_poses(&poses, 1.0, 0.02, 2.0, 3).unwrap());
}

#[test]
fn interpolation_hits_the_endpoints() {
    let a = se3_exp(&[0.1, 0.2, -0.3, 1.0, 0.0, 0.5]);
    let b = se3_exp(&[-0.4, 0.1, 0.2, 0.0, 1.0, -0.5]);
    assert!(close(&interpolate_pose(&a, &b, 0.0), &a, 1e-12));
    assert!(close(&interpolate_pose(&a, &b, 1.0), &b, 1e-12));
}

#[test]
fn box_contraction_round_trips() {
    let b = SceneBox::new(Vec3::new(-1.0, -0.5, 0.0), Vec3::new(1.0, 1.5, 3.0)).unwrap();
    let p = Vec3::new(0.3, 0.2, 2.9);
    assert!((b.uncontract(&b.contract(&p)) - p).norm() < 1e-15);
    assert!(b.contract(&b.max).iter().all(|c| (c - 1.0).abs() < 1e-15));
    assert!(SceneBox::new(Vec3::zeros(), Vec3::new(1.0, -1.0, 1.0)).is_err());
}
